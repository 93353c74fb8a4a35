//! Scattering asymptotes and the wave operators `W_+-` (data to asymptote)
//! and `V_+-` (asymptote to data).

use serde::Serialize;

use crate::error::{Kp5Error, Result};
use crate::norms::{hm12_norm, l2_norm, NormReport};
use crate::propagator::{propagate, FieldTrajectory};
use crate::solver::{final_value_solve_dir, picard_solve_dir, Direction, IterationLog, SolverConfig};
use crate::spectral::{DispersionParams, SpectralField};

/// Fewest dyadic checkpoints from which a Cauchy tail is read.
pub const MIN_CHECKPOINTS: usize = 8;

/// Relative L2 mismatch tolerated between data and asymptote.
pub const L2_ISOMETRY_TOL: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct Asymptote {
    pub u_pm: SpectralField,
    /// Checkpoint times ordered by increasing `|t|`.
    pub checkpoints: Vec<f64>,
    /// `hm12(v(t_{i+1}) - v(t_i))` for consecutive checkpoints, `v = S(-t) u`.
    pub cauchy: Vec<f64>,
    pub warning: Option<String>,
}

/// `lim S(-t) u(t)` read at the extreme sample, with the Cauchy log over
/// `t_j = +-t_max / 2^j`.
pub fn extract_asymptote(traj: &FieldTrajectory, direction: Direction, params: &DispersionParams) -> Result<Asymptote> {
    let horizon = match direction {
        Direction::Plus => traj.t_end(),
        Direction::Minus => -traj.t0(),
    };
    let sign = match direction {
        Direction::Plus => 1.0,
        Direction::Minus => -1.0,
    };
    let mut checkpoints = Vec::new();
    let mut t = horizon;
    while t > 0.0 {
        match traj.index_of_time(sign * t) {
            Some(_) => checkpoints.push(sign * t),
            None => break,
        }
        t *= 0.5;
    }
    if checkpoints.len() < MIN_CHECKPOINTS {
        return Err(Kp5Error::Range(format!(
            "only {} dyadic checkpoints in the trajectory; {MIN_CHECKPOINTS} needed",
            checkpoints.len()
        )));
    }
    checkpoints.reverse();
    let frames: Vec<SpectralField> = checkpoints
        .iter()
        .map(|&t| propagate(traj.snapshot(traj.index_of_time(t).expect("checked")), -t, params))
        .collect();
    let cauchy: Vec<f64> = frames.windows(2).map(|w| hm12_norm(&w[1].sub(&w[0]).expect("one grid"))).collect();
    let tail = &cauchy[cauchy.len() - 3..];
    let warning = tail.windows(2).any(|w| w[1] > w[0]).then(|| {
        format!("Cauchy differences grow over the last checkpoints ({tail:?}); the solution may not scatter on this window")
    });
    Ok(Asymptote { u_pm: frames.last().expect("nonempty").clone(), checkpoints, cauchy, warning })
}

/// A solved trajectory together with its asymptote.
#[derive(Clone, Debug)]
pub struct Scattered {
    pub trajectory: FieldTrajectory,
    pub log: IterationLog,
    pub asymptote: Asymptote,
}

pub fn scatter(u0: &SpectralField, direction: Direction, params: &DispersionParams, cfg: &SolverConfig) -> Result<Scattered> {
    let (trajectory, log) = picard_solve_dir(u0, direction, params, cfg)?;
    let asymptote = extract_asymptote(&trajectory, direction, params)?;
    Ok(Scattered { trajectory, log, asymptote })
}

fn check_isometry(from: &SpectralField, to: &SpectralField, op: &str) -> Result<()> {
    let (a, b) = (l2_norm(from), l2_norm(to));
    if a == 0.0 && b == 0.0 {
        return Ok(());
    }
    let rel = (b / a - 1.0).abs();
    if !(rel <= L2_ISOMETRY_TOL) {
        return Err(Kp5Error::Assertion(format!(
            "scattering::{op}: L2 norm not preserved, |{b:.12e} / {a:.12e} - 1| = {rel:.3e} > {L2_ISOMETRY_TOL:.0e}"
        )));
    }
    Ok(())
}

/// `W_+-(u0) = lim S(-t) u(t)`.
pub fn wave_operator(u0: &SpectralField, direction: Direction, params: &DispersionParams, cfg: &SolverConfig) -> Result<SpectralField> {
    let s = scatter(u0, direction, params, cfg)?;
    check_isometry(u0, &s.asymptote.u_pm, "wave_operator")?;
    Ok(s.asymptote.u_pm)
}

/// `V_+-(u_pm)`: the `t = 0` value of the solution with the given asymptote.
pub fn inverse_wave_operator(u_pm: &SpectralField, direction: Direction, params: &DispersionParams, cfg: &SolverConfig) -> Result<SpectralField> {
    let (traj, _) = final_value_solve_dir(u_pm, direction, params, cfg)?;
    let idx = traj.index_of_time(0.0).expect("t = 0 is an end point");
    let u0 = traj.snapshot(idx).clone();
    check_isometry(u_pm, &u0, "inverse_wave_operator")?;
    Ok(u0)
}

pub const DERIVATIVE_EPS: [f64; 2] = [1e-2, 1e-3];

#[derive(Clone, Debug, Serialize)]
pub struct DerivativeReport {
    pub eps: Vec<f64>,
    /// `hm12(D_eps - h) / hm12(h)`: distance of each central difference from `h`.
    pub error_vs_h: Vec<f64>,
    /// Same for the Richardson extrapolation of the two differences.
    pub richardson_error_vs_h: f64,
    /// `hm12(D_eps1 - D_eps2) / hm12(h)`.
    pub level_gap: f64,
    /// `error_vs_h[0] / error_vs_h[1]`; about 100 for a second-order difference.
    pub order_ratio: f64,
    #[serde(skip)]
    pub richardson: SpectralField,
}

/// Central differences of `W_+` at `u0` in direction `h`.
pub fn directional_derivative_check(
    u0: &SpectralField,
    h: &SpectralField,
    params: &DispersionParams,
    cfg: &SolverConfig,
) -> Result<DerivativeReport> {
    u0.same_grid(h)?;
    let hh = hm12_norm(h);
    let mut diffs = Vec::new();
    for &eps in &DERIVATIVE_EPS {
        let plus = u0.axpy(eps, h)?;
        let minus = u0.axpy(-eps, h)?;
        for d in [&plus, &minus] {
            if hm12_norm(d) > cfg.small_data_delta * (1.0 + 1e-12) {
                return Err(Kp5Error::Domain(format!(
                    "u0 +- {eps} h leaves the small-data ball (hm12 = {:.3e})",
                    hm12_norm(d)
                )));
            }
        }
        let wp = wave_operator(&plus, Direction::Plus, params, cfg)?;
        let wm = wave_operator(&minus, Direction::Plus, params, cfg)?;
        diffs.push(wp.sub(&wm)?.scale(0.5 / eps));
    }
    let r = (DERIVATIVE_EPS[0] / DERIVATIVE_EPS[1]).powi(2);
    let richardson = diffs[1].scale(r / (r - 1.0)).axpy(-1.0 / (r - 1.0), &diffs[0])?;
    let rel = |f: &SpectralField| if hh == 0.0 { hm12_norm(f) } else { hm12_norm(f) / hh };
    let error_vs_h: Vec<f64> = diffs.iter().map(|d| rel(&d.sub(h).expect("one grid"))).collect();
    Ok(DerivativeReport {
        eps: DERIVATIVE_EPS.to_vec(),
        order_ratio: error_vs_h[0] / error_vs_h[1],
        richardson_error_vs_h: rel(&richardson.sub(h)?),
        level_gap: rel(&diffs[0].sub(&diffs[1])?),
        error_vs_h,
        richardson,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScatteringReport {
    pub u0_norms: NormReport,
    pub u_plus_norms: NormReport,
    pub cauchy_log: Vec<f64>,
    pub l2_defect: f64,
    pub roundtrip_defect: Option<f64>,
}

impl ScatteringReport {
    pub fn new(u0: &SpectralField, asym: &Asymptote, roundtrip: Option<&SpectralField>) -> Self {
        let (a, b) = (l2_norm(u0), l2_norm(&asym.u_pm));
        ScatteringReport {
            u0_norms: NormReport::of_field(u0),
            u_plus_norms: NormReport::of_field(&asym.u_pm),
            cauchy_log: asym.cauchy.clone(),
            l2_defect: if a == 0.0 { b } else { (b / a - 1.0).abs() },
            roundtrip_defect: roundtrip.map(|r| hm12_norm(&r.sub(u0).expect("one grid")) / hm12_norm(u0)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{gaussian_packet, Grid};
    use std::f64::consts::PI;

    fn params() -> DispersionParams {
        DispersionParams::new(1.0).unwrap()
    }

    fn packet(grid: Grid, hm12: f64) -> SpectralField {
        let f = gaussian_packet(grid, 0.75, 0.25, 0.25, 2.0 / 3.0);
        f.scale(hm12 / hm12_norm(&f))
    }

    fn small_cfg() -> SolverConfig {
        SolverConfig { t_max: 4.0, dt: 1.0 / 64.0, picard_tol: 1e-12, ..SolverConfig::default() }
    }

    fn grid() -> Grid {
        Grid::new(32, 32, 32.0 * PI, 32.0 * PI).unwrap()
    }

    #[test]
    fn free_wave_asymptote_is_exact() {
        let p = params();
        let phi = packet(grid(), 1.0);
        let traj = FieldTrajectory::free_wave(&phi, 0.0, 1.0 / 64.0, 257, &p).unwrap();
        let a = extract_asymptote(&traj, Direction::Plus, &p).unwrap();
        assert!(a.checkpoints.len() >= MIN_CHECKPOINTS);
        assert_eq!(*a.checkpoints.last().unwrap(), 4.0);
        assert!(hm12_norm(&a.u_pm.sub(&phi).unwrap()) < 1e-14 * hm12_norm(&phi));
        assert!(a.cauchy.iter().all(|&d| d < 1e-14 * hm12_norm(&phi)));
    }

    #[test]
    fn short_trajectory_rejected() {
        let p = params();
        let traj = FieldTrajectory::free_wave(&packet(grid(), 1.0), 0.0, 0.25, 9, &p).unwrap();
        assert!(matches!(extract_asymptote(&traj, Direction::Plus, &p), Err(Kp5Error::Range(_))));
    }

    #[test]
    fn zero_maps_to_zero() {
        let z = SpectralField::zeros(grid());
        let p = params();
        assert!(wave_operator(&z, Direction::Plus, &p, &small_cfg()).unwrap().is_zero());
        assert!(inverse_wave_operator(&z, Direction::Minus, &p, &small_cfg()).unwrap().is_zero());
    }

    #[test]
    fn linear_wave_operators_are_identity() {
        let p = params();
        let c = SolverConfig { nonlinear: false, ..small_cfg() };
        let u0 = packet(grid(), 1e-3);
        for d in [Direction::Plus, Direction::Minus] {
            let w = wave_operator(&u0, d, &p, &c).unwrap();
            assert!(hm12_norm(&w.sub(&u0).unwrap()) <= 1e-12 * hm12_norm(&u0));
            let v = inverse_wave_operator(&u0, d, &p, &c).unwrap();
            assert!(hm12_norm(&v.sub(&u0).unwrap()) <= 1e-12 * hm12_norm(&u0));
        }
    }

    #[test]
    fn reflection_exchanges_directions() {
        let p = params();
        let u0 = packet(grid(), 1e-3).map_modes(|xi, eta, c| c * crate::spectral::C64::cis(2.0 * xi - eta));
        let plus = wave_operator(&u0, Direction::Plus, &p, &small_cfg()).unwrap();
        let minus = wave_operator(&u0.reflect_x(), Direction::Minus, &p, &small_cfg()).unwrap();
        let err = hm12_norm(&minus.sub(&plus.reflect_x()).unwrap()) / hm12_norm(&u0);
        assert!(err < 1e-8, "{err:.3e}");
    }

    #[test]
    fn nonlinear_correction_is_quadratic() {
        let p = params();
        let d = [4e-4, 2e-4, 1e-4].map(|a| {
            let u0 = packet(grid(), a);
            let w = wave_operator(&u0, Direction::Plus, &p, &small_cfg()).unwrap();
            hm12_norm(&w.sub(&u0).unwrap())
        });
        assert!(d.iter().all(|&x| x > 0.0));
        for w in d.windows(2) {
            let q = w[0] / w[1];
            assert!((q / 4.0 - 1.0).abs() < 0.3, "{d:?}");
        }
    }

    #[test]
    fn report_json_fields() {
        let p = params();
        let u0 = packet(grid(), 1e-3);
        let s = scatter(&u0, Direction::Plus, &p, &small_cfg()).unwrap();
        let json = ScatteringReport::new(&u0, &s.asymptote, None).to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for k in ["u0_norms", "u_plus_norms", "cauchy_log", "l2_defect", "roundtrip_defect"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert!(v["u0_norms"]["Hm12"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn zero_direction_has_zero_derivative() {
        let z = SpectralField::zeros(grid());
        let r = directional_derivative_check(&z, &z, &params(), &small_cfg()).unwrap();
        assert!(r.richardson.is_zero());
    }
}
