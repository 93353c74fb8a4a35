//! Duhamel form and Picard iteration for the integral equation
//! `u(t) = S(t) u0 - I(u, u)(t)`, with `I(u,v)(t) = 1/2 int_0^t S(t-s) (uv)_x ds`.
//!
//! All quadrature happens in the frame `w(t) = S(-t) u(t)`, where the stiff
//! linear phase is exact and only the slowly varying increment
//! `g(s) = S(-s) 1/2 (u^2)_x (s)` is integrated (cumulative Simpson).

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Kp5Error, Result};
use crate::norms::{decimate, hm12_norm, l2_norm, ydot_from_samples, DEFAULT_NORM_SAMPLES};
use crate::propagator::{propagate, DyadicLadder, FieldTrajectory};
use crate::spectral::{to_physical, to_spectral, DispersionParams, Grid, SpectralField, C64};

/// Largest admissible `dt * max|p|` over the retained modes.
pub const MAX_PHASE_STEP: f64 = 0.5;

/// Consecutive non-contracting iterations tolerated before giving up.
const DIVERGENCE_STREAK: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Duhamel horizon standing in for `T` and for infinity.
    pub t_max: f64,
    pub dt: f64,
    pub dealias_fraction: f64,
    /// Stop once the Y-surrogate of the last update, relative to the
    /// Y-surrogate of the iterate, drops below this.
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    /// Radius of the admissible data ball in `H^{-1/2,0}`.
    pub small_data_delta: f64,
    /// Test hook: with `false` the nonlinearity is switched off.
    pub nonlinear: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            t_max: 32.0,
            dt: 1.0 / 64.0,
            dealias_fraction: 2.0 / 3.0,
            picard_tol: 1e-6,
            picard_max_iters: 50,
            small_data_delta: 1e-3,
            nonlinear: true,
        }
    }
}

impl SolverConfig {
    /// Checks the configuration against a grid; returns the number of steps.
    pub fn validate(&self, grid: &Grid, params: &DispersionParams) -> Result<usize> {
        for (name, v) in [
            ("t_max", self.t_max),
            ("dt", self.dt),
            ("picard_tol", self.picard_tol),
            ("small_data_delta", self.small_data_delta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Kp5Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.dealias_fraction > 0.0 && self.dealias_fraction <= 1.0) {
            return Err(Kp5Error::Domain(format!("dealias_fraction {} not in (0, 1]", self.dealias_fraction)));
        }
        if self.picard_max_iters == 0 {
            return Err(Kp5Error::Domain("picard_max_iters must be positive".into()));
        }
        let steps = self.t_max / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) || steps.round() < 2.0 {
            return Err(Kp5Error::Domain(format!(
                "t_max={} is not a multiple (>= 2) of dt={}",
                self.t_max, self.dt
            )));
        }
        let phase = self.dt * params.max_abs_symbol(grid, self.dealias_fraction);
        if phase > MAX_PHASE_STEP {
            return Err(Kp5Error::Constraint(format!(
                "dt * max|p| = {phase:.4} exceeds {MAX_PHASE_STEP}; reduce dt below {:.3e}",
                MAX_PHASE_STEP * self.dt / phase
            )));
        }
        Ok(steps.round() as usize)
    }
}

/// The ramp `alpha_T`: 0 before `T - 1`, linear on `[T - 1, T]`, 1 after.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffProfile {
    pub t_cut: f64,
}

impl CutoffProfile {
    pub fn value(&self, t: f64) -> f64 {
        if t < self.t_cut - 1.0 {
            0.0
        } else if t >= self.t_cut {
            1.0
        } else {
            t - self.t_cut + 1.0
        }
    }
}

/// Time weight applied to the Duhamel integrand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cutoff {
    /// Characteristic function of `[0, T]`; `T` must be a sample time.
    Indicator(f64),
    /// Multiply by `alpha_T(s)`.
    Ramp(CutoffProfile),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Plus,
    Minus,
}

/// `1/2 (uv)_x` with the product formed in physical space and dealiased.
pub fn bilinear_nonlinearity(u: &SpectralField, v: &SpectralField, fraction: f64) -> Result<SpectralField> {
    u.same_grid(v)?;
    let g = *u.grid();
    let pu = to_physical(&u.truncate(fraction));
    let pv = to_physical(&v.truncate(fraction));
    let prod: Vec<f64> = pu.iter().zip(&pv).map(|(a, b)| a * b).collect();
    let (w, _) = to_spectral(&prod, g)?;
    Ok(w.truncate(fraction).map_modes(|xi, _, c| c * C64::new(0.0, 0.5 * xi)))
}

/// `sum_i a_i f_i` on raw coefficients.
fn lincomb(terms: &[(f64, &SpectralField)]) -> SpectralField {
    let g = *terms[0].1.grid();
    let mut out = vec![C64::new(0.0, 0.0); g.len()];
    for (a, f) in terms {
        for (o, c) in out.iter_mut().zip(f.coeffs()) {
            *o += c * a;
        }
    }
    SpectralField::from_raw(g, out).expect("same grid")
}

/// Cumulative integral `C_m = int_0^m g` of unit-spaced samples: composite
/// Simpson on even `m`, Simpson plus a closing 3/8 panel on odd `m >= 3`.
pub fn cumulative_simpson(g: &[SpectralField]) -> Vec<SpectralField> {
    let n = g.len();
    let mut c = Vec::with_capacity(n);
    c.push(SpectralField::zeros(*g[0].grid()));
    if n == 1 {
        return c;
    }
    if n == 2 {
        c.push(lincomb(&[(0.5, &g[0]), (0.5, &g[1])]));
        return c;
    }
    c.push(lincomb(&[(5.0 / 12.0, &g[0]), (8.0 / 12.0, &g[1]), (-1.0 / 12.0, &g[2])]));
    for m in 2..n {
        let next = if m % 2 == 0 {
            lincomb(&[(1.0, &c[m - 2]), (1.0 / 3.0, &g[m - 2]), (4.0 / 3.0, &g[m - 1]), (1.0 / 3.0, &g[m])])
        } else {
            lincomb(&[
                (1.0, &c[m - 3]),
                (3.0 / 8.0, &g[m - 3]),
                (9.0 / 8.0, &g[m - 2]),
                (9.0 / 8.0, &g[m - 1]),
                (3.0 / 8.0, &g[m]),
            ])
        };
        c.push(next);
    }
    c
}

/// Samples at ascending times `t0 + m dt` with the integration anchored at
/// the first (`anchor_first`) or the last sample.
struct Sampling {
    t0: f64,
    dt: f64,
    n: usize,
    anchor_first: bool,
}

impl Sampling {
    fn time(&self, m: usize) -> f64 {
        self.t0 + m as f64 * self.dt
    }

    /// Storage index of the `j`-th sample counted from the anchor.
    fn from_anchor(&self, j: usize) -> usize {
        if self.anchor_first {
            j
        } else {
            self.n - 1 - j
        }
    }

    fn signed_step(&self) -> f64 {
        if self.anchor_first {
            self.dt
        } else {
            -self.dt
        }
    }
}

/// `S(t_m) int_anchor^{t_m} weight(s) S(-s) 1/2 (u v)_x ds` at every sample.
fn anchored_duhamel(
    u: &[SpectralField],
    v: &[SpectralField],
    sampling: &Sampling,
    weight: impl Fn(f64) -> f64,
    hold_after: Option<usize>,
    params: &DispersionParams,
    fraction: f64,
) -> Result<Vec<SpectralField>> {
    let n = sampling.n;
    let mut g = Vec::with_capacity(n);
    for j in 0..n {
        let m = sampling.from_anchor(j);
        let t = sampling.time(m);
        let w = weight(t);
        let held = hold_after.is_some_and(|h| j > h);
        g.push(if w == 0.0 || held {
            SpectralField::zeros(*u[0].grid())
        } else {
            propagate(&bilinear_nonlinearity(&u[m], &v[m], fraction)?, -t, params).scale(w)
        });
    }
    let mut c = cumulative_simpson(&g);
    if let Some(h) = hold_after {
        for j in h + 1..n {
            c[j] = c[h].clone();
        }
    }
    drop(g);
    let step = sampling.signed_step();
    let mut out: Vec<SpectralField> = (0..n).map(|_| SpectralField::zeros(*u[0].grid())).collect();
    for (j, cj) in c.into_iter().enumerate() {
        let m = sampling.from_anchor(j);
        out[m] = propagate(&cj.scale(step), sampling.time(m), params);
    }
    Ok(out)
}

/// The bilinear Duhamel term `I(u, v)` sampled along aligned trajectories.
/// The lower limit is `0`, which must be the first or the last sample time.
pub fn duhamel(
    u: &FieldTrajectory,
    v: &FieldTrajectory,
    cutoff: Option<Cutoff>,
    params: &DispersionParams,
    cfg: &SolverConfig,
) -> Result<FieldTrajectory> {
    u.aligned_with(v)?;
    let n = u.len();
    let anchor_first = if u.t0() == 0.0 {
        true
    } else if u.t_end().abs() <= 1e-12 * u.dt() {
        false
    } else {
        return Err(Kp5Error::Domain(format!(
            "Duhamel integrals start at t = 0; trajectory spans [{}, {}]",
            u.t0(),
            u.t_end()
        )));
    };
    let sampling = Sampling { t0: u.t0(), dt: u.dt(), n, anchor_first };
    let (ramp, hold) = match cutoff {
        None => (None, None),
        Some(Cutoff::Ramp(p)) => (Some(p), None),
        Some(Cutoff::Indicator(t_cut)) => {
            let j = t_cut.abs() / u.dt();
            if (j - j.round()).abs() > 1e-9 || t_cut < 0.0 {
                return Err(Kp5Error::Domain(format!("cutoff T={t_cut} is not a nonnegative sample time")));
            }
            (None, Some(j.round() as usize))
        }
    };
    let weight = |t: f64| ramp.map_or(1.0, |p| p.value(t));
    let out = anchored_duhamel(u.snapshots(), v.snapshots(), &sampling, weight, hold, params, cfg.dealias_fraction)?;
    FieldTrajectory::new(u.t0(), u.dt(), out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRow {
    pub iter: usize,
    pub ydot_diff: f64,
    pub zdot_surrogate: f64,
    pub l2_at_tmax: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IterationLog {
    pub rows: Vec<IterationRow>,
}

impl IterationLog {
    /// Ratios of successive update sizes.
    pub fn ratios(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[1].ydot_diff / w[0].ydot_diff).collect()
    }

    pub fn last_diff(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.ydot_diff)
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r).map_err(|e| Kp5Error::Format(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Picard iteration `u <- S(t) w_anchor - I_anchor(u, u)` on a fixed sampling.
fn picard_core(
    anchor_value: &SpectralField,
    sampling: Sampling,
    params: &DispersionParams,
    cfg: &SolverConfig,
) -> Result<(FieldTrajectory, IterationLog)> {
    let start = Instant::now();
    let grid = *anchor_value.grid();
    let ladder = DyadicLadder::for_grid(&grid);
    let n = sampling.n;
    let times: Vec<f64> = (0..n).map(|m| sampling.time(m)).collect();
    let linear: Vec<SpectralField> = times.iter().map(|&t| propagate(anchor_value, t, params)).collect();
    let mut log = IterationLog::default();
    let tmax_index = if sampling.anchor_first { n - 1 } else { 0 };
    if !cfg.nonlinear || anchor_value.is_zero() {
        log.rows.push(IterationRow {
            iter: 1,
            ydot_diff: 0.0,
            zdot_surrogate: 0.0,
            l2_at_tmax: l2_norm(&linear[tmax_index]),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        return Ok((FieldTrajectory::new(sampling.t0, sampling.dt, linear)?, log));
    }
    let sel = decimate(n, DEFAULT_NORM_SAMPLES);
    let sel_times: Vec<f64> = sel.iter().map(|&m| times[m]).collect();
    let mut u = linear.clone();
    let mut streak = 0;
    for iter in 1..=cfg.picard_max_iters {
        let corr = anchored_duhamel(&u, &u, &sampling, |_| 1.0, None, params, cfg.dealias_fraction)?;
        let next: Vec<SpectralField> = linear.iter().zip(&corr).map(|(l, c)| lincomb(&[(1.0, l), (-1.0, c)])).collect();
        let diffs: Vec<SpectralField> = sel.iter().map(|&m| lincomb(&[(1.0, &next[m]), (-1.0, &u[m])])).collect();
        let diff = ydot_from_samples(&sel_times, &diffs.iter().collect::<Vec<_>>(), -0.5, params, &ladder);
        let size = ydot_from_samples(&sel_times, &sel.iter().map(|&m| &next[m]).collect::<Vec<_>>(), -0.5, params, &ladder);
        let prev = log.rows.last().map(|r| r.ydot_diff);
        log.rows.push(IterationRow {
            iter,
            ydot_diff: diff,
            zdot_surrogate: size,
            l2_at_tmax: l2_norm(&next[tmax_index]),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        u = next;
        if diff <= cfg.picard_tol * size {
            return Ok((FieldTrajectory::new(sampling.t0, sampling.dt, u)?, log));
        }
        if prev.is_some_and(|p| diff >= p) {
            streak += 1;
            if streak >= DIVERGENCE_STREAK {
                return Err(Kp5Error::Divergence(format!(
                    "Picard updates stopped contracting (last {diff:.3e} after {iter} iterations); use smaller data"
                )));
            }
        } else {
            streak = 0;
        }
    }
    Err(Kp5Error::NonConvergence(format!(
        "Picard iteration reached {} iterations with relative update {:.3e} > {:.1e}",
        cfg.picard_max_iters,
        log.last_diff() / log.rows.last().map_or(1.0, |r| r.zdot_surrogate),
        cfg.picard_tol
    )))
}

fn check_ball(f: &SpectralField, radius: f64) -> Result<()> {
    let h = hm12_norm(f);
    // the boundary of the ball is admitted so that data normalized to delta qualify
    if h > radius * (1.0 + 1e-12) {
        return Err(Kp5Error::Domain(format!("data outside the small-data ball: hm12 = {h:.3e} > {radius:.3e}")));
    }
    Ok(())
}

/// Forward solution on `[0, t_max]`.
pub fn picard_solve(u0: &SpectralField, params: &DispersionParams, cfg: &SolverConfig) -> Result<(FieldTrajectory, IterationLog)> {
    picard_solve_dir(u0, Direction::Plus, params, cfg)
}

/// Solution on `[0, t_max]` (plus) or `[-t_max, 0]` (minus) from data at `t = 0`.
pub fn picard_solve_dir(
    u0: &SpectralField,
    direction: Direction,
    params: &DispersionParams,
    cfg: &SolverConfig,
) -> Result<(FieldTrajectory, IterationLog)> {
    let steps = cfg.validate(u0.grid(), params)?;
    check_ball(u0, cfg.small_data_delta)?;
    let sampling = match direction {
        Direction::Plus => Sampling { t0: 0.0, dt: cfg.dt, n: steps + 1, anchor_first: true },
        Direction::Minus => Sampling { t0: -(steps as f64) * cfg.dt, dt: cfg.dt, n: steps + 1, anchor_first: false },
    };
    picard_core(u0, sampling, params, cfg)
}

/// Solution on `[0, t_max]` with `S(-t_max) u(t_max) = u_plus`; the tail
/// beyond `t_max` is dropped. The `t = 0` snapshot is the recovered datum.
pub fn final_value_solve(u_plus: &SpectralField, params: &DispersionParams, cfg: &SolverConfig) -> Result<(FieldTrajectory, IterationLog)> {
    final_value_solve_dir(u_plus, Direction::Plus, params, cfg)
}

pub fn final_value_solve_dir(
    u_pm: &SpectralField,
    direction: Direction,
    params: &DispersionParams,
    cfg: &SolverConfig,
) -> Result<(FieldTrajectory, IterationLog)> {
    let steps = cfg.validate(u_pm.grid(), params)?;
    // W maps the delta ball into a slightly larger one
    check_ball(u_pm, 2.0 * cfg.small_data_delta)?;
    let sampling = match direction {
        Direction::Plus => Sampling { t0: 0.0, dt: cfg.dt, n: steps + 1, anchor_first: false },
        Direction::Minus => Sampling { t0: -(steps as f64) * cfg.dt, dt: cfg.dt, n: steps + 1, anchor_first: true },
    };
    picard_core(u_pm, sampling, params, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::gaussian_packet;
    use std::f64::consts::PI;

    fn params() -> DispersionParams {
        DispersionParams::new(1.0).unwrap()
    }

    fn grid() -> Grid {
        Grid::new(32, 32, 32.0 * PI, 32.0 * PI).unwrap()
    }

    fn packet(hm12: f64) -> SpectralField {
        let f = gaussian_packet(grid(), 0.75, 0.25, 0.25, 2.0 / 3.0);
        f.scale(hm12 / hm12_norm(&f))
    }

    fn cfg(t_max: f64, dt: f64) -> SolverConfig {
        SolverConfig { t_max, dt, ..SolverConfig::default() }
    }

    #[test]
    fn ramp_profile_knots() {
        let p = CutoffProfile { t_cut: 4.0 };
        assert_eq!(p.value(2.9), 0.0);
        assert_eq!(p.value(3.0), 0.0);
        assert_eq!(p.value(3.5), 0.5);
        assert_eq!(p.value(4.0), 1.0);
        assert_eq!(p.value(10.0), 1.0);
    }

    #[test]
    fn config_rejects_stiff_step() {
        let c = cfg(1.0, 0.25);
        assert!(matches!(c.validate(&grid(), &params()), Err(Kp5Error::Constraint(_))));
        assert_eq!(cfg(1.0, 1.0 / 64.0).validate(&grid(), &params()).unwrap(), 64);
        assert!(cfg(1.0, 0.3).validate(&grid(), &params()).is_err());
    }

    #[test]
    fn nonlinearity_zero_and_symmetric() {
        let u = packet(1.0);
        let v = packet(1.0).map_modes(|xi, eta, c| c * C64::cis(xi + 2.0 * eta));
        let z = SpectralField::zeros(grid());
        assert!(bilinear_nonlinearity(&u, &z, 2.0 / 3.0).unwrap().is_zero());
        let a = bilinear_nonlinearity(&u, &v, 2.0 / 3.0).unwrap();
        let b = bilinear_nonlinearity(&v, &u, 2.0 / 3.0).unwrap();
        assert_eq!(a.coeffs(), b.coeffs());
        a.check_invariants().unwrap();
    }

    #[test]
    fn nonlinearity_of_two_cosines() {
        let g = grid();
        let mode = |j: i64| {
            let mut f = SpectralField::zeros(g);
            f.set_pair(Grid::storage(j, g.nx), 0, C64::new(0.5, 0.0));
            f
        };
        let out = bilinear_nonlinearity(&mode(2), &mode(5), 2.0 / 3.0).unwrap();
        for (ix, iy) in g.half_modes() {
            let j = Grid::signed(ix, g.nx);
            let c = out.get(ix, iy);
            if iy == 0 && (j == 3 || j == 7) {
                // cos a cos b = (cos(a+b) + cos(a-b))/2, then 1/2 d/dx
                let want = 0.5 * g.xi(ix) * 0.25;
                assert!((c - C64::new(0.0, want)).norm() < 1e-15, "{j}: {c}");
            } else {
                assert!(c.norm() < 1e-16, "stray mode ({j}, {iy}): {c}");
            }
        }
    }

    #[test]
    fn cumulative_simpson_exact_on_cubics() {
        let g = Grid::new(4, 2, 1.0, 1.0).unwrap();
        let f = |s: f64| {
            let mut v = SpectralField::zeros(g);
            v.set_pair(1, 0, C64::new(s * s * s - 2.0 * s, 0.5 * s * s));
            v
        };
        let samples: Vec<_> = (0..9).map(|m| f(m as f64)).collect();
        let c = cumulative_simpson(&samples);
        for (m, cm) in c.iter().enumerate() {
            let s = m as f64;
            let want = C64::new(s.powi(4) / 4.0 - s * s, s.powi(3) / 6.0);
            if m == 1 {
                // three-point start panel is exact for quadratics only
                continue;
            }
            assert!((cm.get(1, 0) - want).norm() < 1e-12, "m={m}");
        }
        let quad: Vec<_> = (0..3)
            .map(|m| {
                let mut v = SpectralField::zeros(g);
                v.set_pair(1, 0, C64::new((m * m) as f64, 0.0));
                v
            })
            .collect();
        assert!((cumulative_simpson(&quad)[1].get(1, 0).re - 1.0 / 3.0).abs() < 1e-15);
    }

    fn free(phi: &SpectralField, t_max: f64, dt: f64) -> FieldTrajectory {
        FieldTrajectory::free_wave(phi, 0.0, dt, (t_max / dt).round() as usize + 1, &params()).unwrap()
    }

    #[test]
    fn duhamel_trivial_cases() {
        let c = cfg(1.0, 1.0 / 32.0);
        let z = free(&SpectralField::zeros(grid()), 1.0, c.dt);
        let out = duhamel(&z, &z, None, &params(), &c).unwrap();
        assert!(out.snapshots().iter().all(|s| s.is_zero()));
        let u = free(&packet(1.0), 1.0, c.dt);
        let out = duhamel(&u, &u, None, &params(), &c).unwrap();
        assert!(out.snapshot(0).is_zero());
        assert!(!out.snapshot(out.len() - 1).is_zero());
    }

    #[test]
    fn duhamel_bilinear() {
        let c = cfg(1.0, 1.0 / 32.0);
        let u = free(&packet(1.0), 1.0, c.dt);
        let v = free(&packet(0.5).map_modes(|xi, _, c| c * C64::cis(3.0 * xi)), 1.0, c.dt);
        let w = free(&packet(2.0).map_modes(|_, eta, c| c * C64::cis(eta)), 1.0, c.dt);
        let p = params();
        let (a, b) = (0.7, -1.3);
        let comb = FieldTrajectory::new(0.0, c.dt, u.snapshots().iter().zip(v.snapshots()).map(|(x, y)| x.scale(a).axpy(b, y).unwrap()).collect()).unwrap();
        let lhs = duhamel(&comb, &w, None, &p, &c).unwrap();
        let du = duhamel(&u, &w, None, &p, &c).unwrap();
        let dv = duhamel(&v, &w, None, &p, &c).unwrap();
        for m in 0..lhs.len() {
            let rhs = du.snapshot(m).scale(a).axpy(b, dv.snapshot(m)).unwrap();
            let scale = l2_norm(du.snapshot(m)) + l2_norm(dv.snapshot(m));
            assert!(l2_norm(&lhs.snapshot(m).sub(&rhs).unwrap()) <= 1e-12 * scale.max(1e-300));
        }
    }

    #[test]
    fn duhamel_fourth_order_in_dt() {
        let phi = packet(1.0);
        let p = params();
        let end = |dt: f64| {
            let u = free(&phi, 2.0, dt);
            let out = duhamel(&u, &u, None, &p, &cfg(2.0, dt)).unwrap();
            out.snapshot(out.len() - 1).clone()
        };
        let reference = end(1.0 / 256.0);
        let e1 = l2_norm(&end(1.0 / 32.0).sub(&reference).unwrap());
        let e2 = l2_norm(&end(1.0 / 64.0).sub(&reference).unwrap());
        assert!(e1 / e2 >= 8.0, "{e1:.3e} {e2:.3e}");
    }

    #[test]
    fn indicator_cutoff_freezes_frame() {
        let c = cfg(2.0, 1.0 / 32.0);
        let p = params();
        let u = free(&packet(1.0), 2.0, c.dt);
        let full = duhamel(&u, &u, None, &p, &c).unwrap();
        let cut = duhamel(&u, &u, Some(Cutoff::Indicator(1.0)), &p, &c).unwrap();
        assert_eq!(cut.snapshot(32), full.snapshot(32));
        let w_end = propagate(cut.snapshot(64), -2.0, &p);
        let w_mid = propagate(cut.snapshot(32), -1.0, &p);
        assert!(l2_norm(&w_end.sub(&w_mid).unwrap()) < 1e-14 * l2_norm(&w_mid));
        assert!(duhamel(&u, &u, Some(Cutoff::Indicator(0.3)), &p, &c).is_err());
    }

    #[test]
    fn zero_data_converges_at_once() {
        let (traj, log) = picard_solve(&SpectralField::zeros(grid()), &params(), &cfg(1.0, 1.0 / 64.0)).unwrap();
        assert_eq!(log.rows.len(), 1);
        assert!(traj.snapshots().iter().all(|s| s.is_zero()));
    }

    #[test]
    fn small_data_contracts_and_conserves_l2() {
        let u0 = packet(1e-3);
        let c = SolverConfig { picard_tol: 1e-10, ..cfg(4.0, 1.0 / 64.0) };
        let (traj, log) = picard_solve(&u0, &params(), &c).unwrap();
        assert!(log.rows.len() >= 2);
        assert!(log.ratios().iter().all(|&r| r < 1.0), "{:?}", log.ratios());
        let l0 = l2_norm(&u0);
        for s in traj.snapshots() {
            assert!((l2_norm(s) / l0 - 1.0).abs() < 1e-6);
        }
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,ydot_diff,zdot_surrogate,l2_at_tmax,wall_ms\n"));
    }

    #[test]
    fn data_outside_ball_rejected() {
        let r = picard_solve(&packet(2e-3), &params(), &cfg(1.0, 1.0 / 64.0));
        assert!(matches!(r, Err(Kp5Error::Domain(_))));
    }

    #[test]
    fn large_data_reports_failure() {
        let c = SolverConfig { small_data_delta: 1e3, picard_max_iters: 30, ..cfg(4.0, 1.0 / 64.0) };
        let r = picard_solve(&packet(300.0), &params(), &c);
        assert!(matches!(r, Err(Kp5Error::Divergence(_)) | Err(Kp5Error::NonConvergence(_))), "{r:?}");
    }

    #[test]
    fn final_value_trivial_cases() {
        let p = params();
        let c = SolverConfig { nonlinear: false, ..cfg(1.0, 1.0 / 64.0) };
        let up = packet(1e-3);
        let (traj, _) = final_value_solve(&up, &p, &c).unwrap();
        for m in 0..traj.len() {
            assert_eq!(traj.snapshot(m), &propagate(&up, traj.time(m), &p));
        }
        let (z, _) = final_value_solve(&SpectralField::zeros(grid()), &p, &cfg(1.0, 1.0 / 64.0)).unwrap();
        assert!(z.snapshots().iter().all(|s| s.is_zero()));
    }

    #[test]
    fn final_value_inverts_forward_solve() {
        let p = params();
        let c = SolverConfig { picard_tol: 1e-12, ..cfg(2.0, 1.0 / 64.0) };
        let u0 = packet(1e-3);
        let (fwd, _) = picard_solve(&u0, &p, &c).unwrap();
        let u_plus = propagate(fwd.snapshot(fwd.len() - 1), -c.t_max, &p);
        let (back, _) = final_value_solve(&u_plus, &p, &c).unwrap();
        let err = hm12_norm(&back.snapshot(0).sub(&u0).unwrap()) / hm12_norm(&u0);
        assert!(err < 1e-9, "{err:.3e}");
    }
}
