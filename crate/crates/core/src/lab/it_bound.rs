//! Uniformity in `T` of the bilinear Duhamel bound
//! `Ydot(I_T(u, v)) <= C Ydot(u) Ydot(v)` at regularity `-1/2`.

use rand::Rng;
use serde::Serialize;

use crate::error::{Kp5Error, Result};
use crate::lab::{spread, trial_rng};
use crate::norms::{hm12_norm, ydot_norm};
use crate::propagator::{DyadicLadder, FieldTrajectory};
use crate::solver::{duhamel, Cutoff, SolverConfig};
use crate::spectral::{gaussian_packet, DispersionParams, Grid, SpectralField, C64};

pub const IT_TIMES: [f64; 4] = [2.0, 4.0, 8.0, 16.0];

/// Random packet with unit `H^{-1/2,0}` norm: centre `|xi| in [0.5, 1.25]`,
/// widths 0.25, random translation.
pub fn random_packet(grid: Grid, fraction: f64, seed: u64, trial: u64) -> SpectralField {
    let mut rng = trial_rng(seed, trial);
    let xi0 = rng.gen_range(0.5..1.25);
    let (sx, sy) = (rng.gen_range(-0.25..0.25) * grid.lx, rng.gen_range(-0.25..0.25) * grid.ly);
    let f = gaussian_packet(grid, xi0, 0.25, 0.25, fraction).map_modes(|xi, eta, c| c * C64::cis(-(xi * sx + eta * sy)));
    let n = hm12_norm(&f);
    f.scale(1.0 / n)
}

#[derive(Clone, Debug, Serialize)]
pub struct ItBoundRow {
    pub pair: u64,
    pub t_cut: f64,
    pub ydot_u: f64,
    pub ydot_v: f64,
    pub ydot_it: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ItBoundResult {
    /// Largest ratio over the test set, per cutoff time.
    pub constants: Vec<(f64, f64)>,
    pub spread: f64,
}

/// Free waves `u = S(t) phi1`, `v = S(t) phi2` on `[0, cfg.t_max]` for each
/// pair, `I_T` with the indicator cutoff, and the ratio of surrogate norms.
pub fn it_bound_experiment(grid: Grid, pairs: usize, t_list: &[f64], params: &DispersionParams, cfg: &SolverConfig, seed: u64) -> Result<(Vec<ItBoundRow>, ItBoundResult)> {
    let steps = cfg.validate(&grid, params)?;
    if t_list.iter().any(|&t| t > cfg.t_max) {
        return Err(Kp5Error::Range(format!("cutoff times {t_list:?} exceed t_max = {}", cfg.t_max)));
    }
    let ladder = DyadicLadder::for_grid(&grid);
    let mut rows = Vec::new();
    for k in 0..pairs as u64 {
        let phi1 = random_packet(grid, cfg.dealias_fraction, seed, 2 * k);
        let phi2 = random_packet(grid, cfg.dealias_fraction, seed, 2 * k + 1);
        let u = FieldTrajectory::free_wave(&phi1, 0.0, cfg.dt, steps + 1, params)?;
        let v = FieldTrajectory::free_wave(&phi2, 0.0, cfg.dt, steps + 1, params)?;
        let (yu, yv) = (ydot_norm(&u, -0.5, params, &ladder), ydot_norm(&v, -0.5, params, &ladder));
        for &t in t_list {
            let it = duhamel(&u, &v, Some(Cutoff::Indicator(t)), params, cfg)?;
            let yi = ydot_norm(&it, -0.5, params, &ladder);
            rows.push(ItBoundRow { pair: k, t_cut: t, ydot_u: yu, ydot_v: yv, ydot_it: yi, ratio: yi / (yu * yv) });
        }
    }
    let constants: Vec<(f64, f64)> = t_list
        .iter()
        .map(|&t| (t, rows.iter().filter(|r| r.t_cut == t).map(|r| r.ratio).fold(0.0, f64::max)))
        .collect();
    let c: Vec<f64> = constants.iter().map(|c| c.1).collect();
    Ok((rows, ItBoundResult { spread: spread(&c), constants }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_is_scale_free_and_vanishes_without_interaction_time() {
        let g = Grid::new(16, 8, 8.0 * std::f64::consts::PI, 8.0 * std::f64::consts::PI).unwrap();
        let p = DispersionParams::new(1.0).unwrap();
        let cfg = SolverConfig { t_max: 1.0, dt: 1.0 / 32.0, ..SolverConfig::default() };
        let (rows, res) = it_bound_experiment(g, 1, &[0.5, 1.0], &p, &cfg, 3).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(res.constants.iter().all(|c| c.1 > 0.0 && c.1.is_finite()));
        assert!(it_bound_experiment(g, 1, &[2.0], &p, &cfg, 3).is_err());
        let phi = random_packet(g, 2.0 / 3.0, 3, 0);
        assert!((hm12_norm(&phi) - 1.0).abs() < 1e-12);
    }
}
