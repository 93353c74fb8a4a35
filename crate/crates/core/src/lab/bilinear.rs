//! Bilinear Strichartz: `||(S(t) P_N1 phi1)(S(t) P_N2 phi2)||_{L^2_{t,x,y}}`
//! against `(N1/N2)^(1/2)` and, for `N2 >= 1`, the sharper `(N1/N2^2)^(1/2)`.
//!
//! Each pair is computed on the torus rescaled to the high band (see
//! [`crate::lab::strichartz`]); there the product norm picks up the exact
//! factor `(N2^2 + alpha)^(-1/4)`. The high packet has a narrow `xi` envelope
//! around the band centre so its group velocities stay within a factor ~5,
//! and both packets have `eta` width proportional to `rho = N1/N2`, which
//! lets every length scale of the problem grow like `1/rho`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Kp5Error, Result};
use crate::lab::strichartz::{scaled_symbol, scaled_weight};
use crate::lab::{spread, trial_rng, SparseEvolver};
use crate::norms::{l2_norm, trapezoid};
use crate::propagator::bump_psi;
use crate::spectral::{DispersionParams, Grid, SpectralField, C64};

/// Successive values may grow by this factor and still count as non-increasing.
pub const MONOTONE_NOISE: f64 = 0.10;

#[derive(Clone, Debug, Serialize)]
pub struct BilinearSetup {
    /// Torus `(x, y)` lengths and half window, all times `1/rho`.
    pub x_len: f64,
    pub y_len: f64,
    pub half_window: f64,
    /// `nx = next_pow2(nx_per_rho / rho)`.
    pub nx_per_rho: f64,
    pub ny: usize,
    pub time_samples: usize,
    /// Width of the high packet's Gaussian envelope in the unit band.
    pub carrier_width: f64,
    /// `eta` width of both packets is `w rho` with `w` drawn from this range.
    pub eta_width: (f64, f64),
}

impl Default for BilinearSetup {
    fn default() -> Self {
        BilinearSetup {
            x_len: 100.0,
            y_len: 25.0,
            half_window: 5.0,
            nx_per_rho: 64.0,
            ny: 64,
            time_samples: 201,
            carrier_width: 1.0 / 16.0,
            eta_width: (0.35, 0.7),
        }
    }
}

impl BilinearSetup {
    pub fn grid(&self, rho: f64) -> Result<Grid> {
        let nx = ((self.nx_per_rho / rho).ceil() as usize).next_power_of_two();
        Grid::new(nx, self.ny, self.x_len / rho, self.y_len / rho)
    }
}

/// Random pair in scaled units: `phi1` in band `rho`, `phi2` around `xi = 1`,
/// each unit L2 with a random tilt, offset and small chirp.
pub fn pair_data(grid: Grid, rho: f64, setup: &BilinearSetup, seed: u64, trial: u64) -> (SpectralField, SpectralField) {
    let mut rng = trial_rng(seed, trial);
    let w = rng.gen_range(setup.eta_width.0..setup.eta_width.1);
    let s = w * rho;
    let mut profile = || {
        let c: [f64; 6] = std::array::from_fn(|_| rng.sample(StandardNormal));
        move |u: f64, v: f64| {
            let amp = (1.0 + 0.3 * (c[0] * u + c[1] * v)) * (-0.5 * v * v).exp();
            C64::from_polar(amp, 0.5 * (c[2] * u + c[3] * v) + 0.1 * (c[4] * u * u + c[5] * v * v))
        }
    };
    let (p1, p2) = (profile(), profile());
    let sig = setup.carrier_width;
    let f1 = SpectralField::from_fn(grid, |xi, eta| {
        let b = bump_psi(xi / rho);
        if b == 0.0 {
            return C64::new(0.0, 0.0);
        }
        p1(xi / rho - 1.0, eta / s) * b
    });
    let f2 = SpectralField::from_fn(grid, |xi, eta| {
        let u = (xi - 1.0) / sig;
        let b = bump_psi(xi) * (-0.5 * u * u).exp();
        if b < 1e-300 {
            return C64::new(0.0, 0.0);
        }
        p2(u, eta / s) * b
    });
    let unit = |f: SpectralField| {
        let n = l2_norm(&f);
        f.scale(1.0 / n)
    };
    (unit(f1), unit(f2))
}

/// `||(S_a(t) f1)(S_a(t) f2)||_{L^2([-T, T] x torus)}` under the scaled
/// symbol, and the integrand at the window edge relative to its peak.
pub fn scaled_product_norm(f1: &SpectralField, f2: &SpectralField, a: f64, rho: f64, setup: &BilinearSetup) -> (f64, f64) {
    let g = *f1.grid();
    let ev = SparseEvolver::pair(f1, f2, |xi, eta| scaled_symbol(a, xi, eta));
    let tw = setup.half_window / rho;
    let n = setup.time_samples;
    let dt = 2.0 * tw / (n - 1) as f64;
    let cell = g.lx * g.ly / g.len() as f64;
    let vals: Vec<f64> = (0..n)
        .map(|k| {
            let t = -tw + k as f64 * dt;
            let (u1, u2) = ev.physical_pair(t, t);
            cell * u1.iter().zip(&u2).map(|(a, b)| (a * b) * (a * b)).sum::<f64>()
        })
        .collect();
    let peak = vals.iter().cloned().fold(0.0, f64::max);
    let edge = vals[0].max(vals[n - 1]);
    (trapezoid(&vals, dt).sqrt(), if peak > 0.0 { edge / peak } else { 0.0 })
}

/// `norm / (scale ||phi1|| ||phi2||)`, or `(0, true)` for a vanishing operand.
pub fn guarded_ratio(norm: f64, scale: f64, m1: f64, m2: f64) -> (f64, bool) {
    if m1 == 0.0 || m2 == 0.0 {
        (0.0, true)
    } else {
        (norm / (scale * m1 * m2), false)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BilinearRow {
    pub n1: f64,
    pub n2: f64,
    pub trial: u64,
    pub norm: f64,
    pub ratio: f64,
    pub sharp_ratio: Option<f64>,
    pub edge_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BilinearStats {
    pub n1: f64,
    pub n2: f64,
    pub max_ratio: f64,
    pub max_sharp_ratio: Option<f64>,
    pub max_edge_fraction: f64,
}

pub fn bilinear_strichartz_experiment(
    n1: f64,
    n2: f64,
    trials: usize,
    params: &DispersionParams,
    seed: u64,
    setup: &BilinearSetup,
) -> Result<(Vec<BilinearRow>, BilinearStats)> {
    if !(n1 > 0.0 && n1 <= n2) {
        return Err(Kp5Error::Domain(format!("bilinear experiment needs 0 < N1 <= N2 (N1={n1}, N2={n2})")));
    }
    let rho = n1 / n2;
    let a = scaled_weight(n2, params.alpha);
    let factor = (n2 * n2 + params.alpha).powf(-0.25);
    let grid = setup.grid(rho)?;
    let mut rows = Vec::with_capacity(trials);
    for k in 0..trials as u64 {
        let (f1, f2) = pair_data(grid, rho, setup, seed, k);
        let (s, edge) = scaled_product_norm(&f1, &f2, a, rho, setup);
        let norm = factor * s;
        let (m1, m2) = (l2_norm(&f1), l2_norm(&f2));
        let ratio = guarded_ratio(norm, rho.sqrt(), m1, m2).0;
        let sharp_ratio = (n2 >= 1.0).then(|| guarded_ratio(norm, (n1 / (n2 * n2)).sqrt(), m1, m2).0);
        rows.push(BilinearRow { n1, n2, trial: k, norm, ratio, sharp_ratio, edge_fraction: edge });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let max_sharp_ratio = (n2 >= 1.0).then(|| rows.iter().filter_map(|r| r.sharp_ratio).fold(0.0, f64::max));
    let max_edge_fraction = rows.iter().map(|r| r.edge_fraction).fold(0.0, f64::max);
    Ok((rows, BilinearStats { n1, n2, max_ratio, max_sharp_ratio, max_edge_fraction }))
}

#[derive(Clone, Debug, Serialize)]
pub struct BilinearSweep {
    pub cells: Vec<BilinearStats>,
    /// max / min of the per-cell maximal ratios.
    pub spread: f64,
}

/// Runs every `(N1, N2)` cell and reports the spread of the constants.
pub fn bilinear_sweep(cells: &[(f64, f64)], trials: usize, params: &DispersionParams, seed: u64, setup: &BilinearSetup) -> Result<(Vec<BilinearRow>, BilinearSweep)> {
    let mut rows = Vec::new();
    let mut stats = Vec::new();
    for &(n1, n2) in cells {
        let (r, s) = bilinear_strichartz_experiment(n1, n2, trials, params, seed, setup)?;
        rows.extend(r);
        stats.push(s);
    }
    let maxima: Vec<f64> = stats.iter().map(|s| s.max_ratio).collect();
    Ok((rows, BilinearSweep { spread: spread(&maxima), cells: stats }))
}

/// True when each value is at most `(1 + MONOTONE_NOISE)` times its predecessor.
pub fn non_increasing_within_noise(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + MONOTONE_NOISE))
}
