//! Scaling of `||S(t) P_N phi||_{L^q_t L^r}` in the band `N`.
//!
//! Each band is computed on its own rescaled torus. With `x = x'/N`,
//! `y = y' / (N^2 (N^2 + alpha)^(1/2))` and `t = t' / (N^3 (N^2 + alpha))` the
//! symbol becomes `p_a = a xi^5 + (1 - a) xi^3 - eta^2 / xi` with
//! `a = N^2 / (N^2 + alpha)`, the data live in the unit band, and
//! `||u||_{L^q L^r} = (N^2 + alpha)^(-1/(2q)) ||u'||_{L^q L^r}` exactly when
//! `1/q + 1/r = 1/2`. One fixed scaled torus and window then resolve every
//! band equally well.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Kp5Error, Result};
use crate::lab::{fit_line, trial_rng, SparseEvolver};
use crate::norms::{l2_norm, trapezoid_nonuniform};
use crate::propagator::bump_psi;
use crate::spectral::{DispersionParams, Grid, SpectralField, C64};

/// Allowed share of the time integral coming from the last decade of the window.
pub const TAIL_FRACTION_TARGET: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct ScaledSetup {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub window: f64,
    /// Log-spaced positive sample times from `first_time` to `window`, plus `t = 0`.
    pub time_samples: usize,
    pub first_time: f64,
}

impl Default for ScaledSetup {
    fn default() -> Self {
        ScaledSetup { nx: 1024, ny: 512, lx: 400.0, ly: 100.0, window: 30.0, time_samples: 100, first_time: 1e-3 }
    }
}

impl ScaledSetup {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny, self.lx, self.ly)
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.time_samples;
        let r = (self.window / self.first_time).ln();
        let mut t = vec![0.0];
        t.extend((0..n).map(|k| self.first_time * (r * k as f64 / (n - 1) as f64).exp()));
        t
    }
}

/// `a = N^2 / (N^2 + alpha)` of the rescaled symbol.
pub fn scaled_weight(n: f64, alpha: f64) -> f64 {
    n * n / (n * n + alpha)
}

pub fn scaled_symbol(a: f64, xi: f64, eta: f64) -> f64 {
    a * xi.powi(5) + (1.0 - a) * xi.powi(3) - eta * eta / xi
}

/// Random unit-L2 profile in the unit band: `psi(xi) exp(-eta^2/2)` with a
/// random linear amplitude tilt and quadratic phase. Depends only on
/// `(seed, trial)`.
pub fn unit_band_data(grid: Grid, seed: u64, trial: u64) -> SpectralField {
    let mut rng = trial_rng(seed, trial);
    let c: [f64; 6] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let f = SpectralField::from_fn(grid, |xi, eta| {
        let w = bump_psi(xi);
        if w == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let u = xi - 1.0;
        let amp = w * (-0.5 * eta * eta).exp() * (1.0 + 0.3 * (c[0] * u + c[1] * eta));
        C64::from_polar(amp, c[2] * u + c[3] * eta + c[4] * u * u + c[5] * eta * eta)
    });
    let n = l2_norm(&f);
    f.scale(1.0 / n)
}

#[derive(Clone, Debug, Serialize)]
pub struct SpaceTimeNorms {
    /// `||u'||_{L^q L^r}` per requested pair, in scaled units.
    pub norms: Vec<f64>,
    /// Share of each time integral from `[window/10, window]`.
    pub tail_fractions: Vec<f64>,
}

pub fn check_admissible(q: f64, r: f64) -> Result<()> {
    if !(q >= 2.0 && r >= 2.0) || (1.0 / q + 1.0 / r - 0.5).abs() > 1e-12 {
        return Err(Kp5Error::Domain(format!("(q, r) = ({q}, {r}) must satisfy 1/q + 1/r = 1/2")));
    }
    Ok(())
}

/// `|v|^r` with fast paths for the exponents used by the experiments.
#[inline]
fn abs_pow(v: f64, r: f64) -> f64 {
    let v2 = v * v;
    if r == 4.0 {
        v2 * v2
    } else if r == 8.0 / 3.0 {
        let c = v2.cbrt();
        (c * c) * (c * c)
    } else if r == 2.0 {
        v2
    } else {
        v.abs().powf(r)
    }
}

/// Space-time norms of the free evolution under `p_a`, one transform per time sample.
pub fn scaled_space_time_norms(phi: &SpectralField, a: f64, setup: &ScaledSetup, pairs: &[(f64, f64)]) -> Result<SpaceTimeNorms> {
    let g = *phi.grid();
    let times = setup.times();
    let cell = g.lx * g.ly / g.len() as f64;
    let mut series = vec![vec![0.0; times.len()]; pairs.len()];
    let ev = SparseEvolver::new(phi, |xi, eta| scaled_symbol(a, xi, eta));
    ev.for_each_time(&times, |m, vals| {
        for (k, &(q, r)) in pairs.iter().enumerate() {
            let lr: f64 = cell * vals.iter().map(|&v| abs_pow(v, r)).sum::<f64>();
            series[k][m] = lr.powf(q / r);
        }
    });
    let split = times.partition_point(|&t| t < setup.window / 10.0);
    let mut norms = Vec::new();
    let mut tail_fractions = Vec::new();
    for (k, &(q, _)) in pairs.iter().enumerate() {
        let total = trapezoid_nonuniform(&times, &series[k]);
        let tail = trapezoid_nonuniform(&times[split..], &series[k][split..]);
        norms.push(total.powf(1.0 / q));
        tail_fractions.push(tail / total);
    }
    Ok(SpaceTimeNorms { norms, tail_fractions })
}

#[derive(Clone, Debug, Serialize)]
pub struct StrichartzRow {
    pub n: f64,
    pub trial: u64,
    pub q: f64,
    pub r: f64,
    pub norm: f64,
    pub tail_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StrichartzFit {
    pub q: f64,
    pub r: f64,
    pub predicted_slope: f64,
    /// Fit over bands `N >= 4`.
    pub large_slope: Option<f64>,
    /// Fit over bands `N <= 1` (expected plateau).
    pub small_slope: Option<f64>,
    /// Per band: geometric mean over trials of the norm.
    pub band_means: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StrichartzResult {
    pub fits: Vec<StrichartzFit>,
    pub max_tail_fraction: f64,
    pub warning: Option<String>,
}

/// For every band and trial: unit-L2 data in band `N`, free evolution over the
/// window, all requested `L^q L^r` norms; then log-log fits per pair.
pub fn strichartz_scaling_experiment(
    bands: &[f64],
    pairs: &[(f64, f64)],
    trials: usize,
    params: &DispersionParams,
    seed: u64,
    setup: &ScaledSetup,
) -> Result<(Vec<StrichartzRow>, StrichartzResult)> {
    for &(q, r) in pairs {
        check_admissible(q, r)?;
    }
    let grid = setup.grid()?;
    let data: Vec<SpectralField> = (0..trials as u64).map(|k| unit_band_data(grid, seed, k)).collect();
    let mut rows = Vec::new();
    for &n in bands {
        if !(n > 0.0) {
            return Err(Kp5Error::Domain(format!("band N = {n} must be positive")));
        }
        let a = scaled_weight(n, params.alpha);
        for (k, phi) in data.iter().enumerate() {
            let st = scaled_space_time_norms(phi, a, setup, pairs)?;
            for (j, &(q, r)) in pairs.iter().enumerate() {
                let factor = (n * n + params.alpha).powf(-1.0 / (2.0 * q));
                rows.push(StrichartzRow { n, trial: k as u64, q, r, norm: factor * st.norms[j], tail_fraction: st.tail_fractions[j] });
            }
        }
    }
    let mut fits = Vec::new();
    for &(q, r) in pairs {
        let band_means: Vec<(f64, f64)> = bands
            .iter()
            .map(|&n| {
                let logs: Vec<f64> = rows.iter().filter(|w| w.n == n && w.q == q && w.r == r).map(|w| w.norm.ln()).collect();
                (n, (logs.iter().sum::<f64>() / logs.len() as f64).exp())
            })
            .collect();
        let fit = |keep: &dyn Fn(f64) -> bool| {
            let (x, y): (Vec<f64>, Vec<f64>) = band_means.iter().filter(|b| keep(b.0)).map(|b| (b.0.ln(), b.1.ln())).unzip();
            (x.len() >= 2).then(|| fit_line(&x, &y).0)
        };
        fits.push(StrichartzFit {
            q,
            r,
            predicted_slope: -(1.0 - 2.0 / r) / 2.0,
            large_slope: fit(&|n| n >= 4.0),
            small_slope: fit(&|n| n <= 1.0),
            band_means,
        });
    }
    let max_tail = rows.iter().map(|w| w.tail_fraction).fold(0.0, f64::max);
    let warning = (max_tail > TAIL_FRACTION_TARGET).then(|| {
        format!("window too short to saturate the time integral: last decade carries {max_tail:.3} of it (target {TAIL_FRACTION_TARGET})")
    });
    Ok((rows, StrichartzResult { fits, max_tail_fraction: max_tail, warning }))
}
