//! Decay of the band kernel `|G_N(x, y, t)| <~ t^-1 N^-1` and agreement of the
//! quadrature evaluation with an independent FFT Riemann sum.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::lab::{spread, trial_rng};
use crate::propagator::kernel::{kernel_gn, kernel_gn_fft};
use crate::spectral::DispersionParams;

pub const DECAY_BANDS: [f64; 5] = [4.0, 8.0, 16.0, 32.0, 64.0];
pub const DECAY_TIMES: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
pub const FFT_BANDS: [f64; 3] = [1.0, 2.0, 4.0];

/// Largest `|X| = |x + y^2/(4t)|` at which the phase of band `N` is stationary.
fn stationary_reach(n: f64, t: f64, alpha: f64) -> f64 {
    let b = 2.0 * n;
    t * (5.0 * b.powi(4) + 3.0 * alpha * b * b)
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayRow {
    pub n: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub abs_g: f64,
    pub scaled: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayStats {
    /// `max t N |G_N|` over every sample: the single constant.
    pub c: f64,
    /// Per-(N, t) maxima of `t N |G_N|`.
    pub per_cell: Vec<(f64, f64, f64)>,
    /// max / min of the per-cell maxima.
    pub spread: f64,
}

/// `samples` points per `(N, t)`: `X` covers the stationary range
/// `[-reach, 0]` on a jittered grid and `y` is random, `x = X - y^2/(4t)`.
pub fn kernel_decay(samples: usize, seed: u64, params: &DispersionParams) -> Result<(Vec<DecayRow>, DecayStats)> {
    let mut rows = Vec::new();
    let mut per_cell = Vec::new();
    let mut cell = 0u64;
    for &n in &DECAY_BANDS {
        for &t in &DECAY_TIMES {
            let mut rng = trial_rng(seed, cell);
            cell += 1;
            let reach = stationary_reach(n, t, params.alpha);
            let mut best = 0.0f64;
            for j in 0..samples {
                let xx = -reach * (j as f64 + rng.gen::<f64>()) / samples as f64;
                let y = rng.gen_range(-8.0..8.0);
                let x = xx - y * y / (4.0 * t);
                let g = kernel_gn(n, x, y, t, params)?.norm();
                let scaled = t * n * g;
                best = best.max(scaled);
                rows.push(DecayRow { n, t, x, y, abs_g: g, scaled });
            }
            per_cell.push((n, t, best));
        }
    }
    let maxima: Vec<f64> = per_cell.iter().map(|c| c.2).collect();
    let c = maxima.iter().cloned().fold(0.0, f64::max);
    Ok((rows, DecayStats { c, spread: spread(&maxima), per_cell }))
}

#[derive(Clone, Debug, Serialize)]
pub struct FftComparison {
    pub n: f64,
    pub t: f64,
    pub npts: usize,
    pub points: usize,
    pub rel_l2: f64,
}

/// Compares quadrature with the FFT path on `points` of the FFT's `X` lattice
/// spread over the stationary range. The FFT period is four times the range
/// so that wrap-around is negligible.
pub fn kernel_fft_comparison(n: f64, t: f64, points: usize, params: &DispersionParams) -> Result<FftComparison> {
    let reach = stationary_reach(n, t, params.alpha);
    let period = 4.0 * reach + 200.0;
    let dxi = 2.0 * std::f64::consts::PI / period;
    let npts = ((2.2 * 2.0 * n / dxi).ceil() as usize).next_power_of_two();
    let table = kernel_gn_fft(n, t, params, npts, dxi);
    let dx = period / npts as f64;
    let jmax = ((1.2 * reach) / dx) as i64;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..points {
        let j = -jmax + (2 * jmax * k as i64) / (points as i64 - 1).max(1);
        let idx = j.rem_euclid(npts as i64) as usize;
        let (x, gf) = table[idx];
        let gq = kernel_gn(n, x, 0.0, t, params)?;
        num += (gq - gf).norm_sqr();
        den += gq.norm_sqr();
    }
    Ok(FftComparison { n, t, npts, points, rel_l2: (num / den).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_path_agrees_at_unit_band() {
        let p = DispersionParams::new(1.0).unwrap();
        let c = kernel_fft_comparison(1.0, 1.0, 24, &p).unwrap();
        assert!(c.rel_l2 < 1e-6, "{c:?}");
    }
}
