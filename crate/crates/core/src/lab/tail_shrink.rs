//! Shrinking of `||Q^S_* alpha_T S(t) phi||_{L^4}` as the cutoff time `T` grows.
//!
//! Since `S(-t) alpha_T(t) S(t) phi = alpha_T(t) phi`, the modulation
//! projections act on the scalar ramp only:
//! `Q^S_{<M} alpha_T S(t) phi = S(t) (Q_{<M} alpha_T)(t) phi`. The space-time
//! norm is therefore `(int |beta(t)|^4 ||S(t) phi||_{L^4}^4 dt)^(1/4)` with
//! `beta = Q_{<M} alpha_T` or `alpha_T - Q_{<M} alpha_T`.

use serde::Serialize;

use crate::error::{Kp5Error, Result};
use crate::lab::SparseEvolver;
use crate::norms::{l2_norm, trapezoid};
use crate::propagator::{bump_phi, bump_psi};
use crate::solver::CutoffProfile;
use crate::spectral::{fft_plan, DispersionParams, Grid, SpectralField, C64};

/// `||S(t) phi||_{L^4}^4` on a uniform time grid `t_k = k dt`, `k = 0..=n`.
#[derive(Clone, Debug)]
pub struct L4Profile {
    pub dt: f64,
    pub values: Vec<f64>,
    pub l2: f64,
}

impl L4Profile {
    pub fn window(&self) -> f64 {
        self.dt * (self.values.len() - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len()).map(|k| k as f64 * self.dt).collect()
    }
}

pub fn l4_profile(phi: &SpectralField, params: &DispersionParams, window: f64, dt: f64) -> Result<L4Profile> {
    if !(window > 0.0 && dt > 0.0) {
        return Err(Kp5Error::Domain(format!("window {window} and dt {dt} must be positive")));
    }
    let n = (window / dt).round() as usize;
    let g = *phi.grid();
    let cell = g.lx * g.ly / g.len() as f64;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
    let ev = SparseEvolver::new(phi, |xi, eta| params.p(xi, eta));
    let mut values = vec![0.0; n + 1];
    ev.for_each_time(&times, |m, u| values[m] = cell * u.iter().map(|v| (v * v) * (v * v)).sum::<f64>());
    Ok(L4Profile { dt, values, l2: l2_norm(phi) })
}

/// Fine step of the scalar filter grid.
const FILTER_STEP: f64 = 1.0 / 64.0;

/// `(Q_{<M} alpha_T)(t)` at the given times: the multiplier `phi(tau/M)` is
/// applied to `alpha_T' = 1_[T-1, T]` on a padded periodic grid and the
/// result integrated from the left, where it vanishes to rounding.
pub fn lowpass_ramp(t_cut: f64, m: f64, times: &[f64]) -> Result<Vec<f64>> {
    if !(m > 0.0) {
        return Err(Kp5Error::Domain(format!("modulation scale M = {m} must be positive")));
    }
    let h = FILTER_STEP;
    let lo = times.iter().cloned().fold(t_cut - 1.0, f64::min) - 64.0 / m - 8.0;
    let hi = times.iter().cloned().fold(t_cut, f64::max) + 64.0 / m + 8.0;
    let n = (((hi - lo) / h).ceil() as usize).next_power_of_two();
    // cell averages of the box derivative
    let mut buf: Vec<C64> = (0..n)
        .map(|k| {
            let (a, b) = (lo + k as f64 * h, lo + (k + 1) as f64 * h);
            let overlap = (b.min(t_cut) - a.max(t_cut - 1.0)).max(0.0);
            C64::new(overlap / h, 0.0)
        })
        .collect();
    fft_plan(n, false).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let tau = 2.0 * std::f64::consts::PI * Grid::signed(k, n) as f64 / (n as f64 * h);
        *c *= bump_phi(tau / m) / n as f64;
    }
    fft_plan(n, true).process(&mut buf);
    // cumulative sum of cell averages gives beta at the right cell edges
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    for c in &buf {
        acc += c.re * h;
        cum.push(acc);
    }
    Ok(times
        .iter()
        .map(|&t| {
            let x = (t - lo) / h;
            let k = (x.floor() as usize).min(n - 1);
            let f = x - k as f64;
            cum[k] * (1.0 - f) + cum[k + 1] * f
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct TailShrinkRow {
    pub t_cut: f64,
    /// `||alpha_T S(t) phi||_{L^4}`
    pub full: f64,
    /// `||Q^S_{<M} alpha_T S(t) phi||_{L^4}`
    pub low: f64,
    /// `||Q^S_{>=M} alpha_T S(t) phi||_{L^4}`
    pub high: f64,
}

/// The three norms at one cutoff time, restricted to the profile's window.
/// A ramp starting after the window leaves nothing: all three are zero.
pub fn cutoff_norms(profile: &L4Profile, t_cut: f64, m: f64) -> Result<TailShrinkRow> {
    let times = profile.times();
    if t_cut - 1.0 >= profile.window() {
        return Ok(TailShrinkRow { t_cut, full: 0.0, low: 0.0, high: 0.0 });
    }
    let ramp = CutoffProfile { t_cut };
    let alpha: Vec<f64> = times.iter().map(|&t| ramp.value(t)).collect();
    let beta = lowpass_ramp(t_cut, m, &times)?;
    let norm = |w: &dyn Fn(usize) -> f64| {
        let f: Vec<f64> = (0..times.len()).map(|k| w(k).powi(4) * profile.values[k]).collect();
        trapezoid(&f, profile.dt).powf(0.25)
    };
    Ok(TailShrinkRow {
        t_cut,
        full: norm(&|k| alpha[k]),
        low: norm(&|k| beta[k]),
        high: norm(&|k| alpha[k] - beta[k]),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TailShrinkCurve {
    pub m: f64,
    pub window: f64,
    pub l2: f64,
    pub rows: Vec<TailShrinkRow>,
    pub strictly_decreasing: bool,
    /// Largest of the two modulation halves at the last `T`, relative to `||phi||_{L^2}`.
    pub final_relative: f64,
}

pub fn tail_shrink_experiment(profile: &L4Profile, m: f64, t_list: &[f64]) -> Result<TailShrinkCurve> {
    if t_list.windows(2).any(|w| w[1] <= w[0]) || t_list.is_empty() {
        return Err(Kp5Error::Domain("T list must be nonempty and increasing".into()));
    }
    let window = profile.window();
    let t_max = *t_list.last().unwrap();
    if t_max > window + 1e-12 {
        return Err(Kp5Error::Range(format!("window {window} shorter than largest T = {t_max}")));
    }
    let rows = t_list.iter().map(|&t| cutoff_norms(profile, t, m)).collect::<Result<Vec<_>>>()?;
    let strictly_decreasing = rows.windows(2).all(|w| w[1].low < w[0].low && w[1].high < w[0].high);
    let last = rows.last().unwrap();
    Ok(TailShrinkCurve {
        m,
        window,
        l2: profile.l2,
        final_relative: last.low.max(last.high) / profile.l2,
        strictly_decreasing,
        rows,
    })
}

/// Torus, window and datum used by default: a unit-L2 datum filling the
/// unit band with `eta` width `sqrt 2` on a torus large enough that the
/// free wave keeps dispersing for the whole window.
#[derive(Clone, Debug, Serialize)]
pub struct TailShrinkSetup {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub window: f64,
    pub dt: f64,
    pub m: f64,
    pub t_list: Vec<f64>,
}

impl Default for TailShrinkSetup {
    fn default() -> Self {
        TailShrinkSetup {
            nx: 2048,
            ny: 1024,
            lx: 1600.0,
            ly: 400.0 / std::f64::consts::SQRT_2,
            window: 32.0,
            dt: 0.125,
            m: 1.0,
            t_list: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
        }
    }
}

impl TailShrinkSetup {
    pub fn datum(&self) -> Result<SpectralField> {
        let g = Grid::new(self.nx, self.ny, self.lx, self.ly)?;
        let f = SpectralField::from_fn(g, |xi, eta| {
            let a = bump_psi(xi) * (-0.25 * eta * eta).exp();
            C64::new(if a > 1e-17 { a } else { 0.0 }, 0.0)
        });
        let n = l2_norm(&f);
        Ok(f.scale(1.0 / n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_profile(scale: f64) -> L4Profile {
        let s = TailShrinkSetup { nx: 64, ny: 32, lx: 60.0, ly: 30.0, window: 4.0, dt: 0.125, ..TailShrinkSetup::default() };
        let phi = s.datum().unwrap().scale(scale);
        l4_profile(&phi, &DispersionParams::new(1.0).unwrap(), s.window, s.dt).unwrap()
    }

    #[test]
    fn lowpass_tends_to_ramp_for_large_m() {
        let ts: Vec<f64> = (0..=80).map(|k| k as f64 * 0.125).collect();
        let b = lowpass_ramp(5.0, 64.0, &ts).unwrap();
        let ramp = CutoffProfile { t_cut: 5.0 };
        // a kink smoothed at scale 1/M deviates by about 1/(pi M)
        for (t, v) in ts.iter().zip(&b) {
            assert!((v - ramp.value(*t)).abs() < 1.0 / (std::f64::consts::PI * 64.0), "t={t} beta={v}");
        }
        let far = lowpass_ramp(5.0, 1.0, &[-40.0, 60.0]).unwrap();
        // the bump's transform decays faster than any power but not exponentially
        assert!(far[0].abs() < 1e-4 && (far[1] - 1.0).abs() < 1e-4, "{far:?}");
    }

    #[test]
    fn ramp_past_window_gives_zero() {
        let p = small_profile(1.0);
        let r = cutoff_norms(&p, 6.0, 1.0).unwrap();
        assert_eq!((r.full, r.low, r.high), (0.0, 0.0, 0.0));
        assert!(matches!(tail_shrink_experiment(&p, 1.0, &[1.0, 6.0]), Err(Kp5Error::Range(_))));
    }

    #[test]
    fn curve_is_homogeneous() {
        let (a, b) = (small_profile(1.0), small_profile(2.0));
        let ca = tail_shrink_experiment(&a, 1.0, &[1.0, 2.0, 4.0]).unwrap();
        let cb = tail_shrink_experiment(&b, 1.0, &[1.0, 2.0, 4.0]).unwrap();
        for (x, y) in ca.rows.iter().zip(&cb.rows) {
            for (u, v) in [(x.full, y.full), (x.low, y.low), (x.high, y.high)] {
                assert!((v - 2.0 * u).abs() < 1e-12 * v.max(1e-300));
            }
        }
        assert!((ca.final_relative - cb.final_relative).abs() < 1e-12);
    }
}
