//! Numerical checks of the identities and scaling estimates behind the
//! well-posedness argument. Every experiment returns per-trial rows plus an
//! [`ExperimentSummary`].

pub mod bilinear;
pub mod interpolation;
pub mod it_bound;
pub mod kernel_decay;
pub mod resonance;
pub mod strichartz;
pub mod tail_shrink;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Kp5Error, Result};
use crate::spectral::{fft_plan, SpectralField, C64};

/// Independent stream per `(seed, trial)`, so results do not depend on the
/// order trials run in.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(trial);
    r
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSummary {
    pub experiment: String,
    pub seed: u64,
    pub params: serde_json::Value,
    pub statistic: serde_json::Value,
    pub pass: bool,
}

impl ExperimentSummary {
    pub fn new(experiment: &str, seed: u64, params: impl Serialize, statistic: impl Serialize, pass: bool) -> Result<Self> {
        let enc = |v: serde_json::Result<serde_json::Value>| v.map_err(|e| Kp5Error::Format(e.to_string()));
        Ok(ExperimentSummary {
            experiment: experiment.into(),
            seed,
            params: enc(serde_json::to_value(params))?,
            statistic: enc(serde_json::to_value(statistic))?,
            pass,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Writes serializable rows as CSV with a header.
pub fn write_rows<T: Serialize>(w: impl Write, rows: &[T]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(|e| Kp5Error::Format(e.to_string()))?;
    }
    wr.flush().map_err(|e| Kp5Error::Format(e.to_string()))
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `max / min` of positive values.
pub fn spread(v: &[f64]) -> f64 {
    let mx = v.iter().cloned().fold(f64::MIN, f64::max);
    let mn = v.iter().cloned().fold(f64::MAX, f64::min);
    mx / mn
}

/// Free evolution of one or two fields with sparse spectral support under an
/// arbitrary real symbol. Two real fields come out of one complex transform
/// (as real and imaginary part), and the x transforms skip empty rows.
pub struct SparseEvolver {
    nx: usize,
    ny: usize,
    /// `(index, partner index, coefficient of a, coefficient of b, symbol)` on the `xi > 0` half plane.
    modes: Vec<(usize, usize, C64, C64, f64)>,
    rows: Vec<usize>,
}

impl SparseEvolver {
    pub fn new(f: &SpectralField, symbol: impl Fn(f64, f64) -> f64) -> Self {
        Self::pair(f, f, symbol)
    }

    /// Evolver for `(a, b)` on a common grid.
    pub fn pair(a: &SpectralField, b: &SpectralField, symbol: impl Fn(f64, f64) -> f64) -> Self {
        let g = *a.grid();
        let mut modes = Vec::new();
        let mut rows = std::collections::BTreeSet::new();
        for (ix, iy) in g.half_modes() {
            let (ca, cb) = (a.get(ix, iy), b.get(ix, iy));
            if ca.norm_sqr() == 0.0 && cb.norm_sqr() == 0.0 {
                continue;
            }
            let (px, py) = g.partner(ix, iy);
            modes.push((g.index(ix, iy), g.index(px, py), ca, cb, symbol(g.xi(ix), g.eta(iy))));
            rows.insert(iy);
            rows.insert(py);
        }
        SparseEvolver { nx: g.nx, ny: g.ny, modes, rows: rows.into_iter().collect() }
    }

    /// Physical samples of `S(ta) a` and `S(tb) b`, row-major in `y`.
    pub fn physical_pair(&self, ta: f64, tb: f64) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        let mut buf = vec![C64::new(0.0, 0.0); nx * ny];
        let i = C64::new(0.0, 1.0);
        for &(k, kp, ca, cb, p) in &self.modes {
            let a = ca * C64::cis(ta * p);
            let b = cb * C64::cis(tb * p);
            buf[k] += a + i * b;
            buf[kp] += a.conj() + i * b.conj();
        }
        let fx = fft_plan(nx, true);
        for &r in &self.rows {
            fx.process(&mut buf[r * nx..(r + 1) * nx]);
        }
        let mut t = vec![C64::new(0.0, 0.0); nx * ny];
        for iy in &self.rows {
            for ix in 0..nx {
                t[ix * ny + iy] = buf[iy * nx + ix];
            }
        }
        fft_plan(ny, true).process(&mut t);
        let mut re = vec![0.0; nx * ny];
        let mut im = vec![0.0; nx * ny];
        for ix in 0..nx {
            for iy in 0..ny {
                let v = t[ix * ny + iy];
                re[iy * nx + ix] = v.re;
                im[iy * nx + ix] = v.im;
            }
        }
        (re, im)
    }

    /// Physical samples of the first field at every time in `times`, two per transform.
    pub fn for_each_time(&self, times: &[f64], mut f: impl FnMut(usize, &[f64])) {
        for (k, pair) in times.chunks(2).enumerate() {
            let t2 = *pair.last().unwrap();
            let (a, b) = self.physical_pair(pair[0], t2);
            f(2 * k, &a);
            if pair.len() == 2 {
                f(2 * k + 1, &b);
            }
        }
    }
}
