//! L2, H^{-1/2,0}, space-time L^q_t L^r, the V^2 variation and the dyadic
//! Y/Z surrogate norms.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Kp5Error, Result};
use crate::propagator::{propagate, DyadicLadder, FieldTrajectory};
use crate::spectral::{to_physical, DispersionParams, SpectralField, C64};

/// Default cap on time samples entering the O(n^2) variation search.
pub const DEFAULT_NORM_SAMPLES: usize = 257;

pub fn l2_norm(f: &SpectralField) -> f64 {
    let g = f.grid();
    let s: f64 = g.half_modes().map(|(ix, iy)| f.get(ix, iy).norm_sqr()).sum();
    (2.0 * g.lx * g.ly * s).sqrt()
}

/// `(int |xi|^-1 |u^|^2)^(1/2)` on the lattice.
pub fn hm12_norm(f: &SpectralField) -> f64 {
    let g = f.grid();
    let s: f64 = g.half_modes().map(|(ix, iy)| f.get(ix, iy).norm_sqr() / g.xi(ix)).sum();
    (2.0 * g.lx * g.ly * s).sqrt()
}

/// Spatial `L^r` norm from grid samples.
pub fn lr_norm(f: &SpectralField, r: f64) -> f64 {
    let g = f.grid();
    let s: f64 = to_physical(f).iter().map(|v| v.abs().powf(r)).sum();
    (g.lx * g.ly / g.len() as f64 * s).powf(1.0 / r)
}

/// `||u||_{L^q_t L^r}` with the trapezoidal rule in time.
pub fn lqlr_norm(traj: &FieldTrajectory, q: f64, r: f64) -> Result<f64> {
    if !(q >= 2.0 && r >= 2.0) {
        return Err(Kp5Error::Domain(format!("L^q L^r requires q, r >= 2 (q={q}, r={r})")));
    }
    let vals: Vec<f64> = traj.snapshots().iter().map(|s| lr_norm(s, r).powf(q)).collect();
    Ok(trapezoid(&vals, traj.dt()).powf(1.0 / q))
}

pub fn trapezoid(vals: &[f64], dt: f64) -> f64 {
    let n = vals.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = vals[1..n - 1].iter().sum();
    dt * (inner + 0.5 * (vals[0] + vals[n - 1]))
}

/// Trapezoidal rule on arbitrary (increasing) nodes.
pub fn trapezoid_nonuniform(t: &[f64], vals: &[f64]) -> f64 {
    t.windows(2).zip(vals.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

/// Maximal sum of squared increments over all sub-partitions of `n` ordered
/// points, by dynamic programming: `best(j) = max_{i<j} best(i) + d2(i, j)`.
/// Returns the square root.
pub fn v2_from_distances(n: usize, mut d2: impl FnMut(usize, usize) -> f64) -> f64 {
    let mut best = vec![0.0f64; n];
    for j in 1..n {
        let mut b = 0.0f64;
        for i in 0..j {
            b = b.max(best[i] + d2(i, j));
        }
        best[j] = b;
    }
    best.into_iter().fold(0.0, f64::max).sqrt()
}

/// Exhaustive counterpart of [`v2_from_distances`] over all `2^n` subsets.
pub fn v2_brute_force(n: usize, d2: impl Fn(usize, usize) -> f64) -> f64 {
    assert!(n <= 20, "brute force limited to 20 points");
    let mut best = 0.0f64;
    for mask in 1u32..(1u32 << n) {
        let mut sum = 0.0;
        let mut prev: Option<usize> = None;
        for j in 0..n {
            if mask & (1 << j) != 0 {
                if let Some(i) = prev {
                    sum += d2(i, j);
                }
                prev = Some(j);
            }
        }
        best = best.max(sum);
    }
    best.sqrt()
}

/// Samples `v(t_0), ..., v(t_n)` with the conventions `v(-inf) = v(t_0)` and
/// `v(+inf) = 0`.
#[derive(Clone, Debug)]
pub struct SampledPath {
    pub values: Vec<SpectralField>,
    pub prepend_limit: bool,
    pub append_zero: bool,
}

impl SampledPath {
    pub fn new(values: Vec<SpectralField>) -> Result<Self> {
        if values.is_empty() {
            return Err(Kp5Error::Shape("empty path".into()));
        }
        let g = *values[0].grid();
        if values.iter().any(|v| *v.grid() != g) {
            return Err(Kp5Error::Shape("path values on different grids".into()));
        }
        Ok(SampledPath { values, prepend_limit: true, append_zero: true })
    }

    /// Points entering the partition search, convention points included.
    /// `None` stands for the zero vector at `+inf`.
    fn points(&self) -> Vec<Option<&SpectralField>> {
        let mut pts = Vec::with_capacity(self.values.len() + 2);
        if self.prepend_limit {
            pts.push(Some(&self.values[0]));
        }
        pts.extend(self.values.iter().map(Some));
        if self.append_zero {
            pts.push(None);
        }
        pts
    }

    /// Squared L2 distance matrix between all points.
    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        let pts = self.points();
        let sq = |a: Option<&SpectralField>, b: Option<&SpectralField>| match (a, b) {
            (Some(x), Some(y)) => l2_norm(&x.sub(y).expect("grids checked")).powi(2),
            (Some(x), None) | (None, Some(x)) => l2_norm(x).powi(2),
            (None, None) => 0.0,
        };
        pts.iter().map(|&a| pts.iter().map(|&b| sq(a, b)).collect()).collect()
    }
}

/// `||v||_{V^2}` over the sampled partition points.
pub fn v2_variation(path: &SampledPath) -> f64 {
    let d = path.distance_matrix();
    v2_from_distances(d.len(), |i, j| d[i][j])
}

/// Evenly spaced sample indices (always including both ends), at most `cap`.
pub fn decimate(n: usize, cap: usize) -> Vec<usize> {
    let cap = cap.max(2);
    if n <= cap {
        return (0..n).collect();
    }
    let stride = (n - 1).div_ceil(cap - 1);
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if *idx.last().unwrap() != n - 1 {
        idx.push(n - 1);
    }
    idx
}

/// Per-band coefficient vectors of `S(-t) P_N u(t)` at selected samples,
/// compressed to the band support on the `xi > 0` half plane.
struct BandPaths {
    weights: Vec<f64>,
    vectors: Vec<Vec<Vec<C64>>>,
}

fn band_paths(times: &[f64], fields: &[&SpectralField], params: &DispersionParams, ladder: &DyadicLadder) -> BandPaths {
    let g = *fields[0].grid();
    let modes: Vec<(usize, usize)> = g.half_modes().collect();
    let conj: Vec<SpectralField> = times.iter().zip(fields).map(|(&t, f)| propagate(f, -t, params)).collect();
    let cell = 2.0 * g.lx * g.ly;
    let mut weights = Vec::new();
    let mut vectors = Vec::new();
    for k in ladder.ks() {
        let support: Vec<(usize, f64)> = modes
            .iter()
            .filter_map(|&(ix, iy)| {
                let w = DyadicLadder::weight(k, g.xi(ix));
                (w != 0.0).then(|| (g.index(ix, iy), w * cell.sqrt()))
            })
            .collect();
        weights.push(DyadicLadder::scale(k));
        vectors.push(
            conj.iter()
                .map(|f| support.iter().map(|&(idx, w)| f.coeffs()[idx] * w).collect())
                .collect(),
        );
    }
    BandPaths { weights, vectors }
}

fn band_v2(vecs: &[Vec<C64>]) -> f64 {
    // points: v(-inf) = v(t_0), the samples, v(+inf) = 0
    let n = vecs.len();
    let pt = |i: usize| -> Option<&Vec<C64>> {
        if i == 0 {
            Some(&vecs[0])
        } else if i <= n {
            Some(&vecs[i - 1])
        } else {
            None
        }
    };
    v2_from_distances(n + 2, |i, j| match (pt(i), pt(j)) {
        (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum(),
        (Some(a), None) | (None, Some(a)) => a.iter().map(|x| x.norm_sqr()).sum(),
        (None, None) => 0.0,
    })
}

/// `(sum_N N^{2s} ||S(-t) P_N u||_{V^2}^2)^(1/2)` over at most `cap` samples.
pub fn ydot_norm_with(traj: &FieldTrajectory, s: f64, params: &DispersionParams, ladder: &DyadicLadder, cap: usize) -> f64 {
    let idx = decimate(traj.len(), cap);
    let times: Vec<f64> = idx.iter().map(|&m| traj.time(m)).collect();
    let fields: Vec<&SpectralField> = idx.iter().map(|&m| traj.snapshot(m)).collect();
    ydot_from_samples(&times, &fields, s, params, ladder)
}

/// Y-surrogate norm from explicit samples (time-ordered).
pub fn ydot_from_samples(times: &[f64], fields: &[&SpectralField], s: f64, params: &DispersionParams, ladder: &DyadicLadder) -> f64 {
    let bp = band_paths(times, fields, params, ladder);
    bp.weights
        .iter()
        .zip(&bp.vectors)
        .map(|(n, v)| n.powf(2.0 * s) * band_v2(v).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn ydot_norm(traj: &FieldTrajectory, s: f64, params: &DispersionParams, ladder: &DyadicLadder) -> f64 {
    ydot_norm_with(traj, s, params, ladder, DEFAULT_NORM_SAMPLES)
}

/// Names of the reported norms.
#[derive(Clone, Debug, PartialEq)]
pub enum NormKey {
    L2,
    Hm12,
    LqLr(f64, f64),
    V2S,
    Ydot(f64),
    ZdotSurrogate(f64),
}

impl std::fmt::Display for NormKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormKey::L2 => write!(f, "L2"),
            NormKey::Hm12 => write!(f, "Hm12"),
            NormKey::LqLr(q, r) => write!(f, "LqLr({q},{r})"),
            NormKey::V2S => write!(f, "V2S"),
            NormKey::Ydot(s) => write!(f, "Ydot({s})"),
            NormKey::ZdotSurrogate(s) => write!(f, "Zdot_surrogate({s})"),
        }
    }
}

/// Named norms; absent keys were not computed.
#[derive(Clone, Debug, Default, Serialize, PartialEq)]
#[serde(transparent)]
pub struct NormReport {
    entries: BTreeMap<String, f64>,
}

impl NormReport {
    pub fn insert(&mut self, key: NormKey, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Kp5Error::Numerical(format!("norm {key} = {value} is not a finite nonnegative number")));
        }
        self.entries.insert(key.to_string(), value);
        Ok(())
    }

    pub fn get(&self, key: &NormKey) -> Option<f64> {
        self.entries.get(&key.to_string()).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The L2 and H^{-1/2,0} norms of one field.
    pub fn of_field(f: &SpectralField) -> Self {
        let mut r = NormReport::default();
        r.entries.insert(NormKey::L2.to_string(), l2_norm(f));
        r.entries.insert(NormKey::Hm12.to_string(), hm12_norm(f));
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain map serializes")
    }
}
