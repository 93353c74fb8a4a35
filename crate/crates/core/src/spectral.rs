//! Periodic grids, spectral fields, transforms and the dispersion symbol.
//!
//! A field is stored by its Fourier coefficients,
//! `u(x, y) = sum_{j,k} c[j,k] exp(i (xi_j x + eta_k y))`, with
//! `xi_j = 2 pi j / lx` and `j` in `-nx/2 .. nx/2-1` (likewise for `eta`).
//! Coefficients are kept in FFT storage order: storage index `ix` holds
//! `j = ix` for `ix < nx/2` and `j = ix - nx` otherwise. The array is
//! row-major in `y` with the `x` index fastest.
//!
//! With this normalization `||u||_{L^2}^2 = lx ly sum |c|^2`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Kp5Error, Result};

pub type C64 = Complex64;

/// Regular periodic grid on `[0, lx) x [0, ly)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Grid> {
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 2 || !n.is_power_of_two() {
                return Err(Kp5Error::Domain(format!("{name}={n} must be a power of two >= 2")));
            }
        }
        for (name, l) in [("lx", lx), ("ly", ly)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Kp5Error::Domain(format!("{name}={l} must be positive")));
            }
        }
        Ok(Grid { nx, ny, lx, ly })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.lx
    }

    pub fn deta(&self) -> f64 {
        2.0 * PI / self.ly
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// Signed lattice index of storage position `i` for an axis of length `n`.
    #[inline]
    pub fn signed(i: usize, n: usize) -> i64 {
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// Storage position of signed lattice index `j`.
    #[inline]
    pub fn storage(j: i64, n: usize) -> usize {
        j.rem_euclid(n as i64) as usize
    }

    #[inline]
    pub fn xi(&self, ix: usize) -> f64 {
        Self::signed(ix, self.nx) as f64 * self.dxi()
    }

    #[inline]
    pub fn eta(&self, iy: usize) -> f64 {
        Self::signed(iy, self.ny) as f64 * self.deta()
    }

    /// Largest resolved |xi| (the Nyquist line itself is always zero).
    pub fn xi_max(&self) -> f64 {
        (self.nx / 2 - 1) as f64 * self.dxi()
    }

    pub fn eta_max(&self) -> f64 {
        (self.ny / 2 - 1) as f64 * self.deta()
    }

    /// Storage position of the Hermitian partner `(-j, -k)`.
    #[inline]
    pub fn partner(&self, ix: usize, iy: usize) -> (usize, usize) {
        ((self.nx - ix) % self.nx, (self.ny - iy) % self.ny)
    }

    /// True on the zero x-mean column and on both Nyquist lines.
    #[inline]
    pub fn is_excluded(&self, ix: usize, iy: usize) -> bool {
        ix == 0 || ix == self.nx / 2 || iy == self.ny / 2
    }

    /// Storage positions with `j > 0`: one representative per Hermitian pair.
    pub fn half_modes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (nx, ny) = (self.nx, self.ny);
        (0..ny)
            .filter(move |&iy| iy != ny / 2)
            .flat_map(move |iy| (1..nx / 2).map(move |ix| (ix, iy)))
    }

    /// Modes kept by a dealiasing filter with the given fraction.
    #[inline]
    pub fn retained(&self, ix: usize, iy: usize, fraction: f64) -> bool {
        let kx = (fraction * (self.nx / 2) as f64 + 1e-9).floor() as i64;
        let ky = (fraction * (self.ny / 2) as f64 + 1e-9).floor() as i64;
        Self::signed(ix, self.nx).abs() <= kx && Self::signed(iy, self.ny).abs() <= ky
    }
}

/// Coefficients of the linear group: `p(xi, eta) = xi^5 + alpha xi^3 - eta^2 / xi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DispersionParams {
    pub alpha: f64,
    pub beta: f64,
}

impl DispersionParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Kp5Error::Domain(format!("alpha={alpha}: alpha>0 required")));
        }
        Ok(DispersionParams { alpha, beta: -1.0 })
    }

    /// The symbol, rejecting the singular line `xi = 0`.
    pub fn symbol(&self, xi: f64, eta: f64) -> Result<f64> {
        if xi == 0.0 {
            return Err(Kp5Error::Domain("dispersion symbol is singular at xi = 0".into()));
        }
        Ok(self.p(xi, eta))
    }

    /// The symbol without the `xi = 0` check.
    #[inline]
    pub fn p(&self, xi: f64, eta: f64) -> f64 {
        let xi2 = xi * xi;
        -self.beta * xi2 * xi2 * xi + self.alpha * xi2 * xi - eta * eta / xi
    }

    /// Largest |p| over grid modes kept by the dealiasing fraction.
    pub fn max_abs_symbol(&self, grid: &Grid, fraction: f64) -> f64 {
        grid.half_modes()
            .filter(|&(ix, iy)| grid.retained(ix, iy, fraction))
            .map(|(ix, iy)| self.p(grid.xi(ix), grid.eta(iy)).abs())
            .fold(0.0, f64::max)
    }
}

/// Fourier coefficients of a real field with zero x-mean.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<C64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        SpectralField { grid, coeffs: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    /// Wrap coefficients without checking the constraints.
    /// Use [`project_constraints`] or [`SpectralField::check_invariants`] afterwards.
    pub fn from_raw(grid: Grid, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Kp5Error::Shape(format!(
                "{} coefficients for a {}x{} grid",
                coeffs.len(),
                grid.nx,
                grid.ny
            )));
        }
        Ok(SpectralField { grid, coeffs })
    }

    /// Wrap coefficients, requiring the constraints to hold exactly.
    pub fn from_coeffs(grid: Grid, coeffs: Vec<C64>) -> Result<Self> {
        let f = Self::from_raw(grid, coeffs)?;
        f.check_invariants()?;
        Ok(f)
    }

    /// Build a field from a function of `(xi, eta)` evaluated on the `xi > 0`
    /// half plane; the other half is filled by conjugation.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> C64) -> Self {
        let mut out = Self::zeros(grid);
        for (ix, iy) in grid.half_modes() {
            let c = f(grid.xi(ix), grid.eta(iy));
            out.set_pair(ix, iy, c);
        }
        out
    }

    #[inline]
    pub fn set_pair(&mut self, ix: usize, iy: usize, c: C64) {
        let g = self.grid;
        let (px, py) = g.partner(ix, iy);
        self.coeffs[g.index(ix, iy)] = c;
        self.coeffs[g.index(px, py)] = c.conj();
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> C64 {
        self.coeffs[self.grid.index(ix, iy)]
    }

    /// Coefficient at signed lattice indices `(j, k)`.
    pub fn mode(&self, j: i64, k: i64) -> C64 {
        let g = &self.grid;
        self.get(Grid::storage(j, g.nx), Grid::storage(k, g.ny))
    }

    /// Apply `f(xi, eta, c)` on the half plane and mirror by conjugation.
    /// `f` must be the restriction of a map that commutes with conjugation.
    pub fn map_modes(&self, mut f: impl FnMut(f64, f64, C64) -> C64) -> Self {
        let g = self.grid;
        let mut out = Self::zeros(g);
        for (ix, iy) in g.half_modes() {
            let c = f(g.xi(ix), g.eta(iy), self.get(ix, iy));
            out.set_pair(ix, iy, c);
        }
        out
    }

    /// Multiply by a real multiplier that is even under `(xi, eta) -> -(xi, eta)`.
    pub fn multiply_real(&self, mut m: impl FnMut(f64, f64) -> f64) -> Self {
        self.map_modes(|xi, eta, c| c * m(xi, eta))
    }

    pub fn same_grid(&self, other: &SpectralField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Kp5Error::Shape(format!("grid mismatch: {:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    pub fn add(&self, other: &SpectralField) -> Result<Self> {
        self.same_grid(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(SpectralField { grid: self.grid, coeffs })
    }

    pub fn sub(&self, other: &SpectralField) -> Result<Self> {
        self.same_grid(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(SpectralField { grid: self.grid, coeffs })
    }

    pub fn scale(&self, s: f64) -> Self {
        SpectralField { grid: self.grid, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &SpectralField) -> Result<Self> {
        self.same_grid(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b * s).collect();
        Ok(SpectralField { grid: self.grid, coeffs })
    }

    /// The field `u(-x, y)`.
    pub fn reflect_x(&self) -> Self {
        let g = self.grid;
        let mut out = Self::zeros(g);
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                out.coeffs[g.index((g.nx - ix) % g.nx, iy)] = self.get(ix, iy);
            }
        }
        out
    }

    /// Zero every mode not kept by the dealiasing fraction.
    pub fn truncate(&self, fraction: f64) -> Self {
        let g = self.grid;
        let mut out = self.clone();
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                if !g.retained(ix, iy, fraction) {
                    out.coeffs[g.index(ix, iy)] = C64::new(0.0, 0.0);
                }
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// Check Hermitian symmetry, zero x-mean and zero Nyquist lines exactly.
    pub fn check_invariants(&self) -> Result<()> {
        let g = self.grid;
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let c = self.get(ix, iy);
                if g.is_excluded(ix, iy) {
                    if c.re != 0.0 || c.im != 0.0 {
                        return Err(Kp5Error::Constraint(format!(
                            "mode (j={}, k={}) must vanish, found {c}",
                            Grid::signed(ix, g.nx),
                            Grid::signed(iy, g.ny)
                        )));
                    }
                    continue;
                }
                let (px, py) = g.partner(ix, iy);
                if self.get(px, py) != c.conj() {
                    return Err(Kp5Error::Constraint(format!(
                        "Hermitian symmetry broken at (j={}, k={})",
                        Grid::signed(ix, g.nx),
                        Grid::signed(iy, g.ny)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Real Gaussian packet `exp(-(|xi| - xi0)^2 / (2 s_xi^2) - eta^2 / (2 s_eta^2))`
/// on the modes kept by `fraction`, unnormalized.
pub fn gaussian_packet(grid: Grid, xi0: f64, s_xi: f64, s_eta: f64, fraction: f64) -> SpectralField {
    let f = SpectralField::from_fn(grid, |xi, eta| {
        let e = (xi.abs() - xi0).powi(2) / (2.0 * s_xi * s_xi) + eta * eta / (2.0 * s_eta * s_eta);
        C64::new((-e).exp(), 0.0)
    });
    f.truncate(fraction)
}

/// Enforce the field constraints: average each Hermitian pair, zero the
/// x-mean column and the Nyquist lines. Idempotent and bit-exact on valid input.
pub fn project_constraints(f: &SpectralField) -> SpectralField {
    let g = *f.grid();
    let mut out = SpectralField::zeros(g);
    for (ix, iy) in g.half_modes() {
        let (px, py) = g.partner(ix, iy);
        let c = (f.get(ix, iy) + f.get(px, py).conj()) * 0.5;
        out.set_pair(ix, iy, c);
    }
    out
}

thread_local! {
    static PLANNER: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

/// Cached 1-D FFT plan. `inverse` selects the `exp(+i...)` direction.
pub fn fft_plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if let Some(f) = p.1.get(&(n, inverse)) {
            return f.clone();
        }
        let f = if inverse { p.0.plan_fft_inverse(n) } else { p.0.plan_fft_forward(n) };
        p.1.insert((n, inverse), f.clone());
        f
    })
}

/// Unnormalized 2-D FFT in place on a row-major `ny x nx` buffer.
pub(crate) fn fft2(buf: &mut [C64], nx: usize, ny: usize, inverse: bool) {
    fft_plan(nx, inverse).process(buf);
    let mut t = vec![C64::new(0.0, 0.0); nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            t[ix * ny + iy] = buf[iy * nx + ix];
        }
    }
    fft_plan(ny, inverse).process(&mut t);
    for iy in 0..ny {
        for ix in 0..nx {
            buf[iy * nx + ix] = t[ix * ny + iy];
        }
    }
}

/// Samples of the field at `x_m = m lx / nx`, `y_n = n ly / ny`, row-major in `y`.
pub fn to_physical(f: &SpectralField) -> Vec<f64> {
    let g = f.grid();
    let mut buf = f.coeffs().to_vec();
    fft2(&mut buf, g.nx, g.ny, true);
    buf.into_iter().map(|c| c.re).collect()
}

/// Forward transform of real samples. Returns the projected field and the
/// L2 mass of the discarded part (x-mean, Nyquist lines, rounding asymmetry).
pub fn to_spectral(samples: &[f64], grid: Grid) -> Result<(SpectralField, f64)> {
    if samples.len() != grid.len() {
        return Err(Kp5Error::Shape(format!(
            "{} samples for a {}x{} grid",
            samples.len(),
            grid.nx,
            grid.ny
        )));
    }
    let mut buf: Vec<C64> = samples.iter().map(|&s| C64::new(s, 0.0)).collect();
    fft2(&mut buf, grid.nx, grid.ny, false);
    let inv = 1.0 / grid.len() as f64;
    buf.iter_mut().for_each(|c| *c *= inv);
    let raw = SpectralField { grid, coeffs: buf };
    let proj = project_constraints(&raw);
    let dropped: f64 = raw.coeffs.iter().zip(proj.coeffs()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok((proj, (grid.lx * grid.ly * dropped).sqrt()))
}

const FIELD_MAGIC: &[u8; 4] = b"KP5F";
const FIELD_VERSION: u32 = 1;

/// Write a snapshot record: magic, version, nx, ny (u32), lx, ly (f64),
/// then interleaved (re, im) pairs in storage order, all little-endian.
pub fn write_snapshot(w: &mut impl Write, f: &SpectralField) -> Result<()> {
    let g = f.grid();
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&FIELD_VERSION.to_le_bytes())?;
    w.write_all(&(g.nx as u32).to_le_bytes())?;
    w.write_all(&(g.ny as u32).to_le_bytes())?;
    w.write_all(&g.lx.to_le_bytes())?;
    w.write_all(&g.ly.to_le_bytes())?;
    let mut bytes = Vec::with_capacity(16 * g.len());
    for c in f.coeffs() {
        bytes.extend_from_slice(&c.re.to_le_bytes());
        bytes.extend_from_slice(&c.im.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_snapshot(r: &mut impl Read) -> Result<SpectralField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Kp5Error::Format("missing KP5F magic".into()));
    }
    let version = read_u32(r)?;
    if version != FIELD_VERSION {
        return Err(Kp5Error::Format(format!("unsupported snapshot version {version}")));
    }
    let nx = read_u32(r)? as usize;
    let ny = read_u32(r)? as usize;
    let lx = read_f64(r)?;
    let ly = read_f64(r)?;
    let grid = Grid::new(nx, ny, lx, ly)?;
    let mut bytes = vec![0u8; 16 * grid.len()];
    r.read_exact(&mut bytes)?;
    let coeffs = bytes
        .chunks_exact(16)
        .map(|b| {
            let re = f64::from_le_bytes(b[..8].try_into().unwrap());
            let im = f64::from_le_bytes(b[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect();
    SpectralField::from_coeffs(grid, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: Grid, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpectralField::from_fn(grid, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn l2(f: &SpectralField) -> f64 {
        let g = f.grid();
        (g.lx * g.ly * f.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    #[test]
    fn symbol_examples() {
        let p = DispersionParams::new(1.0).unwrap();
        assert_eq!(p.symbol(1.0, 0.0).unwrap(), 2.0);
        assert_eq!(p.symbol(-1.0, 0.0).unwrap(), -2.0);
        assert_eq!(p.symbol(2.0, 4.0).unwrap(), 32.0);
        assert!(matches!(p.symbol(0.0, 1.0), Err(Kp5Error::Domain(_))));
    }

    #[test]
    fn params_reject_nonpositive_alpha() {
        assert!(DispersionParams::new(-1.0).is_err());
        assert!(DispersionParams::new(0.0).is_err());
    }

    #[test]
    fn grid_requires_powers_of_two() {
        assert!(Grid::new(48, 32, 1.0, 1.0).is_err());
        assert!(Grid::new(32, 32, -1.0, 1.0).is_err());
        assert!(Grid::new(32, 16, 1.0, 2.0).is_ok());
    }

    #[test]
    fn zero_round_trip() {
        let g = Grid::new(16, 8, 2.0 * PI, 2.0 * PI).unwrap();
        let f = SpectralField::zeros(g);
        let s = to_physical(&f);
        assert!(s.iter().all(|&v| v == 0.0));
        let (back, dropped) = to_spectral(&s, g).unwrap();
        assert_eq!(back, f);
        assert_eq!(dropped, 0.0);
    }

    #[test]
    fn single_cosine_mode() {
        let g = Grid::new(16, 8, 2.0 * PI, 2.0 * PI).unwrap();
        // cos(x) = (e^{ix} + e^{-ix}) / 2
        let f = SpectralField::from_fn(g, |xi, eta| {
            if xi == 1.0 && eta == 0.0 {
                C64::new(0.5, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let s = to_physical(&f);
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let x = ix as f64 * g.lx / g.nx as f64;
                assert!((s[g.index(ix, iy)] - x.cos()).abs() < 1e-14);
            }
        }
        let (back, _) = to_spectral(&s, g).unwrap();
        for (a, b) in back.coeffs().iter().zip(f.coeffs()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn random_round_trip() {
        let g = Grid::new(64, 32, 10.0, 7.0).unwrap();
        let f = random_field(g, 7);
        let (back, dropped) = to_spectral(&to_physical(&f), g).unwrap();
        let err = l2(&back.sub(&f).unwrap()) / l2(&f);
        assert!(err < 1e-12, "round trip error {err}");
        assert!(dropped < 1e-12 * l2(&f));
    }

    #[test]
    fn round_trip_reports_discarded_mean() {
        let g = Grid::new(16, 16, 2.0 * PI, 2.0 * PI).unwrap();
        let s = vec![1.0; g.len()];
        let (f, dropped) = to_spectral(&s, g).unwrap();
        assert!(f.is_zero());
        assert!((dropped - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let g = Grid::new(8, 8, 1.0, 1.0).unwrap();
        let f = random_field(g, 3);
        assert_eq!(project_constraints(&f), f);
        f.check_invariants().unwrap();
        let mut c = f.coeffs().to_vec();
        for iy in 0..g.ny {
            c[g.index(0, iy)] = C64::new(1.0, 0.0);
        }
        let bad = SpectralField::from_raw(g, c).unwrap();
        assert!(bad.check_invariants().is_err());
        let p1 = project_constraints(&bad);
        assert_eq!(p1, f);
        assert_eq!(project_constraints(&p1), p1);
    }

    #[test]
    fn parseval() {
        let g = Grid::new(32, 64, 5.0, 9.0).unwrap();
        let f = random_field(g, 11);
        let s = to_physical(&f);
        let phys = (g.lx * g.ly / g.len() as f64 * s.iter().map(|v| v * v).sum::<f64>()).sqrt();
        assert!((phys / l2(&f) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn snapshot_round_trip() {
        let g = Grid::new(16, 8, 3.0, 4.0).unwrap();
        let f = random_field(g, 5);
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &f).unwrap();
        assert_eq!(&bytes[..4], b"KP5F");
        assert_eq!(read_snapshot(&mut bytes.as_slice()).unwrap(), f);
        bytes[0] = b'X';
        assert!(read_snapshot(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn reflection_preserves_invariants() {
        let g = Grid::new(16, 8, 3.0, 4.0).unwrap();
        let f = random_field(g, 9);
        let r = f.reflect_x();
        r.check_invariants().unwrap();
        assert_eq!(r.reflect_x(), f);
    }
}
