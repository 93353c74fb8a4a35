//! The band kernel `G_N(x, y, t)` of `S(t) P_N`.
//!
//! Integrating out `eta` (a Fresnel integral) leaves
//! `G_N = (2 pi)^-2 sqrt(pi / t) int |xi|^(1/2) psi_N(xi) exp(i phi) dxi` with
//! `phi = -sgn(xi) pi/4 + X xi + t (xi^5 + alpha xi^3)` and `X = x + y^2 / (4t)`.
//! The phase reaches ~1e11 for the top bands, so it is evaluated in
//! double-double arithmetic and reduced modulo `2 pi` before exponentiation.

use std::f64::consts::{FRAC_PI_4, PI};

use crate::dd::{two_prod, Dd};
use crate::error::{Kp5Error, Result};
use crate::propagator::bump_psi;
use crate::quadrature::{gk_adaptive, levin};
use crate::spectral::{fft_plan, DispersionParams, Grid, C64};

/// Requested accuracy, relative to the band's stationary-phase amplitude.
pub const KERNEL_REL_TOL: f64 = 1e-9;

/// Oscillations kept inside the stationary-point window handled by Gauss-Kronrod.
const WINDOW_OSCILLATIONS: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseConvention {
    /// `exp(+i phi)` as in the definition of `S(t)`.
    Standard,
    /// `exp(-i phi)`: the complex conjugate convention.
    Conjugate,
}

/// Smooth part of the phase shared by both half-lines, for `xi > 0`.
#[derive(Clone, Copy)]
struct Phase {
    x: f64,
    t: f64,
    alpha: f64,
}

impl Phase {
    fn dd(&self, xi: f64) -> Dd {
        let xi2 = two_prod(xi, xi);
        let xi3 = xi2.mulf(xi);
        let xi5 = xi3.mul(xi2);
        let poly = xi5.add(xi3.mulf(self.alpha));
        poly.mulf(self.t).add(two_prod(self.x, xi))
    }

    fn d1(&self, xi: f64) -> f64 {
        let xi2 = xi * xi;
        self.x + self.t * (5.0 * xi2 * xi2 + 3.0 * self.alpha * xi2)
    }

    fn d2(&self, xi: f64) -> f64 {
        self.t * (20.0 * xi * xi * xi + 6.0 * self.alpha * xi)
    }

    /// Root of the (increasing) first derivative on `xi > 0`, if any.
    fn stationary(&self, hint: f64) -> Option<f64> {
        if self.x >= 0.0 {
            return None;
        }
        let mut hi = hint.max(1e-300);
        while self.d1(hi) <= 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.d1(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

/// Typical size of the `xi` integral for band `N` at time `t`.
pub fn band_amplitude_scale(n: f64, t: f64, alpha: f64) -> f64 {
    let stationary = n.sqrt() * (2.0 * PI / (t * (20.0 * n.powi(3) + 6.0 * alpha * n))).sqrt();
    stationary.min(1.5 * n.powf(1.5))
}

/// `(2 pi)^-2 sqrt(pi / t)`, the factor left after the `eta` integration.
pub fn kernel_prefactor(t: f64) -> f64 {
    (PI / t).sqrt() / (4.0 * PI * PI)
}

/// `x` at which the phase is stationary at frequency `xi0` (with `y` fixed).
pub fn stationary_x(xi0: f64, y: f64, t: f64, alpha: f64) -> f64 {
    -t * (5.0 * xi0.powi(4) + 3.0 * alpha * xi0 * xi0) - y * y / (4.0 * t)
}

/// `G_N(x, y, t)` with the standard phase convention.
pub fn kernel_gn(n: f64, x: f64, y: f64, t: f64, params: &DispersionParams) -> Result<C64> {
    kernel_gn_with(n, x, y, t, params, PhaseConvention::Standard)
}

/// `G_N` under either phase convention. Both half-lines are integrated
/// separately: stationary-point windows by adaptive Gauss-Kronrod, the rest
/// by Levin collocation with bisection.
pub fn kernel_gn_with(
    n: f64,
    x: f64,
    y: f64,
    t: f64,
    params: &DispersionParams,
    convention: PhaseConvention,
) -> Result<C64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Kp5Error::Domain(format!("kernel requires t > 0, got {t}")));
    }
    if !(n > 0.0 && n.is_finite()) {
        return Err(Kp5Error::Domain(format!("band N={n} must be positive")));
    }
    let phase = Phase { x: x + y * y / (4.0 * t), t, alpha: params.alpha };
    let tol = KERNEL_REL_TOL * band_amplitude_scale(n, t, params.alpha);
    let sign = match convention {
        PhaseConvention::Standard => 1.0,
        PhaseConvention::Conjugate => -1.0,
    };
    // xi > 0 carries exp(-i pi/4); the mirrored half carries the opposite phase.
    let pos = integrate_half(&phase, n, sign, 0.5 * tol)? * C64::cis(-sign * FRAC_PI_4);
    let neg = integrate_half(&phase, n, -sign, 0.5 * tol)? * C64::cis(sign * FRAC_PI_4);
    Ok((pos + neg) * kernel_prefactor(t))
}

/// `int_{N/2}^{2N} xi^(1/2) psi(xi/N) exp(i s phi(xi)) dxi` with `s = +-1`.
fn integrate_half(phase: &Phase, n: f64, s: f64, tol: f64) -> Result<C64> {
    let (a, b) = (0.5 * n, 2.0 * n);
    let amp = move |xi: f64| xi.sqrt() * bump_psi(xi / n);
    let mut cuts = vec![a, n, b];
    let stat = phase.stationary(b);
    let mut window = None;
    if let Some(xs) = stat {
        let w = (4.0 * PI * WINDOW_OSCILLATIONS / phase.d2(xs)).sqrt();
        window = Some((xs - w, xs + w, xs));
        let mut d = w;
        while d < 4.0 * b {
            for c in [xs - d, xs + d] {
                if c > a && c < b {
                    cuts.push(c);
                }
            }
            d *= 2.0;
        }
    }
    cuts.sort_by(|p, q| p.total_cmp(q));
    cuts.dedup();
    let pieces = (cuts.len() - 1) as f64;
    let mut total = C64::new(0.0, 0.0);
    for win in cuts.windows(2) {
        let (l, r) = (win[0], win[1]);
        let inside = matches!(window, Some((wl, wr, _)) if l >= wl - 1e-12 * b && r <= wr + 1e-12 * b);
        total += if inside {
            let xs = window.unwrap().2;
            gk_relative(phase, &amp, s, l, r, xs, tol / pieces)?
        } else {
            levin_adaptive(phase, &amp, s, l, r, tol / pieces, 40)?
        };
    }
    Ok(total)
}

/// Gauss-Kronrod with the phase measured from a reference point.
fn gk_relative(phase: &Phase, amp: &impl Fn(f64) -> f64, s: f64, l: f64, r: f64, xref: f64, tol: f64) -> Result<C64> {
    let p0 = phase.dd(xref);
    let mut f = |xi: f64| C64::cis(s * phase.dd(xi).add(p0.neg()).to_f64()) * amp(xi);
    let v = gk_adaptive(&mut f, l, r, tol, 50)?;
    Ok(v * C64::cis(s * p0.reduce()))
}

fn levin_adaptive(phase: &Phase, amp: &impl Fn(f64) -> f64, s: f64, l: f64, r: f64, tol: f64, depth: u32) -> Result<C64> {
    let oscillations = (r - l) * phase.d1(l).abs().max(phase.d1(r).abs()) / (2.0 * PI);
    if oscillations < 4.0 {
        return gk_relative(phase, amp, s, l, r, l, tol);
    }
    let e = |xi: f64| C64::cis(s * phase.dd(xi).reduce());
    let dphase = |xi: f64| s * phase.d1(xi);
    let (el, er) = (e(l), e(r));
    let coarse = levin(amp, &dphase, el, er, l, r, 16)?;
    let fine = levin(amp, &dphase, el, er, l, r, 32)?;
    if (fine - coarse).norm() <= tol {
        return Ok(fine);
    }
    if depth == 0 {
        return Err(Kp5Error::Numerical(format!(
            "Levin quadrature stalled on [{l}, {r}] (X={}, t={}): |I32-I16|={:.3e} > tol {tol:.3e}",
            phase.x,
            phase.t,
            (fine - coarse).norm()
        )));
    }
    let m = 0.5 * (l + r);
    Ok(levin_adaptive(phase, amp, s, l, m, 0.5 * tol, depth - 1)? + levin_adaptive(phase, amp, s, m, r, 0.5 * tol, depth - 1)?)
}

/// Independent evaluation of `G_N` as a function of `X = x + y^2/(4t)` by
/// a Riemann sum over a uniform `xi` grid, summed with one inverse FFT.
/// Returns `(X_j, G_N(X_j))` for `X_j = j 2pi / (npts dxi)`, `j` signed.
pub fn kernel_gn_fft(n: f64, t: f64, params: &DispersionParams, npts: usize, dxi: f64) -> Vec<(f64, f64)> {
    let phase = Phase { x: 0.0, t, alpha: params.alpha };
    let mut buf: Vec<C64> = (0..npts)
        .map(|k| {
            let xi = Grid::signed(k, npts) as f64 * dxi;
            let w = bump_psi(xi / n);
            if w == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let a = xi.abs();
            let ph = phase.dd(a).reduce();
            // the xi < 0 half is the mirror image with the conjugate phase
            let h = C64::cis(ph - FRAC_PI_4) * (a.sqrt() * w);
            if xi > 0.0 {
                h
            } else {
                h.conj()
            }
        })
        .collect();
    fft_plan(npts, true).process(&mut buf);
    let dx = 2.0 * PI / (npts as f64 * dxi);
    let pref = kernel_prefactor(t) * dxi;
    (0..npts).map(|j| (Grid::signed(j, npts) as f64 * dx, buf[j].re * pref)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd::TWO_PI_DD;

    #[test]
    fn double_double_reduction_is_accurate() {
        // (2^40 + 0.25) * 2 pi reduces to pi/2 up to rounding of the input
        let v = Dd { hi: 1099511627776.25, lo: 0.0 }.mul(TWO_PI_DD).reduce();
        assert!((v - PI / 2.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn kernel_is_real_and_convention_invariant() {
        let p = DispersionParams::new(1.0).unwrap();
        for &(n, x, t) in &[(1.0, -3.0, 1.0), (4.0, -1200.0, 1.0), (8.0, 50.0, 2.0)] {
            let g = kernel_gn(n, x, 0.7, t, &p).unwrap();
            let c = kernel_gn_with(n, x, 0.7, t, &p, PhaseConvention::Conjugate).unwrap();
            let scale = band_amplitude_scale(n, t, 1.0) * kernel_prefactor(t);
            assert!(g.im.abs() < 1e-8 * scale);
            assert!((g.norm() - c.norm()).abs() < 1e-9 * scale.max(g.norm()));
        }
    }

    #[test]
    fn kernel_depends_on_x_plus_y2_over_4t() {
        let p = DispersionParams::new(1.0).unwrap();
        let a = kernel_gn(2.0, -40.0, 0.0, 1.5, &p).unwrap();
        let b = kernel_gn(2.0, -40.0 - 9.0 / 6.0, 3.0, 1.5, &p).unwrap();
        assert!((a - b).norm() < 1e-10 * a.norm().max(1e-3));
    }

    #[test]
    fn quadrature_matches_brute_force_at_low_band() {
        // direct Gauss-Kronrod over the whole band is feasible for N = 1, t = 1
        let p = DispersionParams::new(1.0).unwrap();
        let (n, x, t) = (1.0, -5.0, 1.0);
        let ph = Phase { x, t, alpha: 1.0 };
        let mut f = |xi: f64| C64::cis(ph.dd(xi).to_f64() - FRAC_PI_4) * (xi.sqrt() * bump_psi(xi));
        let half = gk_adaptive(&mut f, 0.5, 2.0, 1e-14, 50).unwrap();
        let want = 2.0 * half.re * kernel_prefactor(t);
        let got = kernel_gn(n, x, 0.0, t, &p).unwrap().re;
        assert!((got - want).abs() < 1e-11, "{got} vs {want}");
    }

    #[test]
    fn rejects_nonpositive_time() {
        let p = DispersionParams::new(1.0).unwrap();
        assert!(kernel_gn(4.0, 0.0, 0.0, 0.0, &p).is_err());
    }
}
