//! Adaptive Gauss-Kronrod and Levin collocation for 1-D integrals.

use nalgebra::{DMatrix, DVector};

use crate::error::{Kp5Error, Result};
use crate::spectral::C64;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 7/15-point Gauss-Kronrod panel: `(kronrod, |kronrod - gauss|)`.
pub fn gk15(f: &mut impl FnMut(f64) -> C64, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += s * WGK[i];
        if i % 2 == 1 {
            g += s * WG[i / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Adaptive bisection until each panel meets its share of `tol` (absolute).
pub fn gk_adaptive(f: &mut impl FnMut(f64) -> C64, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<C64> {
    let (v, e) = gk15(f, a, b);
    if e <= tol || (b - a).abs() <= 1e-15 * a.abs().max(b.abs()) {
        return Ok(v);
    }
    if max_depth == 0 {
        return Err(Kp5Error::Numerical(format!(
            "Gauss-Kronrod did not converge on [{a}, {b}]: error {e:.3e} > tol {tol:.3e}"
        )));
    }
    let m = 0.5 * (a + b);
    Ok(gk_adaptive(f, a, m, 0.5 * tol, max_depth - 1)? + gk_adaptive(f, m, b, 0.5 * tol, max_depth - 1)?)
}

/// Real-valued convenience wrapper around [`gk_adaptive`].
pub fn gk_adaptive_real(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut g = |x: f64| C64::new(f(x), 0.0);
    Ok(gk_adaptive(&mut g, a, b, tol, 60)?.re)
}

/// Levin collocation for `int_a^b amp(x) exp(i phase(x)) dx`.
///
/// Solves `F' + i phase'(x) F = amp` on `n` Chebyshev-Lobatto points and
/// returns `F(b) e(b) - F(a) e(a)`, where `e(x) = exp(i phase(x))` is supplied
/// by the caller so that large phases can be reduced accurately.
pub fn levin(
    amp: &impl Fn(f64) -> f64,
    dphase: &impl Fn(f64) -> f64,
    ea: C64,
    eb: C64,
    a: f64,
    b: f64,
    n: usize,
) -> Result<C64> {
    let half = 0.5 * (b - a);
    let mut m = DMatrix::<C64>::zeros(n, n);
    let mut rhs = DVector::<C64>::zeros(n);
    let mut t = vec![0.0; n];
    let mut dt = vec![0.0; n];
    for j in 0..n {
        let s = (std::f64::consts::PI * j as f64 / (n - 1) as f64).cos();
        let x = a + half * (s + 1.0);
        cheb(s, &mut t, &mut dt);
        let w = dphase(x);
        for k in 0..n {
            m[(j, k)] = C64::new(dt[k] / half, w * t[k]);
        }
        rhs[j] = C64::new(amp(x), 0.0);
    }
    let c = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Kp5Error::Numerical(format!("singular Levin system on [{a}, {b}]")))?;
    // T_k(1) = 1 and T_k(-1) = (-1)^k
    let fb: C64 = c.iter().sum();
    let fa: C64 = c.iter().enumerate().map(|(k, v)| if k % 2 == 0 { *v } else { -*v }).sum();
    Ok(fb * eb - fa * ea)
}

/// Chebyshev polynomials and their derivatives at `s`.
fn cheb(s: f64, t: &mut [f64], dt: &mut [f64]) {
    let n = t.len();
    t[0] = 1.0;
    dt[0] = 0.0;
    if n > 1 {
        t[1] = s;
        dt[1] = 1.0;
    }
    for k in 1..n - 1 {
        t[k + 1] = 2.0 * s * t[k] - t[k - 1];
        dt[k + 1] = 2.0 * t[k] + 2.0 * s * dt[k] - dt[k - 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_polynomial_exact() {
        let v = gk_adaptive_real(|x| x.powi(6) - 2.0 * x, 0.0, 2.0, 1e-14).unwrap();
        assert!((v - (128.0 / 7.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn levin_matches_closed_form() {
        // int_1^2 exp(i w x) dx = (e^{2iw} - e^{iw}) / (i w)
        let w = 1e4;
        let e = |x: f64| C64::cis(w * x);
        let v = levin(&|_| 1.0, &|_| w, e(1.0), e(2.0), 1.0, 2.0, 16).unwrap();
        let want = (e(2.0) - e(1.0)) / C64::new(0.0, w);
        assert!((v - want).norm() < 1e-14);
    }

    #[test]
    fn levin_smooth_amplitude_quadratic_phase() {
        // reference by brute-force GK on a moderately oscillatory integral
        let amp = |x: f64| x.sqrt();
        let ph = |x: f64| 40.0 * x * x;
        let mut f = |x: f64| C64::cis(ph(x)) * amp(x);
        let want = gk_adaptive(&mut f, 1.0, 2.0, 1e-13, 40).unwrap();
        let got = levin(&amp, &|x| 80.0 * x, C64::cis(ph(1.0)), C64::cis(ph(2.0)), 1.0, 2.0, 32).unwrap();
        assert!((got - want).norm() < 1e-10, "{got} vs {want}");
    }
}
