//! Scalar kernels: the phases ē and e, η_λ, the pairing β and the cocycle σ^r.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Below this value of |2λr| the closed form of η_λ is replaced by its series.
pub const ETA_SERIES_SWITCH: f64 = 1e-4;

/// ē(t) = exp(−2πi t). The argument is reduced modulo 1 first so that large
/// arguments keep full phase accuracy.
#[inline]
pub fn ebar(t: f64) -> Complex64 {
    let frac = t - t.round();
    Complex64::cis(-TAU * frac)
}

/// e(t) = exp(+2πi t) = conj(ē(t)).
#[inline]
pub fn e_fwd(t: f64) -> Complex64 {
    ebar(t).conj()
}

pub fn ebar_checked(t: f64) -> Result<Complex64> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("ebar argument must be finite, got {t}")));
    }
    Ok(ebar(t))
}

pub fn e_fwd_checked(t: f64) -> Result<Complex64> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("e argument must be finite, got {t}")));
    }
    Ok(e_fwd(t))
}

/// η_λ(r) = (e^{2λr} − 1)/(2λ), continuous through λ = 0.
#[inline]
pub fn eta(lambda: f64, r: f64) -> f64 {
    let x = 2.0 * lambda * r;
    if x.abs() < ETA_SERIES_SWITCH {
        let l = lambda;
        r * (1.0 + l * r * (1.0 + l * r * (2.0 / 3.0 + l * r / 3.0)))
    } else {
        x.exp_m1() / (2.0 * lambda)
    }
}

/// Euclidean pairing Σ x_i y_i.
#[inline]
pub fn beta(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn beta_checked(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape { expected: x.len(), got: y.len() });
    }
    Ok(beta(x, y))
}

/// σ^r((x, y), (x2, y2)) = ē(η_λ(r) β(x, y2)). `y` does not enter.
pub fn sigma_cocycle(
    lambda: f64,
    r: f64,
    x: &[f64],
    y: &[f64],
    x2: &[f64],
    y2: &[f64],
) -> Result<Complex64> {
    let n = x.len();
    for v in [y, x2, y2] {
        if v.len() != n {
            return Err(Error::Shape { expected: n, got: v.len() });
        }
    }
    Ok(ebar(eta(lambda, r) * beta(x, y2)))
}
