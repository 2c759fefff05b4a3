#![allow(dead_code)]

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

/// exp(−2πi t) without argument reduction.
pub fn ebar_ref(t: f64) -> Complex64 {
    Complex64::from_polar(1.0, -TAU * t)
}

/// (e^{2λr} − 1)/(2λ) from the Taylor series, summed until terms vanish.
pub fn eta_ref(lambda: f64, r: f64) -> f64 {
    let x = 2.0 * lambda * r;
    let mut term = r;
    let mut sum = 0.0;
    let mut k = 1.0;
    while term.abs() > 1e-300 && k < 200.0 {
        sum += term;
        k += 1.0;
        term *= x / k;
    }
    sum
}

pub fn bump_ref(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// Physicists' Hermite polynomial from the explicit sum formula.
pub fn hermite_ref(k: u32, t: f64) -> f64 {
    let fact = |m: u32| (1..=m).map(f64::from).product::<f64>();
    (0..=k / 2)
        .map(|m| {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            sign * fact(k) / (fact(m) * fact(k - 2 * m)) * (2.0 * t).powi((k - 2 * m) as i32)
        })
        .sum()
}

/// Trapezoid rule on [lo, hi] with `m` intervals; spectrally accurate for
/// smooth integrands that vanish with all derivatives at both ends.
pub fn trapezoid<F: FnMut(f64) -> Complex64>(lo: f64, hi: f64, m: usize, mut f: F) -> Complex64 {
    let h = (hi - lo) / m as f64;
    let mut s = 0.5 * (f(lo) + f(hi));
    for i in 1..m {
        s += f(lo + i as f64 * h);
    }
    s * h
}

/// Two-dimensional trapezoid on a square.
pub fn trapezoid2<F: FnMut(f64, f64) -> Complex64>(lo: f64, hi: f64, m: usize, mut f: F) -> Complex64 {
    let h = (hi - lo) / m as f64;
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..=m {
        let wi = if i == 0 || i == m { 0.5 } else { 1.0 };
        let x = lo + i as f64 * h;
        for j in 0..=m {
            let wj = if j == 0 || j == m { 0.5 } else { 1.0 };
            s += f(x, lo + j as f64 * h) * (wi * wj);
        }
    }
    s * h * h
}

pub fn gauss_1d(c: f64, w: f64, x: f64) -> f64 {
    let t = (x - c) / w;
    (-0.5 * t * t).exp()
}

pub fn sqrt_pi() -> f64 {
    PI.sqrt()
}
