mod common;

use common::{bump_ref, trapezoid};
use num_complex::Complex64;
use proptest::prelude::*;
use qghaar::quadrature::{gauss_hermite, gauss_legendre, hermite_rule, integrate_r, integrate_r_split, legendre_rule, Hint, XyRule};

fn c(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// ∫ t^k e^{−t²} dt = Γ((k+1)/2) for even k, computed by the recurrence.
fn gaussian_moment(k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let mut v = std::f64::consts::PI.sqrt();
    let mut j = 1.0;
    while j < k as f64 {
        v *= j / 2.0;
        j += 2.0;
    }
    v
}

#[test]
fn hermite_rule_is_exact_for_weighted_polynomials() {
    let d = gauss_hermite(32);
    for k in 0..40u32 {
        let s: f64 = d.nodes.iter().zip(&d.weights).map(|(t, w)| w * t.powi(k as i32)).sum();
        // odd moments cancel between ±t, so rounding scales with Σ w|t|^k
        let scale: f64 = d.nodes.iter().zip(&d.weights).map(|(t, w)| w * t.abs().powi(k as i32)).sum();
        let want = gaussian_moment(k);
        assert!((s - want).abs() <= 1e-14 * scale.max(1.0), "k = {k}: {s} vs {want}");
    }
}

#[test]
fn scaled_weights_keep_relative_accuracy_at_outer_nodes() {
    let d = gauss_hermite(64);
    for ((t, w), sw) in d.nodes.iter().zip(&d.weights).zip(&d.scaled_weights) {
        if *w > 1e-290 {
            assert!((w * (t * t).exp() - sw).abs() <= 1e-10 * sw);
        }
    }
}

#[test]
fn placed_hermite_rule_integrates_shifted_gaussians() {
    // ∫ exp(−(x − 0.7)²/(2·0.3²)) dx = 0.3·sqrt(2π), nodes placed elsewhere
    let rule = hermite_rule(40, 0.5, 0.4);
    let v = rule.integrate(|x| c((-(x - 0.7f64).powi(2) / (2.0 * 0.09)).exp()));
    let want = 0.3 * (2.0 * std::f64::consts::PI).sqrt();
    assert!((v.re - want).abs() < 1e-10);
}

#[test]
fn legendre_rule_is_exact_for_polynomials() {
    let base = gauss_legendre(24);
    for k in 0..48 {
        let s: f64 = base.nodes.iter().zip(&base.weights).map(|(t, w)| w * t.powi(k)).sum();
        let want = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
        assert!((s - want).abs() < 1e-14, "k = {k}");
    }
    let r = legendre_rule(8, -1.0, 3.0, 3);
    let v = r.integrate(|x| c(x * x));
    assert!((v.re - 28.0 / 3.0).abs() < 1e-13);
}

#[test]
fn bump_integral_matches_trapezoid_oracle() {
    let want = trapezoid(-1.3, 0.9, 20000, |r| c(bump_ref((r + 0.2) / 1.1)));
    // the bump is smooth but not analytic: two 24-node panels reach ~2e-8
    let got = integrate_r(24, -1.3, 0.9, |r| c(bump_ref((r + 0.2) / 1.1)));
    assert!((got - want).norm() < 5e-8 * want.norm(), "{got} vs {want}");
    let fine = integrate_r(64, -1.3, 0.9, |r| c(bump_ref((r + 0.2) / 1.1)));
    assert!((fine - want).norm() < 1e-11 * want.norm(), "{fine} vs {want}");
}

#[test]
fn split_integration_resolves_a_kinked_sum() {
    // two bumps with different supports: one panel set across the union
    // puts both inner edges inside a panel
    let f = |r: f64| c(bump_ref((r - 0.5) / 0.5) + bump_ref((r + 0.6) / 0.9));
    let want = trapezoid(-1.5, 1.0, 50000, f);
    let split = integrate_r_split(24, -1.5, 1.0, &[-0.3, 0.0], f);
    let plain = integrate_r(24, -1.5, 1.0, f);
    assert!((split - want).norm() < 1e-8 * want.norm());
    assert!((split - want).norm() < (plain - want).norm());
}

#[test]
fn empty_interval_gives_zero() {
    assert_eq!(integrate_r(24, 1.0, 1.0, |_| c(1.0)), c(0.0));
    assert_eq!(integrate_r(24, 1.0, 0.0, |_| c(1.0)), c(0.0));
}

#[test]
fn hint_algebra() {
    let a = Hint::new(vec![1.0, 0.0], vec![1.0, 2.0]);
    let b = Hint::new(vec![-1.0, 2.0], vec![1.0, 2.0]);
    let p = a.product(&b);
    assert!((p.center[0]).abs() < 1e-15 && (p.center[1] - 1.0).abs() < 1e-15);
    assert!((p.width[0] - 0.5f64.sqrt()).abs() < 1e-15);
    let cv = a.convolve(&b);
    assert!((cv.width[1] - 8f64.sqrt()).abs() < 1e-15 && cv.center[0] == 0.0);
    let pb = a.affine_pullback(2.0, &[1.0, 0.0]);
    assert_eq!(pb.center, vec![0.0, 0.0]);
    assert_eq!(pb.width, vec![0.5, 1.0]);
}

proptest! {
    #[test]
    // widths down to about half the hint width; narrower integrands fall between nodes
    fn xy_rule_integrates_separable_gaussians(cx in -1.0..1.0f64, cy in -1.0..1.0f64, w in 0.45..1.2f64) {
        let hint = Hint::new(vec![0.0, 0.0], vec![0.8, 0.8]);
        let v = XyRule::new(32, &hint).integrate(|x, y| {
            c((-(x[0] - cx).powi(2) / (2.0 * w * w) - (y[0] - cy).powi(2) / (2.0 * w * w)).exp())
        });
        let want = 2.0 * std::f64::consts::PI * w * w;
        prop_assert!((v.re - want).abs() < 1e-6 * want);
    }
}
