mod common;

use common::{ebar_ref, eta_ref, trapezoid, trapezoid2};
use num_complex::Complex64;
use proptest::prelude::*;
use qghaar::antipode::{antipode_fn, psi_phi_s_check, s_norm_check, s_squared_check, slice_antipode_check};
use qghaar::funcspace::Primitive;
use qghaar::weights::{counit_check, epsilon, kms_check, phi, psi, trace_check};
use qghaar::{CylFunction, ModelParams};

fn prim(kx: u32, cx: f64, w: f64, rc: f64, rh: f64) -> CylFunction {
    Primitive { kx: vec![kx], cx: vec![cx], ..Primitive::gaussian(1, w, rc, rh) }.unit().to_function()
}

#[test]
fn phi_and_psi_match_trapezoid() {
    // the bump needs more than the default r order for 1e-9
    let params = ModelParams { quad_r_order: 64, ..ModelParams::default() };
    let f = prim(2, 0.1, 0.5, 0.2, 0.7);
    let (lo, hi) = (0.2 - 0.7, 0.2 + 0.7);
    let want = trapezoid(lo, hi, 4000, |r| f.eval(&[0.0], &[0.0], r));
    let got = phi(&params, &f).unwrap();
    assert!((got - want).norm() < 1e-9 * want.norm(), "{got} vs {want}");
    let l = params.lambda;
    let want = trapezoid(lo, hi, 4000, |r| f.eval(&[0.0], &[0.0], r) * (-2.0 * l * r).exp());
    let got = psi(&params, &f).unwrap();
    assert!((got - want).norm() < 1e-9 * want.norm(), "{got} vs {want}");
}

#[test]
fn psi_is_phi_at_zero_lambda() {
    let params = ModelParams { lambda: 0.0, ..ModelParams::default() };
    let f = prim(1, 0.0, 0.5, 0.3, 0.6);
    assert!((psi(&params, &f).unwrap() - phi(&params, &f).unwrap()).norm() < 1e-15);
}

#[test]
fn epsilon_matches_trapezoid() {
    let params = ModelParams::default();
    let f = prim(0, 0.2, 0.6, 0.1, 0.5);
    let want = trapezoid2(-8.0, 8.0, 400, |x, y| f.eval(&[x], &[y], 0.0));
    let got = epsilon(&params, &f).unwrap();
    assert!((got - want).norm() < 1e-9 * want.norm(), "{got} vs {want}");
    let off = prim(0, 0.2, 0.6, 0.8, 0.5);
    assert_eq!(epsilon(&params, &off).unwrap(), Complex64::new(0.0, 0.0));
}

#[test]
fn antipode_closed_form() {
    let params = ModelParams::default();
    let l = params.lambda;
    let f = prim(1, 0.3, 0.5, 0.2, 0.6);
    let s = antipode_fn(&params, &f);
    for &(x, y, r) in &[(0.1, 0.2, -0.3), (-0.4, 0.5, -0.1), (0.3, -0.2, 0.2)] {
        let e = (l * r).exp();
        let want = (2.0 * l * r).exp() * ebar_ref(eta_ref(l, r) * x * y) * f.eval(&[-e * x], &[-e * y], -r);
        assert!((s.eval(&[x], &[y], r) - want).norm() < 1e-14);
    }
}

#[test]
fn weight_identities() {
    let params = ModelParams::default();
    let (f, g) = (prim(1, 0.1, 0.5, 0.0, 0.8), prim(0, -0.2, 0.6, 0.2, 0.7));
    for r in [
        trace_check(&params, &f).unwrap(),
        kms_check(&params, &f, &g).unwrap(),
        counit_check(&params, &f, &g).unwrap(),
        s_squared_check(&params, &f).unwrap(),
        psi_phi_s_check(&params, &f).unwrap(),
        s_norm_check(&params, &f).unwrap(),
        slice_antipode_check(&params, &f, &g).unwrap(),
    ] {
        assert!(r.pass, "{}", r.summary());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn antipode_squares_to_identity(
        lambda in 0.0..1.2f64,
        k in 0u32..3,
        cx in -0.5..0.5f64,
        rc in -0.3..0.3f64,
        x in -1.0..1.0f64,
        y in -1.0..1.0f64,
        r in -0.9..0.9f64,
    ) {
        let params = ModelParams { lambda, ..ModelParams::default() };
        let f = prim(k, cx, 0.5, rc, 0.6);
        let ss = antipode_fn(&params, &antipode_fn(&params, &f));
        let (a, b) = (ss.eval(&[x], &[y], r), f.eval(&[x], &[y], r));
        prop_assert!((a - b).norm() < 1e-12 * (1.0 + b.norm()));
    }
}
