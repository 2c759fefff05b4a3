mod common;

use common::{ebar_ref, eta_ref};
use proptest::prelude::*;
use qghaar::algebra::involution;
use qghaar::duality::tensor_inner_product;
use qghaar::funcspace::{Primitive, TensorFunction};
use qghaar::unitaries::{
    build_j, build_j_star, build_jhat, build_ua, build_ua_hat, involution_checks, pentagon_check, slice_agreement_check, ua_hat_consistency_check,
    unitarity_check,
};
use qghaar::{CylFunction, ModelParams};

fn prim(kx: u32, cx: f64, w: f64, rc: f64, rh: f64) -> CylFunction {
    Primitive { kx: vec![kx], cx: vec![cx], ..Primitive::gaussian(1, w, rc, rh) }.unit().to_function()
}

#[test]
fn ua_acts_by_its_defining_formula() {
    let params = ModelParams::default();
    let l = params.lambda;
    let (v1, v2) = (prim(1, 0.1, 0.5, 0.2, 0.9), prim(0, -0.2, 0.6, -0.1, 0.8));
    let v = TensorFunction::product(&[v1.clone(), v2.clone()]);
    let uv = build_ua(&params).apply_tensor(&v).unwrap();
    for &(x, y, r, xp, yp, rp) in &[(0.2, -0.1, 0.3, 0.4, 0.1, -0.2), (-0.5, 0.6, 0.1, 0.0, -0.3, 0.5)] {
        let s = (-l * rp).exp();
        let want = s
            * ebar_ref(eta_ref(l, rp) * (s * x) * (yp - s * y))
            * v1.eval(&[s * x], &[s * y], r + rp)
            * v2.eval(&[xp - s * x], &[yp - s * y], rp);
        let got = uv.eval(&[x, y, r, xp, yp, rp]);
        assert!((got - want).norm() < 1e-14, "{got} vs {want}");
    }
}

#[test]
fn ua_preserves_norm_of_product_vectors() {
    let params = ModelParams::default();
    let (v1, v2) = (prim(0, 0.1, 0.5, 0.1, 0.7), prim(1, -0.2, 0.6, -0.1, 0.6));
    let v = TensorFunction::product(&[v1, v2]);
    for u in [build_ua(&params), build_ua_hat(&params)] {
        let uv = u.apply_tensor(&v).unwrap();
        // place the nodes by the image: ⟨Uv, Uv⟩ with the generic tensor rule
        let n_img = tensor_inner_product(&uv, &uv, 16, 16).unwrap();
        let n_pre = tensor_inner_product(&v, &v, 16, 16).unwrap();
        assert!((n_img - n_pre).norm() < 2e-3 * n_pre.norm(), "{}: {} vs {}", u.label, n_img, n_pre);
    }
}

#[test]
fn j_star_is_the_involution() {
    let params = ModelParams::default();
    let f = prim(2, 0.3, 0.5, 0.2, 0.7);
    let a = build_j_star(&params).apply_cyl(&f).unwrap();
    let b = involution(&params, &f);
    for &(x, y, r) in &[(0.1, 0.2, 0.3), (-0.4, 0.5, -0.2)] {
        assert!((a.eval(&[x], &[y], r) - b.eval(&[x], &[y], r)).norm() < 1e-14);
    }
}

#[test]
fn j_and_jhat_square_to_identity_on_functions() {
    let params = ModelParams::default();
    let f = prim(1, 0.2, 0.5, 0.3, 0.6);
    for op in [build_j(&params), build_jhat(&params)] {
        let ff = op.apply_cyl(&op.apply_cyl(&f).unwrap()).unwrap();
        for &(x, y, r) in &[(0.1, 0.2, 0.3), (-0.4, 0.5, 0.7)] {
            assert!((ff.eval(&[x], &[y], r) - f.eval(&[x], &[y], r)).norm() < 1e-14, "{}", op.label);
        }
    }
}

#[test]
fn structure_checks_pass_at_several_lambdas() {
    for lambda in [0.0, 1e-6, 0.4, 1.0] {
        let params = ModelParams { lambda, ..ModelParams::default() };
        let mut reps = involution_checks(&params, 100);
        reps.push(ua_hat_consistency_check(&params, 200).unwrap());
        for u in [build_ua(&params), build_ua_hat(&params), build_j(&params), build_jhat(&params), build_j_star(&params)] {
            reps.push(unitarity_check(&params, &u, 200));
        }
        for r in reps {
            assert!(r.pass, "λ={lambda}: {}", r.summary());
        }
    }
}

#[test]
fn slices_agree_with_closed_forms() {
    let params = ModelParams::default();
    let (xi, eta, zeta) = (prim(1, 0.1, 0.5, 0.1, 0.8), prim(0, -0.2, 0.6, 0.2, 0.7), prim(2, 0.0, 0.55, -0.1, 0.9));
    let r = slice_agreement_check(&params, &xi, &eta, &zeta, 6).unwrap();
    assert!(r.pass, "{}", r.summary());
}

#[test]
fn pentagon_fails_for_a_perturbed_unitary() {
    // a wrong leg order must be detected
    let params = ModelParams::default();
    let u = build_ua(&params);
    let flipped = qghaar::unitaries::build_flip(&params).compose(&u).compose(&qghaar::unitaries::build_flip(&params));
    let r = pentagon_check(&params, &flipped, 50).unwrap();
    assert!(!r.pass);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn pentagon_holds_to_tolerance(lambda in 0.0..0.8f64, seed in 0u64..1000) {
        let params = ModelParams { lambda, seed, ..ModelParams::default() };
        for u in [build_ua(&params), build_ua_hat(&params)] {
            let r = pentagon_check(&params, &u, 50).unwrap();
            prop_assert!(r.pass, "{}", r.summary());
        }
    }

    #[test]
    fn pentagon_rounding_is_bounded_by_phase_size(lambda in 0.8..1.2f64, seed in 0u64..1000) {
        // phase arguments reach ~e^{6λR}, so the residual is rounding of that size
        let params = ModelParams { lambda, seed, ..ModelParams::default() };
        let bound = 100.0 * f64::EPSILON * (6.0 * lambda * params.r_support).exp();
        for u in [build_ua(&params), build_ua_hat(&params)] {
            let r = pentagon_check(&params, &u, 50).unwrap();
            prop_assert!(r.abs_err < bound, "{} vs bound {bound:.2e}", r.summary());
        }
    }

    #[test]
    fn ua_map_inverts(lambda in 0.0..1.0f64, p in prop::collection::vec(-2.0..2.0f64, 6)) {
        let params = ModelParams { lambda, ..ModelParams::default() };
        let u = build_ua(&params);
        let mut q = vec![0.0; 6];
        let mut back = vec![0.0; 6];
        u.map(&p, &mut q);
        u.inverse_map(&q, &mut back);
        for i in 0..6 {
            prop_assert!((back[i] - p[i]).abs() < 1e-12);
        }
    }
}
