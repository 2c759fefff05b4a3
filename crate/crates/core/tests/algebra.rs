mod common;

use common::{ebar_ref, eta_ref, trapezoid2};
use num_complex::Complex64;
use qghaar::algebra::{associativity_check, gns_check, involution, involution_check, regular_rep, twisted_mul};
use qghaar::funcspace::{inner_product, Primitive};
use qghaar::{weights, CylFunction, ModelParams};

fn prim(kx: u32, cx: f64, w: f64, rc: f64, rh: f64, phase: f64) -> CylFunction {
    Primitive {
        n: 1,
        kx: vec![kx],
        ky: vec![0],
        cx: vec![cx],
        cy: vec![-0.5 * cx],
        wx: vec![w],
        wy: vec![1.1 * w],
        r_center: rc,
        r_half: rh,
        coef: Complex64::from_polar(1.0, phase),
    }
    .unit()
    .to_function()
}

/// (f × g)(x, y, r) by a uniform trapezoid grid over (x̃, ỹ).
fn twisted_oracle(lambda: f64, f: &CylFunction, g: &CylFunction, x: f64, y: f64, r: f64) -> Complex64 {
    let et = eta_ref(lambda, r);
    trapezoid2(-5.0, 5.0, 500, |xt, yt| {
        f.eval(&[xt], &[yt], r) * g.eval(&[x - xt], &[y - yt], r) * ebar_ref(et * xt * (y - yt))
    })
}

#[test]
fn twisted_product_matches_brute_force() {
    for lambda in [0.4, 0.0] {
        let params = ModelParams { lambda, ..ModelParams::default() };
        let f = prim(1, 0.2, 0.5, 0.1, 0.8, 0.3);
        let g = prim(2, -0.3, 0.6, -0.2, 0.9, 1.1);
        let fg = twisted_mul(&params, &f, &g).unwrap();
        for &(x, y, r) in &[(0.1, -0.2, 0.0), (0.7, 0.4, 0.5), (-0.5, 0.9, -0.8)] {
            let want = twisted_oracle(lambda, &f, &g, x, y, r);
            let got = fg.eval(&[x], &[y], r);
            assert!((got - want).norm() < 1e-9 * want.norm().max(1e-3), "λ={lambda} at ({x},{y},{r}): {got} vs {want}");
        }
    }
}

#[test]
fn product_support_is_the_intersection() {
    let params = ModelParams::default();
    let f = prim(0, 0.0, 0.5, 0.5, 0.5, 0.0);
    let g = prim(0, 0.0, 0.5, -0.2, 0.4, 0.0);
    let fg = twisted_mul(&params, &f, &g).unwrap();
    assert_eq!(fg.rsupp(), (0.0, 0.2));
    let h = prim(0, 0.0, 0.5, -1.0, 0.3, 0.0);
    assert!(twisted_mul(&params, &f, &h).unwrap().is_zero());
}

#[test]
fn involution_matches_closed_form() {
    let params = ModelParams::default();
    let f = prim(2, 0.3, 0.5, 0.2, 0.7, 0.9);
    let fs = involution(&params, &f);
    for &(x, y, r) in &[(0.3, -0.1, 0.1), (-0.6, 0.5, 0.6)] {
        let want = f.eval(&[-x], &[-y], r).conj() * ebar_ref(eta_ref(0.4, r) * x * y);
        assert!((fs.eval(&[x], &[y], r) - want).norm() < 1e-14);
    }
}

#[test]
fn regular_representation_adjoint() {
    // ⟨L_f ξ, η⟩ = ⟨ξ, L_{f*} η⟩
    let params = ModelParams::default();
    let f = prim(1, 0.1, 0.5, 0.0, 0.9, 0.4);
    let xi = prim(0, -0.2, 0.6, 0.2, 0.8, 0.0);
    let eta = prim(1, 0.3, 0.5, -0.1, 0.9, 2.0);
    let l = regular_rep(&params, &f).unwrap();
    let lhs = inner_product(&params, &l.apply(&xi).unwrap(), &eta).unwrap();
    let rhs = inner_product(&params, &xi, &l.apply_adjoint(&eta).unwrap()).unwrap();
    assert!((lhs - rhs).norm() < 1e-10 * rhs.norm(), "{lhs} vs {rhs}");
}

#[test]
fn algebra_identities_hold_for_sample_elements() {
    for lambda in [0.4, 0.0] {
        let params = ModelParams { lambda, ..ModelParams::default() };
        let f = prim(1, 0.1, 0.5, 0.0, 0.9, 0.4);
        let g = prim(2, -0.2, 0.6, 0.2, 0.8, 1.0);
        let h = prim(0, 0.3, 0.55, -0.1, 0.9, 2.0);
        for rep in [
            associativity_check(&params, &f, &g, &h).unwrap(),
            involution_check(&params, &f, &g).unwrap(),
            gns_check(&params, &f, &g).unwrap(),
            weights::trace_check(&params, &g).unwrap(),
            weights::kms_check(&params, &f, &g).unwrap(),
        ] {
            assert!(rep.pass, "λ={lambda}: {}", rep.summary());
        }
    }
}

#[test]
fn trace_value_is_the_l2_norm() {
    // φ(f* × f) = ‖f‖², with ‖f‖² from the closed form of a primitive
    let params = ModelParams::default();
    let p = Primitive { coef: Complex64::new(0.0, 1.7), ..Primitive::gaussian(1, 0.45, 0.1, 0.6) };
    let f = p.to_function();
    let v = weights::phi(&params, &twisted_mul(&params, &involution(&params, &f), &f).unwrap()).unwrap();
    assert!((v.re - p.norm_sq()).abs() < 1e-9 * p.norm_sq() && v.im.abs() < 1e-12);
}
