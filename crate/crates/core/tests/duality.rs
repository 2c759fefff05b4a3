mod common;

use qghaar::algebra::regular_rep;
use qghaar::duality::{
    coproduct, coproduct_action, coproduct_matrix_element, coproduct_matrix_element_hat, commutant_check, j_rho_j_check, left_contraction_symbol,
    left_matrix_element, rho_matrix_element, rho_op, right_contraction_symbol, tilde,
};
use qghaar::funcspace::{Primitive, TensorFunction};
use qghaar::{CylFunction, ModelParams};

fn prim(kx: u32, cx: f64, w: f64, rc: f64, rh: f64) -> CylFunction {
    Primitive { kx: vec![kx], cx: vec![cx], ..Primitive::gaussian(1, w, rc, rh) }.unit().to_function()
}

fn low_order() -> ModelParams {
    ModelParams { quad_xy_order: 24, quad_r_order: 16, ..ModelParams::default() }
}

#[test]
fn reduced_coproduct_element_matches_brute_force() {
    let params = low_order();
    let a = prim(0, 0.1, 0.5, 0.0, 0.5);
    let (v1, v2) = (prim(0, 0.0, 0.5, 0.2, 0.5), prim(1, 0.1, 0.6, -0.1, 0.5));
    let (w1, w2) = (prim(1, -0.1, 0.55, 0.1, 0.6), prim(0, 0.2, 0.5, -0.2, 0.5));
    let reduced = coproduct_matrix_element(&params, &a, [&v1, &v2], [&w1, &w2]).unwrap();
    let hat = coproduct_matrix_element_hat(&params, &a, [&v1, &v2], [&w1, &w2]).unwrap();
    // generic route: apply U (L_a ⊗ 1) U* to the product vector and integrate in 6-D
    let mut h = coproduct(&params, &a).unwrap();
    h.symbol = None;
    let brute = h.matrix_element(&params, [&v1, &v2], [&w1, &w2]).unwrap();
    assert!((reduced - hat).norm() < 1e-9 * reduced.norm(), "{reduced} vs {hat}");
    assert!((reduced - brute).norm() < 5e-3 * reduced.norm(), "{reduced} vs brute {brute}");
}

#[test]
fn pointwise_coproduct_action_matches_conjugation() {
    let params = ModelParams::default();
    let a = prim(1, 0.1, 0.5, 0.0, 0.6);
    let v = TensorFunction::product(&[prim(0, 0.0, 0.5, 0.2, 0.6), prim(2, 0.1, 0.6, -0.1, 0.6)]);
    let pointwise = coproduct_action(&params, &a, &v, 48).unwrap();
    // the conjugation route integrates on the global grid, so give it more nodes
    let fine = ModelParams { quad_xy_order: 192, ..params.clone() };
    let conj = coproduct(&fine, &a).unwrap().apply(&v).unwrap();
    for p in [[0.1, -0.2, 0.3, 0.2, 0.1, -0.1], [-0.3, 0.2, 0.1, 0.0, -0.4, 0.2], [0.4, 0.4, -0.2, -0.1, 0.3, 0.05]] {
        let (x, y) = (pointwise.eval(&p), conj.eval(&p));
        assert!((x - y).norm() < 1e-4 * y.norm().max(1e-3), "at {p:?}: {x} vs {y}");
    }
}

#[test]
fn fast_matrix_elements_match_generic_operators() {
    let params = ModelParams::default();
    let f = prim(1, 0.1, 0.5, 0.0, 0.8);
    let (xi, eta) = (prim(0, -0.1, 0.6, 0.2, 0.7), prim(2, 0.2, 0.5, -0.1, 0.8));
    let fast = left_matrix_element(&params, &f, &xi, &eta).unwrap();
    let slow = regular_rep(&params, &f).unwrap().matrix_element(&params, &xi, &eta).unwrap();
    assert!((fast - slow).norm() < 1e-7 * slow.norm(), "L: {fast} vs {slow}");
    let fast = rho_matrix_element(&params, &f, &xi, &eta).unwrap();
    let slow = rho_op(&params, &f).unwrap().matrix_element(&params, &xi, &eta).unwrap();
    assert!((fast - slow).norm() < 1e-7 * slow.norm(), "ρ: {fast} vs {slow}");
}

#[test]
fn contraction_symbols_reproduce_coproduct_slices() {
    // ⟨L_t ξ, η⟩ = ⟨Δ(L_a)(ζ⊗ξ), ζ⊗η⟩ and ⟨L_{t2} ξ, η⟩ = ⟨Δ(L_a)(ξ⊗ζ), η⊗ζ⟩
    let params = ModelParams::default();
    let a = prim(0, 0.0, 0.7, 0.0, 0.3);
    let zeta = prim(0, 0.0, 0.7, 0.05, 0.3);
    let (xi, eta) = (prim(0, 0.1, 0.6, 0.0, 0.5), prim(1, -0.1, 0.6, 0.1, 0.5));
    let t = left_contraction_symbol(&params, &a, &zeta);
    let lhs = left_matrix_element(&params, &t, &xi, &eta).unwrap();
    let rhs = coproduct_matrix_element(&params, &a, [&zeta, &xi], [&zeta, &eta]).unwrap();
    assert!((lhs - rhs).norm() < 1e-6 * rhs.norm(), "left: {lhs} vs {rhs}");
    let t2 = right_contraction_symbol(&params, &a, &zeta);
    let lhs = left_matrix_element(&params, &t2, &xi, &eta).unwrap();
    let rhs = coproduct_matrix_element(&params, &a, [&xi, &zeta], [&eta, &zeta]).unwrap();
    assert!((lhs - rhs).norm() < 1e-6 * rhs.norm(), "right: {lhs} vs {rhs}");
}

#[test]
fn tilde_is_an_involution_up_to_the_modular_factor_free_form() {
    let params = ModelParams::default();
    let f = prim(1, 0.2, 0.5, 0.3, 0.6);
    let tt = tilde(&params, &tilde(&params, &f));
    for &(x, y, r) in &[(0.1, 0.2, 0.3), (-0.4, 0.5, 0.5)] {
        assert!((tt.eval(&[x], &[y], r) - f.eval(&[x], &[y], r)).norm() < 1e-13);
    }
}

#[test]
fn commutation_and_j_conjugation() {
    for lambda in [0.4, 0.0] {
        let params = ModelParams { lambda, ..ModelParams::default() };
        let (f, g) = (prim(1, 0.1, 0.5, 0.0, 0.8), prim(0, -0.2, 0.6, 0.2, 0.7));
        let (xi, eta) = (prim(2, 0.0, 0.55, 0.1, 0.8), prim(1, 0.1, 0.5, -0.1, 0.9));
        let c = commutant_check(&params, &f, &g, &xi, &eta).unwrap();
        assert!(c.pass, "{}", c.summary());
        let j = j_rho_j_check(&params, &f, &xi, &eta).unwrap();
        assert!(j.pass, "{}", j.summary());
    }
}
