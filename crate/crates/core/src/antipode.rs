//! The antipode S in its pointwise and operator forms, the unitary antipode
//! R = S with trivial scaling group, and the identities characterizing S.

use std::time::Instant;

use num_complex::Complex64;

use crate::algebra::{self, OperatorHandle};
use crate::duality;
use crate::error::Result;
use crate::funcspace::{self, approx_identity, check_dims, pointwise_residual, CylFunction, TensorFunction};
use crate::kernels::{beta, ebar, eta};
use crate::params::ModelParams;
use crate::quadrature::{Hint, XyRule};
use crate::report::{rel_err, worst_of, CheckReport, Metric};
use crate::unitaries::{self, apply_jhat};
use crate::weights;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// (S f)(x, y, r) = e^{2λrn} ē[η(r)β(x, y)] f(−e^{λr}x, −e^{λr}y, −r).
pub fn antipode_fn(params: &ModelParams, f: &CylFunction) -> CylFunction {
    let n = params.n;
    if f.is_zero() {
        return CylFunction::zero(n);
    }
    let l = params.lambda;
    let (lo, hi) = f.rsupp();
    let rsupp = (-hi, -lo);
    let mid = 0.5 * (rsupp.0 + rsupp.1);
    let spread = (l.abs() * 0.5 * (hi - lo)).exp();
    let h = f.hint().affine_pullback(-(l * mid).exp(), &vec![0.0; 2 * n]).widened(spread.sqrt());
    let g = f.clone();
    let nf = n as f64;
    CylFunction::lazy(n, rsupp, h, f.depth() + 1, format!("S({})", f.label()), move |x, y, r| {
        let s = (l * r).exp();
        let mut xs = [0.0f64; 8];
        let mut ys = [0.0f64; 8];
        for i in 0..n {
            xs[i] = -s * x[i];
            ys[i] = -s * y[i];
        }
        let v = g.eval(&xs[..n], &ys[..n], -r);
        if v == ZERO {
            return ZERO;
        }
        v * ebar(eta(l, r) * beta(x, y)) * (2.0 * l * r * nf).exp()
    })
    .with_breaks(f.breaks().iter().rev().map(|b| -b).collect())
}

/// The unitary antipode R. The scaling group is trivial, so R = S.
pub fn unitary_antipode(params: &ModelParams, f: &CylFunction) -> CylFunction {
    antipode_fn(params, f)
}

/// τ_t, the identity for every t.
pub fn scaling_group(_t: f64, f: &CylFunction) -> CylFunction {
    f.clone()
}

/// S(T) = Ĵ T* Ĵ.
pub fn antipode_op(params: &ModelParams, t: &OperatorHandle) -> OperatorHandle {
    let (p1, p2) = (params.clone(), params.clone());
    let (t1, t2) = (t.clone(), t.clone());
    OperatorHandle::new(
        format!("S({})", t.label),
        move |v| apply_jhat(&p1, &t1.apply_adjoint(&apply_jhat(&p1, v)?)?),
        move |v| apply_jhat(&p2, &t2.apply(&apply_jhat(&p2, v)?)?),
    )
}

fn pointwise_report(name: &str, params: &ModelParams, f: &CylFunction, g: &CylFunction, samples: usize, salt: u64, tol: f64) -> CheckReport {
    let (abs, rel, a, b) = pointwise_residual(params, f, g, samples, salt);
    CheckReport::from_residual(name, params, a, b, abs, rel, tol, Metric::Relative).note(format!("{samples} random points"))
}

/// S(S f) = f and S(f*) = (S f)* pointwise.
pub fn s_squared_check(params: &ModelParams, f: &CylFunction) -> Result<CheckReport> {
    check_dims(params, f)?;
    let start = Instant::now();
    let ssf = antipode_fn(params, &antipode_fn(params, f));
    let r1 = pointwise_report("S^2=Id", params, &ssf, f, 100, 0x5332, params.tol_exact);
    let lhs = antipode_fn(params, &algebra::involution(params, f));
    let rhs = algebra::involution(params, &antipode_fn(params, f));
    let r2 = pointwise_report("S(f*)=S(f)*", params, &lhs, &rhs, 100, 0x5333, params.tol_exact);
    Ok(worst_of("antipode_involutive", params, vec![r1, r2]).with_runtime(start))
}

/// S((ω_{ξ,η} ⊗ id)(U_A)) = (ω_{ξ,η} ⊗ id)(U_A*): the closed-form U_A* slice
/// against S applied to the U_A slice symbol.
pub fn slice_antipode_check(params: &ModelParams, xi: &CylFunction, eta_v: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let f = unitaries::slice_first_symbol(params, xi, eta_v);
    let g = unitaries::slice_first_symbol_adjoint(params, xi, eta_v);
    let sf = antipode_fn(params, &f);
    Ok(pointwise_report("slice_antipode", params, &sf, &g, 100, 0x736c53, params.tol_quad).with_runtime(start))
}

/// ⟨Ĵ L_f* Ĵ ξ, η⟩ = ⟨L_{S f} ξ, η⟩, computed as ⟨L_f Ĵη, Ĵξ⟩.
pub fn antipode_op_check(params: &ModelParams, f: &CylFunction, xi: &CylFunction, eta_v: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let lhs = duality::left_matrix_element(params, f, &apply_jhat(params, eta_v)?, &apply_jhat(params, xi)?)?;
    let rhs = duality::left_matrix_element(params, &antipode_fn(params, f), xi, eta_v)?;
    Ok(CheckReport::compare("antipode_op", params, lhs, rhs, params.tol_quad, Metric::Relative).with_runtime(start))
}

/// S(f × g) = S(g) × S(f) pointwise, the symbol form of S(L_f L_g) = S(L_g) S(L_f).
pub fn anti_multiplicativity_check(params: &ModelParams, f: &CylFunction, g: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let lhs = antipode_fn(params, &algebra::twisted_mul(params, f, g)?);
    let rhs = algebra::twisted_mul(params, &antipode_fn(params, g).memoized(), &antipode_fn(params, f).memoized())?;
    Ok(pointwise_report("antipode_antimultiplicative", params, &lhs, &rhs, 20, 0x616d, params.tol_quad).with_runtime(start))
}

/// (S ⊗ S)(Δ a) = χ(Δ(S a)) on tensor test vectors:
/// ⟨Δ(a)(Ĵw1 ⊗ Ĵw2), Ĵv1 ⊗ Ĵv2⟩ = ⟨Δ(S a)(v2 ⊗ v1), w2 ⊗ w1⟩.
pub fn flip_coproduct_check(params: &ModelParams, a: &CylFunction, v: [&CylFunction; 2], w: [&CylFunction; 2]) -> Result<CheckReport> {
    let start = Instant::now();
    let jv = [apply_jhat(params, v[0])?, apply_jhat(params, v[1])?];
    let jw = [apply_jhat(params, w[0])?, apply_jhat(params, w[1])?];
    let lhs = duality::coproduct_matrix_element(params, a, [&jw[0], &jw[1]], [&jv[0], &jv[1]])?;
    let sa = antipode_fn(params, a).memoized();
    let rhs = duality::coproduct_matrix_element(params, &sa, [v[1], v[0]], [w[1], w[0]])?;
    Ok(CheckReport::compare("flip_coproduct", params, lhs, rhs, params.tol_quad, Metric::Relative).with_runtime(start))
}

/// ψ = φ ∘ S.
pub fn psi_phi_s_check(params: &ModelParams, f: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let lhs = weights::psi(params, f)?;
    let rhs = weights::phi(params, &antipode_fn(params, f))?;
    Ok(CheckReport::compare("psi=phi∘S", params, lhs, rhs, params.tol_quad, Metric::Relative).with_runtime(start))
}

/// ‖S f‖₂² against ⟨f, f⟩_R = ∫ |f|² e^{−2λrn}, the norm S carries isometrically.
pub fn s_norm_check(params: &ModelParams, f: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let lhs = Complex64::new(funcspace::norm_sq(params, &antipode_fn(params, f))?, 0.0);
    let rhs = funcspace::inner_product_weighted(params, f, f, weights::delta_profile(params))?;
    Ok(CheckReport::compare("S_norm", params, lhs, rhs, params.tol_quad, Metric::Relative).with_runtime(start))
}

/// ∫ m((S ⊗ id)k)(x, y, r) dx dy at each r in `rs`, where k = Δ(L_a)(e_ε ⊗ e_ε)
/// approximates the two-leg symbol of Δ(L_a) and
/// m(K)(x, y, r) = ∫ K(x̃, ỹ, r, x − x̃, y − ỹ, r) ē[η(r)β(x̃, y − ỹ)] dx̃ dỹ.
pub fn convolution_mass(params: &ModelParams, a: &CylFunction, eps: f64, rs: &[f64]) -> Result<Vec<Complex64>> {
    check_dims(params, a)?;
    let n = params.n;
    let l = params.lambda;
    let e = approx_identity(params, eps)?;
    let k = duality::coproduct_action(params, a, &TensorFunction::product(&[e.clone(), e]), 8)?;
    let inner_order = (params.quad_xy_order / 2).max(4);
    let d = 2 * n + 1;
    let nf = n as f64;
    let mut out = Vec::with_capacity(rs.len());
    for &r in rs {
        let c = (l * r).exp();
        let et = eta(l, r);
        // x = (x̃ + δ) + (x − x̃ − δ): widths ε/c and ε
        let outer = XyRule::new(12, &Hint::isotropic(n, 0.0, eps * (1.0 + 1.0 / (c * c)).sqrt()));
        let mid = XyRule::new(inner_order, &a.hint().negated());
        let amp = (2.0 * l * r * nf).exp();
        let v = outer.integrate(|x, y| {
            mid.integrate(|xt, yt| {
                let mut p = [0.0f64; 32];
                let mut yd = [0.0f64; 8];
                for i in 0..n {
                    p[i] = -c * xt[i];
                    p[n + i] = -c * yt[i];
                    p[d + i] = x[i] - xt[i];
                    yd[i] = y[i] - yt[i];
                    p[d + n + i] = yd[i];
                }
                p[2 * n] = -r;
                p[d + 2 * n] = r;
                let kv = k.eval(&p[..2 * d]);
                if kv == ZERO {
                    return ZERO;
                }
                kv * amp * ebar(et * (beta(xt, yt) + beta(xt, &yd[..n])))
            })
        });
        out.push(v);
    }
    Ok(out)
}

/// m((S ⊗ id)Δ(a)) = ε(a)1: the mass of the contracted two-leg symbol equals
/// ε(a) at every r, with an O(ε²) extraction error checked by halving ε.
pub fn convolution_identity_check(params: &ModelParams, a: &CylFunction, eps: f64) -> Result<CheckReport> {
    let start = Instant::now();
    let big_r = params.r_support;
    let rs = [-0.5 * big_r, 0.0, 0.5 * big_r];
    let target = weights::epsilon(params, a)?;
    let coarse = convolution_mass(params, a, eps, &rs)?;
    let fine = convolution_mass(params, a, 0.5 * eps, &rs)?;
    let err = |v: &[Complex64]| v.iter().map(|z| rel_err(*z, target)).fold(0.0, f64::max);
    let (ec, ef) = (err(&coarse), err(&fine));
    let worst = fine.iter().copied().max_by(|p, q| rel_err(*p, target).total_cmp(&rel_err(*q, target))).unwrap_or(ZERO);
    let rep = CheckReport::compare("convolution_identity", params, worst, target, params.tol_trunc, Metric::Relative)
        .note(format!("rel_err at eps={eps:e}: {ec:.3e}; at eps={:e}: {ef:.3e}; ratio {:.2}", 0.5 * eps, ec / ef.max(f64::MIN_POSITIVE)));
    let floor = 1e3 * params.tol_exact;
    Ok(if ef > floor && ec / ef < 3.0 { rep.fail("residual did not improve ~4x when eps was halved") } else { rep }.with_runtime(start))
}
