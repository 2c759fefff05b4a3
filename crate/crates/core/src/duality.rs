//! Comultiplications as conjugations by the multiplicative unitaries, the
//! dual generators ρ_f and λ_f, the duality pairing and commutant relations.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;

use crate::algebra::{OperatorHandle, Symbol};
use crate::error::{Error, Result};
use crate::funcspace::{check_dims, inner_product, CylFunction, Herm1, TensorFunction};
use crate::kernels::{beta, e_fwd, ebar, eta};
use crate::par;
use crate::params::ModelParams;
use crate::quadrature::{self, gauss_hermite, Hint, XyRule};
use crate::report::{worst_of, CheckReport, Metric};
use crate::unitaries::{self, PointPhaseOp};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

type TensorAction = dyn Fn(&TensorFunction) -> Result<TensorFunction> + Send + Sync;

/// How a two-leg operator was built, kept for fast matrix elements.
#[derive(Debug, Clone)]
pub enum TensorSymbol {
    /// U_A (L_a ⊗ 1) U_A*
    Coproduct(CylFunction),
    /// Û_A* (1 ⊗ L_a) Û_A
    CoproductHat(CylFunction),
}

/// Bounded operator on the two-leg tensor space.
#[derive(Clone)]
pub struct TensorOperatorHandle {
    action: Arc<TensorAction>,
    adjoint: Arc<TensorAction>,
    pub label: String,
    pub symbol: Option<TensorSymbol>,
}

impl fmt::Debug for TensorOperatorHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TensorOperatorHandle").field("label", &self.label).finish()
    }
}

impl TensorOperatorHandle {
    pub fn new<A, B>(label: impl Into<String>, action: A, adjoint: B) -> Self
    where
        A: Fn(&TensorFunction) -> Result<TensorFunction> + Send + Sync + 'static,
        B: Fn(&TensorFunction) -> Result<TensorFunction> + Send + Sync + 'static,
    {
        Self { action: Arc::new(action), adjoint: Arc::new(adjoint), label: label.into(), symbol: None }
    }

    pub fn apply(&self, v: &TensorFunction) -> Result<TensorFunction> {
        (self.action)(v)
    }

    pub fn apply_adjoint(&self, v: &TensorFunction) -> Result<TensorFunction> {
        (self.adjoint)(v)
    }

    pub fn adjoint(&self) -> TensorOperatorHandle {
        Self { action: self.adjoint.clone(), adjoint: self.action.clone(), label: format!("{}*", self.label), symbol: None }
    }

    /// ⟨T(v1⊗v2), w1⊗w2⟩, by the reduced formula when the handle is a coproduct.
    pub fn matrix_element(&self, params: &ModelParams, v: [&CylFunction; 2], w: [&CylFunction; 2]) -> Result<Complex64> {
        match &self.symbol {
            Some(TensorSymbol::Coproduct(a)) => coproduct_matrix_element(params, a, v, w),
            Some(TensorSymbol::CoproductHat(a)) => coproduct_matrix_element_hat(params, a, v, w),
            None => {
                let tv = TensorFunction::product(&[v[0].clone(), v[1].clone()]);
                let tw = TensorFunction::product(&[w[0].clone(), w[1].clone()]);
                let (xy, r) = brute_orders(params);
                tensor_inner_product(&self.apply(&tv)?, &tw, xy, r)
            }
        }
    }
}

/// Reduced orders for brute-force multi-leg quadrature.
pub fn brute_orders(params: &ModelParams) -> (usize, usize) {
    ((params.quad_xy_order / 4).max(4), (params.quad_r_order / 3).max(4))
}

/// ⟨v, w⟩ on the tensor space by nested tensor quadrature, with xy-nodes
/// placed by w's hints and r over the per-leg support intersections.
pub fn tensor_inner_product(v: &TensorFunction, w: &TensorFunction, xy_order: usize, r_order: usize) -> Result<Complex64> {
    if v.legs != w.legs || v.n != w.n {
        return Err(Error::Shape { expected: w.legs, got: v.legs });
    }
    let n = v.n;
    let d = 2 * n + 1;
    let mut axes: Vec<quadrature::Rule> = Vec::with_capacity(v.legs * d);
    for l in 0..v.legs {
        let h = w.hints[l].product(&v.hints[l]);
        for i in 0..2 * n {
            axes.push(quadrature::hermite_rule(xy_order, h.center[i], h.width[i]));
        }
        let lo = v.rsupps[l].0.max(w.rsupps[l].0);
        let hi = v.rsupps[l].1.min(w.rsupps[l].1);
        if hi <= lo {
            return Ok(ZERO);
        }
        axes.push(quadrature::legendre_rule(r_order, lo, hi, 1));
    }
    let sizes: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    let total: usize = sizes.iter().product();
    Ok(par::sum(total, |mut idx| {
        let mut p = [0.0f64; 32];
        let mut wt = 1.0;
        for k in (0..axes.len()).rev() {
            let j = idx % sizes[k];
            idx /= sizes[k];
            p[k] = axes[k].nodes[j];
            wt *= axes[k].weights[j];
        }
        let p = &p[..axes.len()];
        let b = w.eval(p);
        if b == ZERO {
            return ZERO;
        }
        v.eval(p) * b.conj() * wt
    }))
}

/// Σ_k w_k f(c + √2·width·t_k) for the Gauss–Hermite rule of `order`.
#[inline]
fn gh_1d<F: FnMut(f64) -> Complex64>(order: usize, c: f64, width: f64, mut f: F) -> Complex64 {
    let d = gauss_hermite(order);
    let s = std::f64::consts::SQRT_2 * width;
    let mut acc = ZERO;
    for (t, w) in d.nodes.iter().zip(&d.scaled_weights) {
        acc += f(c + s * t) * (w * s);
    }
    acc
}

fn product_hint_1d(c1: f64, w1: f64, c2: f64, w2: f64) -> (f64, f64) {
    let (p1, p2) = (1.0 / (w1 * w1), 1.0 / (w2 * w2));
    ((c1 * p1 + c2 * p2) / (p1 + p2), (p1 + p2).sqrt().recip())
}

/// C1_{v,w}(δ, ε; ρ) = ∫ ē[η(ρ) β(δ, Y)] v(X − δ, Y − ε, ρ) conj w(X, Y, ρ) dX dY.
pub fn c1(params: &ModelParams, v: &CylFunction, w: &CylFunction, d: &[f64], e: &[f64], rho: f64) -> Complex64 {
    let (vl, vh) = v.rsupp();
    let (wl, wh) = w.rsupp();
    if rho < vl.max(wl) || rho > vh.min(wh) || v.is_zero() || w.is_zero() {
        return ZERO;
    }
    let et = eta(params.lambda, rho);
    let order = params.quad_xy_order;
    if let (Some(sv), Some(sw)) = (v.separable_slice(rho), w.separable_slice(rho)) {
        let coef = sv.coef * sw.coef.conj();
        if coef == ZERO {
            return ZERO;
        }
        let mut acc = coef;
        for i in 0..params.n {
            let (vx, wx): (Herm1, Herm1) = (sv.x[i], sw.x[i]);
            let (c, s) = product_hint_1d(vx.center + d[i], vx.width, wx.center, wx.width);
            acc *= gh_1d(order, c, s, |x| Complex64::new(vx.eval(x - d[i]) * wx.eval(x), 0.0));
            let (vy, wy): (Herm1, Herm1) = (sv.y[i], sw.y[i]);
            let (c, s) = product_hint_1d(vy.center + e[i], vy.width, wy.center, wy.width);
            let di = d[i];
            acc *= gh_1d(order, c, s, |y| ebar(et * di * y) * (vy.eval(y - e[i]) * wy.eval(y)));
        }
        return acc;
    }
    let n = params.n;
    let mut shift = d.to_vec();
    shift.extend_from_slice(e);
    let vh_ = v.hint();
    let moved = Hint { center: vh_.center.iter().zip(&shift).map(|(c, s)| c + s).collect(), width: vh_.width.clone() };
    XyRule::new(order, &moved.product(w.hint())).integrate(|x, y| {
        let mut xs = [0.0f64; 8];
        let mut ys = [0.0f64; 8];
        for i in 0..n {
            xs[i] = x[i] - d[i];
            ys[i] = y[i] - e[i];
        }
        let a = v.eval(&xs[..n], &ys[..n], rho);
        if a == ZERO {
            return ZERO;
        }
        ebar(et * beta(d, y)) * a * w.eval(x, y, rho).conj()
    })
}

/// C2_{v,w}(a, b; ρ) = ∫ e[η(ρ) β(a, Q)] v(P + a, Q + b, ρ) conj w(P, Q, ρ) dP dQ.
pub fn c2(params: &ModelParams, v: &CylFunction, w: &CylFunction, a: &[f64], b: &[f64], rho: f64) -> Complex64 {
    let (vl, vh) = v.rsupp();
    let (wl, wh) = w.rsupp();
    if rho < vl.max(wl) || rho > vh.min(wh) || v.is_zero() || w.is_zero() {
        return ZERO;
    }
    let n = params.n;
    let et = eta(params.lambda, rho);
    let mut shift = a.to_vec();
    shift.extend_from_slice(b);
    let vh_ = v.hint();
    let moved = Hint { center: vh_.center.iter().zip(&shift).map(|(c, s)| c - s).collect(), width: vh_.width.clone() };
    XyRule::new(params.quad_xy_order, &moved.product(w.hint())).integrate(|p, q| {
        let mut ps = [0.0f64; 8];
        let mut qs = [0.0f64; 8];
        for i in 0..n {
            ps[i] = p[i] + a[i];
            qs[i] = q[i] + b[i];
        }
        let x = v.eval(&ps[..n], &qs[..n], rho);
        if x == ZERO {
            return ZERO;
        }
        e_fwd(et * beta(a, q)) * x * w.eval(p, q, rho).conj()
    })
}

/// Hint for δ ↦ C1_{v,w}(δ, ·): peak at c_w − c_v.
fn c1_hint(v: &CylFunction, w: &CylFunction) -> Hint {
    let (a, b) = (v.hint(), w.hint());
    Hint {
        center: a.center.iter().zip(&b.center).map(|(cv, cw)| cw - cv).collect(),
        width: a.width.iter().zip(&b.width).map(|(x, y)| x.hypot(*y)).collect(),
    }
}

fn intersect(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0.max(b.0), a.1.min(b.1))
}

/// Outer order for the (δ, ε) grid of reduced matrix elements.
pub fn reduced_xy_order(params: &ModelParams) -> usize {
    (params.quad_xy_order / 2).max(4)
}

fn reduced_element<K>(params: &ModelParams, a: &CylFunction, v: [&CylFunction; 2], w: [&CylFunction; 2], second: K) -> Result<Complex64>
where
    K: Fn(&[f64], &[f64], f64) -> Complex64 + Sync + Send,
{
    for f in [a, v[0], v[1], w[0], w[1]] {
        check_dims(params, f)?;
    }
    if [a, v[0], v[1], w[0], w[1]].iter().any(|f| f.is_zero()) {
        return Ok(ZERO);
    }
    let n = params.n;
    let l = params.lambda;
    let s12 = intersect(v[0].rsupp(), w[0].rsupp());
    let s2 = intersect(v[1].rsupp(), w[1].rsupp());
    if s12.1 <= s12.0 || s2.1 <= s2.0 {
        return Ok(ZERO);
    }
    let rr = intersect(a.rsupp(), (s12.0 + s2.0, s12.1 + s2.1));
    if rr.1 <= rr.0 {
        return Ok(ZERO);
    }
    let r_rule = quadrature::r_rule(params.quad_r_order, rr.0, rr.1);
    let s_mid = (l * 0.5 * (s2.0 + s2.1)).exp();
    let leg1 = c1_hint(v[0], w[0]).affine_pullback(s_mid, &vec![0.0; 2 * n]);
    let hint = a.hint().product(&c1_hint(v[1], w[1])).product(&leg1);
    let xy = XyRule::new(reduced_xy_order(params), &hint);
    let m = xy.len();
    let order_r = params.quad_r_order;
    let v1 = v[0];
    let w1 = w[0];
    let total = par::sum(r_rule.len() * m, |idx| {
        let (ir, k) = (idx / m, idx % m);
        let big_r = r_rule.nodes[ir];
        let mut buf = [0.0f64; 16];
        let wk = xy.point(k, &mut buf[..2 * n]);
        let (d, e) = buf[..2 * n].split_at(n);
        let av = a.eval(d, e, big_r);
        if av == ZERO {
            return ZERO;
        }
        let inner = quadrature::integrate_r(order_r, s2.0.max(big_r - s12.1), s2.1.min(big_r - s12.0), |rp| {
            let s = (l * rp).exp();
            let mut ds = [0.0f64; 8];
            let mut es = [0.0f64; 8];
            for i in 0..n {
                ds[i] = s * d[i];
                es[i] = s * e[i];
            }
            let k2 = second(d, e, rp);
            if k2 == ZERO {
                return ZERO;
            }
            c1(params, v1, w1, &ds[..n], &es[..n], big_r - rp) * k2
        });
        av * e_fwd(eta(l, big_r) * beta(d, e)) * inner * (wk * r_rule.weights[ir])
    });
    Ok(total)
}

/// ⟨U_A (L_a ⊗ 1) U_A* (v1 ⊗ v2), w1 ⊗ w2⟩ by the reduced 4-dimensional formula
/// ∫ a(δ, ε, R) e[η(R) β(δ, ε)] C1_{v1 w1}(e^{λR'}δ, e^{λR'}ε; R − R') C1_{v2 w2}(δ, ε; R').
pub fn coproduct_matrix_element(params: &ModelParams, a: &CylFunction, v: [&CylFunction; 2], w: [&CylFunction; 2]) -> Result<Complex64> {
    let (v2, w2) = (v[1].clone(), w[1].clone());
    let p = params.clone();
    reduced_element(params, a, v, w, move |d, e, rp| c1(&p, &v2, &w2, d, e, rp))
}

/// ⟨Û_A* (1 ⊗ L_a) Û_A (v1 ⊗ v2), w1 ⊗ w2⟩, whose reduction carries the
/// second-leg factor C2_{v2 w2}(−δ, −ε; R').
pub fn coproduct_matrix_element_hat(params: &ModelParams, a: &CylFunction, v: [&CylFunction; 2], w: [&CylFunction; 2]) -> Result<Complex64> {
    let (v2, w2) = (v[1].clone(), w[1].clone());
    let p = params.clone();
    reduced_element(params, a, v, w, move |d, e, rp| {
        let md: Vec<f64> = d.iter().map(|x| -x).collect();
        let me: Vec<f64> = e.iter().map(|x| -x).collect();
        c2(&p, &v2, &w2, &md, &me, rp)
    })
}

/// (L_a ⊗ 1) or (1 ⊗ L_a) on a two-leg vector, integrating the chosen leg.
fn left_mult_on_leg(params: &ModelParams, a: &CylFunction, v: &TensorFunction, leg: usize) -> TensorFunction {
    let n = params.n;
    let d = 2 * n + 1;
    let (a2, v2) = (a.clone(), v.clone());
    let (lambda, order) = (params.lambda, params.quad_xy_order / 2);
    let mut rsupps = v.rsupps.clone();
    rsupps[leg] = intersect(rsupps[leg], a.rsupp());
    let hint = a.hint().convolve(&v.hints[leg]);
    let mut hints = v.hints.clone();
    hints[leg] = hint;
    TensorFunction::new(v.legs, n, rsupps, hints, format!("L[{}]_{}({})", a.label(), leg + 1, v.label), move |p| {
        let base = &p[leg * d..(leg + 1) * d];
        let (x, y, r) = (&base[..n], &base[n..2 * n], base[2 * n]);
        let et = eta(lambda, r);
        XyRule::new(order, a2.hint()).integrate(|xt, yt| {
            let av = a2.eval(xt, yt, r);
            if av == ZERO {
                return ZERO;
            }
            let mut q = [0.0f64; 32];
            q[..p.len()].copy_from_slice(p);
            let mut yd = [0.0f64; 8];
            for i in 0..n {
                q[leg * d + i] = x[i] - xt[i];
                yd[i] = y[i] - yt[i];
                q[leg * d + n + i] = yd[i];
            }
            let vv = v2.eval(&q[..p.len()]);
            if vv == ZERO {
                return ZERO;
            }
            av * vv * ebar(et * beta(xt, &yd[..n]))
        })
    })
}

fn conjugation_handle(params: &ModelParams, outer: PointPhaseOp, a: &CylFunction, leg: usize, label: String) -> TensorOperatorHandle {
    let inner = outer.adjoint();
    let (p1, p2) = (params.clone(), params.clone());
    let (o1, i1, o2, i2) = (outer.clone(), inner.clone(), outer, inner);
    let astar = crate::algebra::involution(params, a);
    let (a1, a2) = (a.clone(), astar);
    TensorOperatorHandle::new(
        label,
        move |v| o1.apply_tensor(&left_mult_on_leg(&p1, &a1, &i1.apply_tensor(v)?, leg)),
        move |v| o2.apply_tensor(&left_mult_on_leg(&p2, &a2, &i2.apply_tensor(v)?, leg)),
    )
}

/// Δ(L_a) = U_A (L_a ⊗ 1) U_A*.
pub fn coproduct(params: &ModelParams, a: &CylFunction) -> Result<TensorOperatorHandle> {
    check_dims(params, a)?;
    let mut h = conjugation_handle(params, unitaries::build_ua(params), a, 0, format!("Δ[{}]", a.label()));
    h.symbol = Some(TensorSymbol::Coproduct(a.clone()));
    Ok(h)
}

/// Δ(L_a) built as Û_A* (1 ⊗ L_a) Û_A.
pub fn coproduct_hat_route(params: &ModelParams, a: &CylFunction) -> Result<TensorOperatorHandle> {
    check_dims(params, a)?;
    let mut h = conjugation_handle(params, unitaries::build_ua_hat(params).adjoint(), a, 1, format!("Δ̂route[{}]", a.label()));
    h.symbol = Some(TensorSymbol::CoproductHat(a.clone()));
    Ok(h)
}

/// Δ(L_a) applied pointwise to a two-leg vector:
/// (Δ(L_a)V)(X1, Y1, ρ1, X2, Y2, ρ2) = ∫ a(δ, ε, ρ1+ρ2) e[η(ρ1+ρ2)β(δ,ε)] ē[η(ρ1)e^{λρ2}β(δ,Y1)] ē[η(ρ2)β(δ,Y2)]
/// · V(X1 − e^{λρ2}δ, Y1 − e^{λρ2}ε, ρ1, X2 − δ, Y2 − ε, ρ2) dδ dε.
/// The (δ, ε) grid at each point is the product of the hints of a and of V's legs pulled back.
pub fn coproduct_action(params: &ModelParams, a: &CylFunction, v: &TensorFunction, order: usize) -> Result<TensorFunction> {
    check_dims(params, a)?;
    if v.legs != 2 || v.n != params.n {
        return Err(Error::Shape { expected: 2, got: v.legs });
    }
    let n = params.n;
    let d = 2 * n + 1;
    let l = params.lambda;
    let (a2, v2) = (a.clone(), v.clone());
    let hints = vec![a.hint().convolve(&v.hints[0]).widened((l.abs() * params.r_support).exp()), a.hint().convolve(&v.hints[1])];
    let (lo, hi) = a.rsupp();
    Ok(TensorFunction::new(2, n, v.rsupps.clone(), hints, format!("Δ[{}]({})", a.label(), v.label), move |p| {
        let (r1, r2) = (p[2 * n], p[d + 2 * n]);
        let big_r = r1 + r2;
        if big_r < lo || big_r > hi {
            return ZERO;
        }
        let c = (l * r2).exp();
        let leg1: Vec<f64> = p[..2 * n].to_vec();
        let leg2: Vec<f64> = p[d..d + 2 * n].to_vec();
        let h = a2.hint().product(&v2.hints[0].affine_pullback(-c, &leg1)).product(&v2.hints[1].affine_pullback(-1.0, &leg2));
        let (e12, e1, e2) = (eta(l, big_r), eta(l, r1) * c, eta(l, r2));
        let (y1, y2) = (&p[n..2 * n], &p[d + n..d + 2 * n]);
        XyRule::new(order, &h).integrate(|dl, ep| {
            let av = a2.eval(dl, ep, big_r);
            if av == ZERO {
                return ZERO;
            }
            let mut q = [0.0f64; 32];
            for i in 0..n {
                q[i] = p[i] - c * dl[i];
                q[n + i] = p[n + i] - c * ep[i];
                q[d + i] = p[d + i] - dl[i];
                q[d + n + i] = p[d + n + i] - ep[i];
            }
            q[2 * n] = r1;
            q[d + 2 * n] = r2;
            let vv = v2.eval(&q[..2 * d]);
            if vv == ZERO {
                return ZERO;
            }
            av * vv * e_fwd(e12 * beta(dl, ep) - e1 * beta(dl, y1) - e2 * beta(dl, y2))
        })
    }))
}

/// Both reduced constructions of ⟨Δ(L_a)(v1⊗v2), w1⊗w2⟩ agree.
pub fn coproduct_routes_check(params: &ModelParams, a: &CylFunction, v: [&CylFunction; 2], w: [&CylFunction; 2]) -> Result<CheckReport> {
    let start = Instant::now();
    let lhs = coproduct_matrix_element(params, a, v, w)?;
    let rhs = coproduct_matrix_element_hat(params, a, v, w)?;
    Ok(CheckReport::compare("coproduct_routes", params, lhs, rhs, params.tol_quad, Metric::Relative).with_runtime(start))
}

/// Structural coassociativity: W = (U₁₂U₁₃)⁻¹ U₂₃U₁₂ commutes with every
/// L_a ⊗ 1 ⊗ 1, i.e. it fixes the first leg and the rest of its action does
/// not depend on the first leg.
pub fn coassociativity_check(params: &ModelParams, u: &PointPhaseOp, samples: usize) -> Result<CheckReport> {
    use rand::SeedableRng;
    let start = Instant::now();
    let u12 = unitaries::leg_embed(u, "12", 3)?;
    let u13 = unitaries::leg_embed(u, "13", 3)?;
    let u23 = unitaries::leg_embed(u, "23", 3)?;
    let w = u12.compose(&u13).inverse().compose(&u23.compose(&u12));
    let d = 2 * params.n + 1;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed ^ 0x636f6173);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let p = unitaries::random_point(params, 3, &mut rng);
        let mut p2 = unitaries::random_point(params, 3, &mut rng);
        p2[d..].copy_from_slice(&p[d..]);
        let (i1, i2) = (w.image(&p), w.image(&p2));
        let fix = (0..d).map(|k| (i1.point[k] - p[k]).abs().max((i2.point[k] - p2[k]).abs())).fold(0.0, f64::max);
        let rest = (d..3 * d).map(|k| (i1.point[k] - i2.point[k]).abs()).fold(0.0, f64::max);
        let coef = (i1.coefficient() - i2.coefficient()).norm();
        worst = worst.max(fix).max(rest).max(coef);
    }
    let one = Complex64::new(1.0, 0.0);
    Ok(CheckReport::from_residual(format!("coassociativity[{}]", u.label), params, one, one, worst, worst, params.tol_exact, Metric::Absolute)
        .with_runtime(start)
        .note(format!("{samples} random points")))
}

/// (ρ_f ζ)(x, y, r) = ∫ e^{λr̃n} f(x, y, r̃) ζ(e^{λr̃}x, e^{λr̃}y, r − r̃) dr̃.
pub fn rho_op(params: &ModelParams, f: &CylFunction) -> Result<OperatorHandle> {
    check_dims(params, f)?;
    let (n, l, order) = (params.n, params.lambda, params.quad_r_order);
    let nf = n as f64;
    let (f1, f2) = (f.clone(), f.clone());
    let action = move |z: &CylFunction| -> Result<CylFunction> {
        if f1.is_zero() || z.is_zero() {
            return Ok(CylFunction::zero(n));
        }
        let (fs, zs) = (f1.rsupp(), z.rsupp());
        let rsupp = (fs.0 + zs.0, fs.1 + zs.1);
        let s = (l * 0.5 * (fs.0 + fs.1)).exp();
        let hint = f1.hint().product(&z.hint().affine_pullback(s, &vec![0.0; 2 * n]));
        let (f, z) = (f1.clone(), z.clone());
        Ok(CylFunction::lazy(n, rsupp, hint, z.depth().max(f.depth()) + 1, format!("ρ[{}]({})", f.label(), z.label()), move |x, y, r| {
            quadrature::integrate_r(order, fs.0.max(r - zs.1), fs.1.min(r - zs.0), |rt| {
                let s = (l * rt).exp();
                let fv = f.eval(x, y, rt);
                if fv == ZERO {
                    return ZERO;
                }
                let (xs, ys) = scaled(x, y, s);
                fv * z.eval(&xs[..n], &ys[..n], r - rt) * (l * rt * nf).exp()
            })
        }))
    };
    let adjoint = move |e: &CylFunction| -> Result<CylFunction> {
        if f2.is_zero() || e.is_zero() {
            return Ok(CylFunction::zero(n));
        }
        let (fs, es) = (f2.rsupp(), e.rsupp());
        let rsupp = (es.0 - fs.1, es.1 - fs.0);
        let s = (l * 0.5 * (fs.0 + fs.1)).exp();
        let zero = vec![0.0; 2 * n];
        let hint = f2.hint().affine_pullback(1.0 / s, &zero).product(&e.hint().affine_pullback(1.0 / s, &zero));
        let (f, e) = (f2.clone(), e.clone());
        Ok(CylFunction::lazy(n, rsupp, hint, e.depth().max(f.depth()) + 1, format!("ρ[{}]*({})", f.label(), e.label()), move |x, y, u| {
            quadrature::integrate_r(order, fs.0.max(es.0 - u), fs.1.min(es.1 - u), |rt| {
                let (xs, ys) = scaled(x, y, (-l * rt).exp());
                let fv = f.eval(&xs[..n], &ys[..n], rt);
                if fv == ZERO {
                    return ZERO;
                }
                fv.conj() * e.eval(&xs[..n], &ys[..n], u + rt) * (-l * rt * nf).exp()
            })
        }))
    };
    Ok(OperatorHandle::new(format!("ρ[{}]", f.label()), action, adjoint).with_symbol(Symbol::Rho(f.clone())))
}

/// (λ_f ζ)(x, y, r) = ∫ f(e^{λr̃}x, e^{λr̃}y, r − r̃) ζ(x, y, r̃) dr̃.
pub fn lambda_op(params: &ModelParams, f: &CylFunction) -> Result<OperatorHandle> {
    check_dims(params, f)?;
    let (n, l, order) = (params.n, params.lambda, params.quad_r_order);
    let (f1, f2) = (f.clone(), f.clone());
    let action = move |z: &CylFunction| -> Result<CylFunction> {
        if f1.is_zero() || z.is_zero() {
            return Ok(CylFunction::zero(n));
        }
        let (fs, zs) = (f1.rsupp(), z.rsupp());
        let rsupp = (fs.0 + zs.0, fs.1 + zs.1);
        let s = (l * 0.5 * (zs.0 + zs.1)).exp();
        let hint = z.hint().product(&f1.hint().affine_pullback(s, &vec![0.0; 2 * n]));
        let (f, z) = (f1.clone(), z.clone());
        Ok(CylFunction::lazy(n, rsupp, hint, z.depth().max(f.depth()) + 1, format!("λ[{}]({})", f.label(), z.label()), move |x, y, r| {
            quadrature::integrate_r(order, zs.0.max(r - fs.1), zs.1.min(r - fs.0), |rt| {
                let zv = z.eval(x, y, rt);
                if zv == ZERO {
                    return ZERO;
                }
                let (xs, ys) = scaled(x, y, (l * rt).exp());
                f.eval(&xs[..n], &ys[..n], r - rt) * zv
            })
        }))
    };
    let adjoint = move |e: &CylFunction| -> Result<CylFunction> {
        if f2.is_zero() || e.is_zero() {
            return Ok(CylFunction::zero(n));
        }
        let (fs, es) = (f2.rsupp(), e.rsupp());
        let rsupp = (es.0 - fs.1, es.1 - fs.0);
        let hint = e.hint().clone();
        let (f, e) = (f2.clone(), e.clone());
        Ok(CylFunction::lazy(n, rsupp, hint, e.depth().max(f.depth()) + 1, format!("λ[{}]*({})", f.label(), e.label()), move |x, y, rt| {
            let (xs, ys) = scaled(x, y, (l * rt).exp());
            quadrature::integrate_r(order, es.0.max(rt + fs.0), es.1.min(rt + fs.1), |r| {
                let ev = e.eval(x, y, r);
                if ev == ZERO {
                    return ZERO;
                }
                f.eval(&xs[..n], &ys[..n], r - rt).conj() * ev
            })
        }))
    };
    Ok(OperatorHandle::new(format!("λ[{}]", f.label()), action, adjoint).with_symbol(Symbol::Lambda(f.clone())))
}

#[inline]
fn scaled(x: &[f64], y: &[f64], s: f64) -> ([f64; 8], [f64; 8]) {
    let mut xs = [0.0f64; 8];
    let mut ys = [0.0f64; 8];
    for i in 0..x.len() {
        xs[i] = s * x[i];
        ys[i] = s * y[i];
    }
    (xs, ys)
}

/// f̃(x, y, r) = ē[η(r) β(x, y)] f(−e^{λr}x, −e^{λr}y, −r).
pub fn tilde(params: &ModelParams, f: &CylFunction) -> CylFunction {
    if f.is_zero() {
        return f.clone();
    }
    let (n, l) = (params.n, params.lambda);
    let (lo, hi) = f.rsupp();
    let s = (-l * 0.5 * (lo + hi)).exp();
    let hint = f.hint().affine_pullback(-s, &vec![0.0; 2 * n]);
    let g = f.clone();
    CylFunction::lazy(n, (-hi, -lo), hint, f.depth(), format!("~{}", f.label()), move |x, y, r| {
        let (xs, ys) = scaled(x, y, -(l * r).exp());
        g.eval(&xs[..n], &ys[..n], -r) * ebar(eta(l, r) * beta(x, y))
    })
}

/// ⟨ρ_f λ_g ξ, η⟩ = ⟨λ_g ρ_f ξ, η⟩, each side evaluated by moving one
/// factor to the other slot as its adjoint.
pub fn commutant_check(params: &ModelParams, f: &CylFunction, g: &CylFunction, xi: &CylFunction, eta_v: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let rho = rho_op(params, f)?;
    let lam = lambda_op(params, g)?;
    let lhs = inner_product(params, &lam.apply(xi)?, &rho.apply_adjoint(eta_v)?)?;
    let rhs = inner_product(params, &rho.apply(xi)?, &lam.apply_adjoint(eta_v)?)?;
    Ok(CheckReport::compare("commutant", params, lhs, rhs, params.tol_quad, Metric::Absolute).with_runtime(start))
}

/// ⟨j ρ_f j ξ, η⟩ = ⟨λ_f̃ ξ, η⟩.
pub fn j_rho_j_check(params: &ModelParams, f: &CylFunction, xi: &CylFunction, eta_v: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let j = unitaries::build_j(params);
    let lhs = inner_product(params, &rho_op(params, f)?.apply(&j.apply_cyl(xi)?)?, &j.apply_cyl(eta_v)?)?;
    let rhs = lambda_op(params, &tilde(params, f))?.matrix_element(params, xi, eta_v)?;
    Ok(CheckReport::compare("j_rho_j", params, lhs, rhs, params.tol_quad, Metric::Relative).with_runtime(start))
}

/// ⟨U_A(ξ⊗ξ'), η⊗η'⟩ by direct nested quadrature: the second leg's x' and
/// y' integrals are done first (as one-dimensional integrals when separable).
pub fn pairing_direct(params: &ModelParams, xi: &CylFunction, eta_v: &CylFunction, xi2: &CylFunction, eta2: &CylFunction) -> Result<Complex64> {
    for f in [xi, eta_v, xi2, eta2] {
        check_dims(params, f)?;
    }
    let (n, l) = (params.n, params.lambda);
    // ∫ s^n ē[η(r') β(s x, y' − s y)] ξ(s x, s y, r + r') ξ'(x' − s x, y' − s y, r') conj η(x, y, r) conj η'(x', y', r')
    let s2 = intersect(xi2.rsupp(), eta2.rsupp());
    if s2.1 <= s2.0 {
        return Ok(ZERO);
    }
    let order = params.quad_xy_order;
    let outer_order = reduced_xy_order(params);
    let sep = xi2.is_separable() && eta2.is_separable();
    let r_rule = quadrature::r_rule(params.quad_r_order, s2.0, s2.1);
    let mut total = ZERO;
    for (&rp, &wrp) in r_rule.nodes.iter().zip(&r_rule.weights) {
        let s = (-l * rp).exp();
        let et = eta(l, rp);
        let rr = intersect(eta_v.rsupp(), (xi.rsupp().0 - rp, xi.rsupp().1 - rp));
        if rr.1 <= rr.0 {
            continue;
        }
        // leg-1 placement: η(x), ξ(s x) and the leg-2 overlap, localized in s x
        let hint = eta_v
            .hint()
            .product(&xi.hint().affine_pullback(s, &vec![0.0; 2 * n]))
            .product(&c1_hint(xi2, eta2).affine_pullback(s, &vec![0.0; 2 * n]));
        let xy = XyRule::new(outer_order, &hint);
        let inner_leg2 = |x: &[f64], y: &[f64]| -> Complex64 {
            if sep {
                let (a, b) = (xi2.separable_slice(rp).expect("separable"), eta2.separable_slice(rp).expect("separable"));
                let mut acc = a.coef * b.coef.conj();
                if acc == ZERO {
                    return ZERO;
                }
                for i in 0..n {
                    let sx = s * x[i];
                    let sy = s * y[i];
                    let (ax, bx) = (a.x[i], b.x[i]);
                    let (c, w) = product_hint_1d(ax.center + sx, ax.width, bx.center, bx.width);
                    acc *= gh_1d(order, c, w, |xp| Complex64::new(ax.eval(xp - sx) * bx.eval(xp), 0.0));
                    let (ay, by) = (a.y[i], b.y[i]);
                    let (c, w) = product_hint_1d(ay.center + sy, ay.width, by.center, by.width);
                    acc *= gh_1d(order, c, w, |yp| ebar(et * sx * (yp - sy)) * (ay.eval(yp - sy) * by.eval(yp)));
                }
                acc
            } else {
                let (xs, ys) = scaled(x, y, s);
                let h2 = xi2.hint();
                let mut shift = xs[..n].to_vec();
                shift.extend_from_slice(&ys[..n]);
                let moved = Hint { center: h2.center.iter().zip(&shift).map(|(c, t)| c + t).collect(), width: h2.width.clone() };
                XyRule::new(order, &eta2.hint().product(&moved)).integrate(|xp, yp| {
                    let mut u = [0.0f64; 8];
                    let mut v = [0.0f64; 8];
                    let mut arg = 0.0;
                    for i in 0..n {
                        u[i] = xp[i] - xs[i];
                        v[i] = yp[i] - ys[i];
                        arg += xs[i] * v[i];
                    }
                    ebar(et * arg) * xi2.eval(&u[..n], &v[..n], rp) * eta2.eval(xp, yp, rp).conj()
                })
            }
        };
        let leg1 = quadrature::integrate_r(params.quad_r_order, rr.0, rr.1, |r| {
            xy.integrate(|x, y| {
                let ev = eta_v.eval(x, y, r);
                if ev == ZERO {
                    return ZERO;
                }
                let (xs, ys) = scaled(x, y, s);
                let a = xi.eval(&xs[..n], &ys[..n], r + rp);
                if a == ZERO {
                    return ZERO;
                }
                a * ev.conj() * inner_leg2(x, y)
            })
        });
        total += leg1 * (s.powi(n as i32) * wrp);
    }
    Ok(total)
}

/// ⟨L_f ξ, η⟩ = ∫ f(δ, ε, ρ) e[η(ρ)β(δ, ε)] C1_{ξ,η}(δ, ε; ρ) dδ dε dρ.
pub fn left_matrix_element(params: &ModelParams, f: &CylFunction, xi: &CylFunction, eta_v: &CylFunction) -> Result<Complex64> {
    for g in [f, xi, eta_v] {
        check_dims(params, g)?;
    }
    let rr = intersect(f.rsupp(), intersect(xi.rsupp(), eta_v.rsupp()));
    if rr.1 <= rr.0 || f.is_zero() || xi.is_zero() || eta_v.is_zero() {
        return Ok(ZERO);
    }
    let n = params.n;
    let l = params.lambda;
    let xy = XyRule::new(params.quad_xy_order, &f.hint().product(&c1_hint(xi, eta_v)));
    let rule = quadrature::r_rule(params.quad_r_order, rr.0, rr.1);
    let m = xy.len();
    Ok(par::sum(rule.len() * m, |idx| {
        let (ir, k) = (idx / m, idx % m);
        let rho = rule.nodes[ir];
        let mut buf = [0.0f64; 16];
        let wk = xy.point(k, &mut buf[..2 * n]);
        let (d, e) = buf[..2 * n].split_at(n);
        let fv = f.eval(d, e, rho);
        if fv == ZERO {
            return ZERO;
        }
        fv * e_fwd(eta(l, rho) * beta(d, e)) * c1(params, xi, eta_v, d, e, rho) * (wk * rule.weights[ir])
    }))
}

/// ⟨ρ_g ξ, η⟩ = ∫ g(x, y, r̃) e^{λr̃n} ξ(e^{λr̃}x, e^{λr̃}y, r − r̃) conj η(x, y, r) dx dy dr̃ dr,
/// with g evaluated once per (x, y, r̃) node.
pub fn rho_matrix_element(params: &ModelParams, g: &CylFunction, xi: &CylFunction, eta_v: &CylFunction) -> Result<Complex64> {
    for f in [g, xi, eta_v] {
        check_dims(params, f)?;
    }
    if g.is_zero() || xi.is_zero() || eta_v.is_zero() {
        return Ok(ZERO);
    }
    let (n, l) = (params.n, params.lambda);
    let nf = n as f64;
    let (gs, xs_, es) = (g.rsupp(), xi.rsupp(), eta_v.rsupp());
    let rt_range = intersect(gs, (es.0 - xs_.1, es.1 - xs_.0));
    if rt_range.1 <= rt_range.0 {
        return Ok(ZERO);
    }
    let s = (l * 0.5 * (rt_range.0 + rt_range.1)).exp();
    let hint = g.hint().product(eta_v.hint()).product(&xi.hint().affine_pullback(s, &vec![0.0; 2 * n]));
    let xy = XyRule::new(params.quad_xy_order, &hint);
    let rule = quadrature::r_rule(params.quad_r_order, rt_range.0, rt_range.1);
    let m = xy.len();
    let order = params.quad_r_order;
    Ok(par::sum(rule.len() * m, |idx| {
        let (ir, k) = (idx / m, idx % m);
        let rt = rule.nodes[ir];
        let mut buf = [0.0f64; 16];
        let wk = xy.point(k, &mut buf[..2 * n]);
        let (x, y) = buf[..2 * n].split_at(n);
        let gv = g.eval(x, y, rt);
        if gv == ZERO {
            return ZERO;
        }
        let (xsc, ysc) = scaled(x, y, (l * rt).exp());
        let inner = quadrature::integrate_r(order, es.0.max(xs_.0 + rt), es.1.min(xs_.1 + rt), |r| {
            let ev = eta_v.eval(x, y, r);
            if ev == ZERO {
                return ZERO;
            }
            xi.eval(&xsc[..n], &ysc[..n], r - rt) * ev.conj()
        });
        gv * inner * ((l * rt * nf).exp() * wk * rule.weights[ir])
    }))
}

/// (ω⊗ω')(U_A) three ways: directly, as ω(ρ(ω')) and as ω'(L(ω)).
pub fn duality_pairing(params: &ModelParams, omega: (&CylFunction, &CylFunction), omega2: (&CylFunction, &CylFunction)) -> Result<CheckReport> {
    let start = Instant::now();
    let (xi, eta_v) = omega;
    let (xi2, eta2) = omega2;
    let direct = pairing_direct(params, xi, eta_v, xi2, eta2)?;
    let g = unitaries::slice_second_symbol(params, xi2, eta2);
    let via_rho = rho_matrix_element(params, &g, xi, eta_v)?;
    let f = unitaries::slice_first_symbol(params, xi, eta_v);
    let via_l = left_matrix_element(params, &f, xi2, eta2)?;
    let parts = vec![
        CheckReport::compare("pairing_rho", params, via_rho, direct, params.tol_quad, Metric::Relative),
        CheckReport::compare("pairing_L", params, via_l, direct, params.tol_quad, Metric::Relative),
    ];
    Ok(worst_of("duality_pairing", params, parts).with_runtime(start))
}

/// Δ̂(ρ_b) = U_A* (1 ⊗ ρ_b) U_A or Δ_B(λ_b) = Û_A (λ_b ⊗ 1) Û_A*.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualVariant {
    Hat,
    B,
}

pub fn dual_coproduct(params: &ModelParams, b: &CylFunction, variant: DualVariant) -> Result<TensorOperatorHandle> {
    check_dims(params, b)?;
    let (outer, leg_op, leg) = match variant {
        DualVariant::Hat => (unitaries::build_ua(params).adjoint(), rho_op(params, b)?, 1),
        DualVariant::B => (unitaries::build_ua_hat(params), lambda_op(params, b)?, 0),
    };
    let inner = outer.adjoint();
    let label = format!("{}[{}]", if variant == DualVariant::Hat { "Δ̂" } else { "Δ_B" }, b.label());
    let (o1, i1, o2, i2) = (outer.clone(), inner.clone(), outer, inner);
    let (l1, l2) = (leg_op.clone(), leg_op);
    let (p1, p2) = (params.clone(), params.clone());
    Ok(TensorOperatorHandle::new(
        label,
        move |v| o1.apply_tensor(&r_op_on_leg(&p1, &l1, &i1.apply_tensor(v)?, leg, false)),
        move |v| o2.apply_tensor(&r_op_on_leg(&p2, &l2, &i2.apply_tensor(v)?, leg, true)),
    ))
}

/// Applies a one-leg operator to one leg of a two-leg vector by freezing the other leg.
fn r_op_on_leg(params: &ModelParams, op: &OperatorHandle, v: &TensorFunction, leg: usize, adjoint: bool) -> TensorFunction {
    let n = params.n;
    let d = 2 * n + 1;
    let other = 1 - leg;
    let (op, v2) = (op.clone(), v.clone());
    let window = params.r_support * 4.0;
    let hints = v.hints.clone();
    let mut rsupps = v.rsupps.clone();
    rsupps[leg] = (-window, window);
    TensorFunction::new(2, n, rsupps, hints.clone(), format!("{}_{}({})", op.label, leg + 1, v.label), move |p| {
        let frozen: Vec<f64> = p[other * d..(other + 1) * d].to_vec();
        let vv = v2.clone();
        let fz = frozen.clone();
        let section = CylFunction::lazy(n, vv.rsupps[leg], hints[leg].clone(), 0, "section", move |x, y, r| {
            let mut q = [0.0f64; 32];
            q[other * d..(other + 1) * d].copy_from_slice(&fz);
            q[leg * d..leg * d + n].copy_from_slice(x);
            q[leg * d + n..leg * d + 2 * n].copy_from_slice(y);
            q[leg * d + 2 * n] = r;
            vv.eval(&q[..2 * d])
        });
        let img = if adjoint { op.apply_adjoint(&section) } else { op.apply(&section) };
        match img {
            Ok(g) => {
                let c = &p[leg * d..(leg + 1) * d];
                g.eval(&c[..n], &c[n..2 * n], c[2 * n])
            }
            Err(_) => Complex64::new(f64::NAN, f64::NAN),
        }
    })
}

/// Left contraction symbol t with (ω_{ζ,ζ} ⊗ id)(Δ L_a) = L_t:
/// t(δ, ε, R') = e[−η(R')β(δ,ε)] ∫ a(δ, ε, R) e[η(R)β(δ,ε)] C1_{ζζ}(e^{λR'}δ, e^{λR'}ε; R − R') dR.
/// The R-integral runs over a fixed rule on supp a so that values of a are reused.
pub fn left_contraction_symbol(params: &ModelParams, a: &CylFunction, zeta: &CylFunction) -> CylFunction {
    let n = params.n;
    if a.is_zero() || zeta.is_zero() {
        return CylFunction::zero(n);
    }
    let (l, p) = (params.lambda, params.clone());
    let sa = a.rsupp();
    let sz = zeta.rsupp();
    let rsupp = (sa.0 - sz.1, sa.1 - sz.0);
    let rule = Arc::new(quadrature::r_rule(params.quad_r_order, sa.0, sa.1));
    let am = a.memoized();
    let z = zeta.clone();
    let hint = a.hint().product(&c1_hint(zeta, zeta));
    CylFunction::lazy(n, rsupp, hint, a.depth() + 1, format!("t[{}|{}]", a.label(), zeta.label()), move |d, e, rp| {
        let s = (l * rp).exp();
        let (ds, es) = scaled(d, e, s);
        let b = beta(d, e);
        let mut acc = ZERO;
        for (&big_r, &w) in rule.nodes.iter().zip(&rule.weights) {
            let rho = big_r - rp;
            if rho < sz.0 || rho > sz.1 {
                continue;
            }
            let av = am.eval(d, e, big_r);
            if av == ZERO {
                continue;
            }
            acc += av * e_fwd(eta(l, big_r) * b) * c1(&p, &z, &z, &ds[..n], &es[..n], rho) * w;
        }
        acc * ebar(eta(l, rp) * b)
    })
    .memoized()
}

/// Right contraction symbol t2 with (id ⊗ ω_{ζ,ζ})(Δ L_a) = L_{t2}:
/// t2(δ', ε', ρ) = e[−η(ρ)β(δ',ε')] ∫ e^{−2λR'n} a(e^{−λR'}δ', e^{−λR'}ε', ρ + R')
///                 · e[η(ρ + R') e^{−2λR'} β(δ',ε')] C1_{ζζ}(e^{−λR'}δ', e^{−λR'}ε'; R') dR'.
pub fn right_contraction_symbol(params: &ModelParams, a: &CylFunction, zeta: &CylFunction) -> CylFunction {
    let n = params.n;
    if a.is_zero() || zeta.is_zero() {
        return CylFunction::zero(n);
    }
    let (l, p) = (params.lambda, params.clone());
    let sa = a.rsupp();
    let sz = zeta.rsupp();
    let rsupp = (sa.0 - sz.1, sa.1 - sz.0);
    let order = params.quad_r_order / 2;
    let am = a.clone();
    let z = zeta.clone();
    let hint = a.hint().product(&c1_hint(zeta, zeta));
    let nf = n as f64;
    CylFunction::lazy(n, rsupp, hint, a.depth() + 1, format!("t2[{}|{}]", a.label(), zeta.label()), move |d, e, rho| {
        let b = beta(d, e);
        let lo = sz.0.max(sa.0 - rho);
        let hi = sz.1.min(sa.1 - rho);
        let acc = quadrature::integrate_r(order, lo, hi, |rp| {
            let s = (-l * rp).exp();
            let (ds, es) = scaled(d, e, s);
            let av = am.eval(&ds[..n], &es[..n], rho + rp);
            if av == ZERO {
                return ZERO;
            }
            av * e_fwd(eta(l, rho + rp) * s * s * b) * c1(&p, &z, &z, &ds[..n], &es[..n], rp) * (-2.0 * l * rp * nf).exp()
        });
        acc * ebar(eta(l, rho) * b)
    })
    .memoized()
}
