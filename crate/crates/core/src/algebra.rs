//! The twisted group algebra: product, involution, regular representation,
//! GNS consistency and symbol extraction.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::funcspace::{self, check_dims, inner_product, CylFunction, MAX_DEPTH};
use crate::kernels::{beta, ebar, eta};
use crate::params::ModelParams;
use crate::quadrature::{Hint, XyRule};
use crate::report::{CheckReport, Metric};
use crate::weights;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn next_depth(a: usize, b: usize) -> Result<usize> {
    let d = a.max(b) + 1;
    if d > MAX_DEPTH {
        return Err(Error::Nesting { depth: d, limit: MAX_DEPTH });
    }
    Ok(d)
}

/// (f × g)(x, y, r) = ∫ f(x̃, ỹ, r) g(x − x̃, y − ỹ, r) ē[η(r) β(x̃, y − ỹ)] dx̃ dỹ.
pub fn twisted_mul(params: &ModelParams, f: &CylFunction, g: &CylFunction) -> Result<CylFunction> {
    check_dims(params, f)?;
    check_dims(params, g)?;
    let depth = next_depth(f.depth(), g.depth())?;
    let n = params.n;
    let lo = f.rsupp().0.max(g.rsupp().0);
    let hi = f.rsupp().1.min(g.rsupp().1);
    if hi <= lo || f.is_zero() || g.is_zero() {
        return Ok(CylFunction::zero(n));
    }
    let hint = f.hint().convolve(g.hint());
    let breaks = funcspace::merge_breaks((lo, hi), &[f, g], false);
    let label = format!("({} × {})", f.label(), g.label());
    let (f, g) = (f.clone(), g.clone());
    let lambda = params.lambda;
    let order = params.quad_xy_order;
    let out = CylFunction::lazy(n, (lo, hi), hint, depth, label, move |x, y, r| {
        twisted_integral(order, lambda, &f, &g, x, y, r)
    })
    .with_breaks(breaks);
    Ok(out.memoized())
}

/// Shared kernel of the twisted product and L_f ξ.
fn twisted_integral(order: usize, lambda: f64, f: &CylFunction, g: &CylFunction, x: &[f64], y: &[f64], r: f64) -> Complex64 {
    let n = x.len();
    let mut shift = x.to_vec();
    shift.extend_from_slice(y);
    // x̃ ↦ g(x − x̃): center x − c_g, same width
    let gh = g.hint();
    let pulled = Hint {
        center: shift.iter().zip(&gh.center).map(|(s, c)| s - c).collect(),
        width: gh.width.clone(),
    };
    let hint = f.hint().product(&pulled);
    let et = eta(lambda, r);
    XyRule::new(order, &hint).integrate(|xt, yt| {
        let mut xd = [0.0f64; 8];
        let mut yd = [0.0f64; 8];
        for i in 0..n {
            xd[i] = x[i] - xt[i];
            yd[i] = y[i] - yt[i];
        }
        let gv = g.eval(&xd[..n], &yd[..n], r);
        if gv == ZERO {
            return ZERO;
        }
        f.eval(xt, yt, r) * gv * ebar(et * beta(xt, &yd[..n]))
    })
}

/// f*(x, y, r) = conj f(−x, −y, r) · ē[η(r) β(x, y)].
pub fn involution(params: &ModelParams, f: &CylFunction) -> CylFunction {
    if f.is_zero() {
        return f.clone();
    }
    let g = f.clone();
    let lambda = params.lambda;
    CylFunction::lazy(params.n, f.rsupp(), f.hint().negated(), f.depth(), format!("{}*", f.label()), move |x, y, r| {
        let mut xm = [0.0f64; 8];
        let mut ym = [0.0f64; 8];
        let n = x.len();
        for i in 0..n {
            xm[i] = -x[i];
            ym[i] = -y[i];
        }
        g.eval(&xm[..n], &ym[..n], r).conj() * ebar(eta(lambda, r) * beta(x, y))
    })
    .with_breaks(f.breaks().to_vec())
}

type Action = dyn Fn(&CylFunction) -> Result<CylFunction> + Send + Sync;

/// Which concrete operator family a handle belongs to, with its symbol.
#[derive(Debug, Clone)]
pub enum Symbol {
    /// L_f
    Left(CylFunction),
    /// ρ_f
    Rho(CylFunction),
    /// λ_f
    Lambda(CylFunction),
}

/// A bounded operator on the Hilbert space given by its action and the
/// action of its adjoint.
#[derive(Clone)]
pub struct OperatorHandle {
    action: Arc<Action>,
    adjoint: Arc<Action>,
    pub label: String,
    pub symbol: Option<Symbol>,
}

impl fmt::Debug for OperatorHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorHandle").field("label", &self.label).finish()
    }
}

impl OperatorHandle {
    pub fn new<A, B>(label: impl Into<String>, action: A, adjoint: B) -> Self
    where
        A: Fn(&CylFunction) -> Result<CylFunction> + Send + Sync + 'static,
        B: Fn(&CylFunction) -> Result<CylFunction> + Send + Sync + 'static,
    {
        Self { action: Arc::new(action), adjoint: Arc::new(adjoint), label: label.into(), symbol: None }
    }

    pub fn with_symbol(mut self, symbol: Symbol) -> Self {
        self.symbol = Some(symbol);
        self
    }

    pub fn zero(n: usize) -> Self {
        Self::new("0", move |_| Ok(CylFunction::zero(n)), move |_| Ok(CylFunction::zero(n)))
    }

    pub fn identity() -> Self {
        Self::new("1", |v| Ok(v.clone()), |v| Ok(v.clone()))
    }

    /// Multiplication by a profile m(r); self-adjoint when m is real.
    pub fn multiplier<M>(label: &str, m: M) -> Self
    where
        M: Fn(f64) -> f64 + Send + Sync + Clone + 'static,
    {
        let m2 = m.clone();
        let l = label.to_string();
        let l2 = label.to_string();
        Self::new(label, move |v| Ok(v.mul_profile(m.clone(), &l)), move |v| Ok(v.mul_profile(m2.clone(), &l2)))
    }

    pub fn apply(&self, v: &CylFunction) -> Result<CylFunction> {
        (self.action)(v)
    }

    pub fn apply_adjoint(&self, v: &CylFunction) -> Result<CylFunction> {
        (self.adjoint)(v)
    }

    pub fn adjoint(&self) -> OperatorHandle {
        Self { action: self.adjoint.clone(), adjoint: self.action.clone(), label: format!("{}*", self.label), symbol: None }
    }

    /// self ∘ other.
    pub fn compose(&self, other: &OperatorHandle) -> OperatorHandle {
        let (a, b) = (self.action.clone(), other.action.clone());
        let (ad, bd) = (self.adjoint.clone(), other.adjoint.clone());
        Self {
            action: Arc::new(move |v| a(&b(v)?)),
            adjoint: Arc::new(move |v| bd(&ad(v)?)),
            label: format!("{}∘{}", self.label, other.label),
            symbol: None,
        }
    }

    pub fn scale(&self, alpha: Complex64) -> OperatorHandle {
        let (a, ad) = (self.action.clone(), self.adjoint.clone());
        Self {
            action: Arc::new(move |v| Ok(a(v)?.scale(alpha))),
            adjoint: Arc::new(move |v| Ok(ad(v)?.scale(alpha.conj()))),
            label: format!("{alpha}·{}", self.label),
            symbol: None,
        }
    }

    /// ⟨T ξ, η⟩.
    pub fn matrix_element(&self, params: &ModelParams, xi: &CylFunction, eta: &CylFunction) -> Result<Complex64> {
        inner_product(params, &self.apply(xi)?, eta)
    }
}

/// L_f as an operator: (L_f ξ)(x, y, r) = ∫ f(x̃, ỹ, r) ξ(x − x̃, y − ỹ, r) ē[η(r) β(x̃, y − ỹ)].
pub fn regular_rep(params: &ModelParams, f: &CylFunction) -> Result<OperatorHandle> {
    check_dims(params, f)?;
    if f.depth() + 1 > MAX_DEPTH {
        return Err(Error::Nesting { depth: f.depth() + 1, limit: MAX_DEPTH });
    }
    let fs = involution(params, f);
    let (p1, p2) = (params.clone(), params.clone());
    let (f1, f2) = (f.clone(), fs.clone());
    Ok(OperatorHandle::new(format!("L[{}]", f.label()), move |v| twisted_mul(&p1, &f1, v), move |v| twisted_mul(&p2, &f2, v))
        .with_symbol(Symbol::Left(f.clone())))
}

/// Lower bound for ‖T‖ from `trials` seeded random unit primitives.
pub fn operator_norm_lb(params: &ModelParams, t: &OperatorHandle, trials: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x6e6f726d);
    let mut best: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let max_k = rng.gen_range(0..3);
        let p = funcspace::random_primitive(params, &mut rng, max_k, 0.5 * params.r_support, 0.3 * params.r_support);
        let xi = p.to_function();
        let img = t.apply(&xi)?;
        let num = funcspace::norm_sq(params, &img)?.max(0.0).sqrt();
        let den = funcspace::norm_sq(params, &xi)?.sqrt();
        if den > 0.0 {
            best = best.max(num / den);
        }
    }
    Ok(best)
}

/// ⟨Λ(f), Λ(g)⟩ = φ(g* × f).
pub fn gns_check(params: &ModelParams, f: &CylFunction, g: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let lhs = inner_product(params, f, g)?;
    let prod = twisted_mul(params, &involution(params, g), f)?;
    let rhs = weights::phi(params, &prod)?;
    Ok(CheckReport::compare("gns", params, lhs, rhs, params.tol_quad, Metric::Relative).with_runtime(start))
}

/// Recovers k with T ≈ L_k as T(e_ε), after checking that the values at a
/// few probe points converge when ε is halved twice.
pub fn extract_symbol(params: &ModelParams, t: &OperatorHandle, eps: f64) -> Result<CylFunction> {
    let k1 = t.apply(&funcspace::approx_identity(params, eps)?)?;
    let k2 = t.apply(&funcspace::approx_identity(params, 0.5 * eps)?)?;
    let k3 = t.apply(&funcspace::approx_identity(params, 0.25 * eps)?)?;
    let s = params.xy_scale;
    let probes = [(0.0, 0.0, 0.0), (0.3 * s, -0.2 * s, 0.1), (-0.4 * s, 0.5 * s, -0.2)];
    let n = params.n;
    let (mut d1, mut d2, mut scale) = (0.0f64, 0.0f64, 0.0f64);
    for (px, py, pr) in probes {
        let x = vec![px; n];
        let y = vec![py; n];
        let (a, b, c) = (k1.eval(&x, &y, pr), k2.eval(&x, &y, pr), k3.eval(&x, &y, pr));
        d1 = d1.max((a - b).norm());
        d2 = d2.max((b - c).norm());
        scale = scale.max(c.norm());
    }
    let floor = 1e3 * f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    if d2 > d1 && d2 > floor {
        return Err(Error::NotASymbol { coarse: d1, fine: d2 });
    }
    Ok(k1)
}

/// T(e_ε) without the convergence probe.
pub fn extract_symbol_unchecked(params: &ModelParams, t: &OperatorHandle, eps: f64) -> Result<CylFunction> {
    t.apply(&funcspace::approx_identity(params, eps)?)
}

/// (f × g) × h = f × (g × h) pointwise.
pub fn associativity_check(params: &ModelParams, f: &CylFunction, g: &CylFunction, h: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let lhs = twisted_mul(params, &twisted_mul(params, f, g)?, h)?;
    let rhs = twisted_mul(params, f, &twisted_mul(params, g, h)?)?;
    let (abs, rel, a, b) = funcspace::pointwise_residual(params, &lhs, &rhs, 20, 0xa550c);
    Ok(CheckReport::from_residual("associativity", params, a, b, abs, rel, params.tol_quad, Metric::Relative)
        .note("20 random points")
        .with_runtime(start))
}

/// f** = f and (f × g)* = g* × f* pointwise, and ‖f*‖₂ = ‖f‖₂.
pub fn involution_check(params: &ModelParams, f: &CylFunction, g: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let ff = involution(params, &involution(params, f));
    let (abs, rel, a, b) = funcspace::pointwise_residual(params, &ff, f, 100, 0x1d);
    let r1 = CheckReport::from_residual("f**=f", params, a, b, abs, rel, params.tol_exact, Metric::Relative);
    let lhs = involution(params, &twisted_mul(params, f, g)?);
    let rhs = twisted_mul(params, &involution(params, g).memoized(), &involution(params, f).memoized())?;
    let (abs, rel, a, b) = funcspace::pointwise_residual(params, &lhs, &rhs, 20, 0x1e);
    let r2 = CheckReport::from_residual("(fg)*=g*f*", params, a, b, abs, rel, params.tol_quad, Metric::Relative);
    let n1 = Complex64::new(funcspace::norm_sq(params, &involution(params, f))?, 0.0);
    let n2 = Complex64::new(funcspace::norm_sq(params, f)?, 0.0);
    let r3 = CheckReport::compare("isometry", params, n1, n2, params.tol_quad, Metric::Relative);
    Ok(crate::report::worst_of("involution", params, vec![r1, r2, r3]).with_runtime(start))
}
