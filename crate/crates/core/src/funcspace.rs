//! Functions on R^n × R^n × R: algebra elements and Hilbert-space vectors,
//! inner products, the orthonormal basis and approximate identities.

use std::fmt;
use std::sync::{Arc, OnceLock};

use dashmap::DashMap;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::quadrature::{self, Hint, XyRule};

/// Maximum lazy nesting depth of quadrature-based constructions.
pub const MAX_DEPTH: usize = 3;

/// Below this multiple of `xy_scale` an approximate identity is rejected.
pub const MIN_EPS_FACTOR: f64 = 1e-4;

pub type Evaluator = dyn Fn(&[f64], &[f64], f64) -> Complex64 + Send + Sync;
type SepFn = dyn Fn(f64) -> SepSlice + Send + Sync;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FnKind {
    Primitive,
    Lazy,
}

/// C^∞ bump exp(1 − 1/(1 − u²)) on (−1, 1), equal to 1 at the origin.
#[inline]
pub fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// ∫ bump(u)² du over (−1, 1).
pub fn bump_sq_integral() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| {
        let rule = quadrature::legendre_rule(64, -1.0, 1.0, 8);
        rule.nodes.iter().zip(&rule.weights).map(|(u, w)| w * bump(*u).powi(2)).sum()
    })
}

/// Physicists' Hermite polynomial H_k(t).
#[inline]
pub fn hermite_poly(k: u32, t: f64) -> f64 {
    let mut h0 = 1.0;
    if k == 0 {
        return h0;
    }
    let mut h1 = 2.0 * t;
    for j in 1..k {
        let h2 = 2.0 * t * h1 - 2.0 * j as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Orthonormal Hermite functions ψ_0..ψ_{len−1} at scale `s`:
/// ψ_k(x) = h_k(x/s)/√s with h_k the standard Hermite functions.
pub fn hermite_functions(len: usize, x: f64, s: f64, out: &mut [f64]) {
    let t = x / s;
    let mut p_prev = 0.0;
    let mut p = std::f64::consts::PI.powf(-0.25) * (-0.5 * t * t).exp();
    let norm = s.sqrt().recip();
    for (k, o) in out.iter_mut().take(len).enumerate() {
        *o = p * norm;
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * t * p - (kf / (kf + 1.0)).sqrt() * p_prev;
        p_prev = p;
        p = next;
    }
}

/// One-dimensional factor H_k((x − c)/w) exp(−((x − c)/w)²/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Herm1 {
    pub k: u32,
    pub center: f64,
    pub width: f64,
}

impl Herm1 {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.width;
        hermite_poly(self.k, t) * (-0.5 * t * t).exp()
    }
}

/// Value of a separable function at fixed r: coef · Π x-factors · Π y-factors.
#[derive(Debug, Clone, PartialEq)]
pub struct SepSlice {
    pub coef: Complex64,
    pub x: SmallVec<[Herm1; 2]>,
    pub y: SmallVec<[Herm1; 2]>,
}

impl SepSlice {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Complex64 {
        let mut v = 1.0;
        for (h, xi) in self.x.iter().zip(x) {
            v *= h.eval(*xi);
        }
        for (h, yi) in self.y.iter().zip(y) {
            v *= h.eval(*yi);
        }
        self.coef * v
    }
}

/// Hermite×Gaussian in each of x and y times a bump in r.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub n: usize,
    pub kx: Vec<u32>,
    pub ky: Vec<u32>,
    pub cx: Vec<f64>,
    pub cy: Vec<f64>,
    pub wx: Vec<f64>,
    pub wy: Vec<f64>,
    pub r_center: f64,
    pub r_half: f64,
    pub coef: Complex64,
}

impl Primitive {
    /// Standard Gaussian primitive of width `w` with an r-bump.
    pub fn gaussian(n: usize, w: f64, r_center: f64, r_half: f64) -> Self {
        Self {
            n,
            kx: vec![0; n],
            ky: vec![0; n],
            cx: vec![0.0; n],
            cy: vec![0.0; n],
            wx: vec![w; n],
            wy: vec![w; n],
            r_center,
            r_half,
            coef: Complex64::new(1.0, 0.0),
        }
    }

    pub fn rsupp(&self) -> (f64, f64) {
        (self.r_center - self.r_half, self.r_center + self.r_half)
    }

    pub fn slice(&self, r: f64) -> SepSlice {
        let b = bump((r - self.r_center) / self.r_half);
        let mk = |k: &[u32], c: &[f64], w: &[f64]| -> SmallVec<[Herm1; 2]> {
            (0..self.n).map(|i| Herm1 { k: k[i], center: c[i], width: w[i] }).collect()
        };
        SepSlice {
            coef: self.coef * b,
            x: mk(&self.kx, &self.cx, &self.wx),
            y: mk(&self.ky, &self.cy, &self.wy),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64], r: f64) -> Complex64 {
        let b = bump((r - self.r_center) / self.r_half);
        if b == 0.0 {
            return ZERO;
        }
        let mut v = b;
        for i in 0..self.n {
            v *= Herm1 { k: self.kx[i], center: self.cx[i], width: self.wx[i] }.eval(x[i]);
            v *= Herm1 { k: self.ky[i], center: self.cy[i], width: self.wy[i] }.eval(y[i]);
        }
        self.coef * v
    }

    /// Closed-form squared L² norm.
    pub fn norm_sq(&self) -> f64 {
        let f1 = |k: u32, w: f64| {
            let fact: f64 = (1..=k).map(f64::from).product();
            w * 2f64.powi(k as i32) * fact * std::f64::consts::PI.sqrt()
        };
        let mut v = self.coef.norm_sqr() * self.r_half * bump_sq_integral();
        for i in 0..self.n {
            v *= f1(self.kx[i], self.wx[i]) * f1(self.ky[i], self.wy[i]);
        }
        v
    }

    /// Rescaled copy with unit L² norm.
    pub fn unit(mut self) -> Self {
        let nrm = self.norm_sq().sqrt();
        if nrm > 0.0 {
            self.coef /= nrm;
        }
        self
    }

    pub fn hint(&self) -> Hint {
        let mut center = self.cx.clone();
        center.extend_from_slice(&self.cy);
        let mut width = self.wx.clone();
        width.extend_from_slice(&self.wy);
        Hint { center, width }
    }

    pub fn to_function(&self) -> CylFunction {
        let p = Arc::new(self.clone());
        let pe = p.clone();
        let ps = p.clone();
        let label = format!(
            "prim(k={:?},{:?}; r={}±{})",
            self.kx, self.ky, self.r_center, self.r_half
        );
        CylFunction {
            n: self.n,
            eval: Arc::new(move |x: &[f64], y: &[f64], r: f64| pe.eval(x, y, r)),
            kind: FnKind::Primitive,
            rsupp: self.rsupp(),
            depth: 0,
            label,
            hint: self.hint(),
            sep: Some(Arc::new(move |r| ps.slice(r))),
            primitive: Some(p),
            breaks: Arc::new([]),
        }
    }
}

/// Builds a primitive after validating its parameters. Indices, centers and
/// widths list the x coordinates first, then y.
pub fn make_primitive(
    params: &ModelParams,
    hermite_indices: &[u32],
    centers: &[f64],
    widths: &[f64],
    r_bump: (f64, f64),
) -> Result<CylFunction> {
    let n = params.n;
    for v in [hermite_indices.len(), centers.len(), widths.len()] {
        if v != 2 * n {
            return Err(Error::Shape { expected: 2 * n, got: v });
        }
    }
    if widths.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::Domain(format!("widths must be positive, got {widths:?}")));
    }
    if centers.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain("centers must be finite".into()));
    }
    let (rc, rh) = r_bump;
    if rh.is_nan() || rh <= 0.0 || rh > params.r_support || (rc.abs() + rh) > params.r_support + 1e-12 {
        return Err(Error::Domain(format!(
            "r bump {rc}±{rh} must lie inside [−{0}, {0}]",
            params.r_support
        )));
    }
    let p = Primitive {
        n,
        kx: hermite_indices[..n].to_vec(),
        ky: hermite_indices[n..].to_vec(),
        cx: centers[..n].to_vec(),
        cy: centers[n..].to_vec(),
        wx: widths[..n].to_vec(),
        wy: widths[n..].to_vec(),
        r_center: rc,
        r_half: rh,
        coef: Complex64::new(1.0, 0.0),
    };
    Ok(p.to_function())
}

/// Seeded random unit primitive: Hermite indices up to `max_k`, centers
/// within ±0.3·xy_scale, widths within [0.8, 1.25]·xy_scale, a random unit
/// phase and an r-bump of half-width `r_half` centered within ±`r_jitter`.
pub fn random_primitive<R: Rng + ?Sized>(
    params: &ModelParams,
    rng: &mut R,
    max_k: u32,
    r_half: f64,
    r_jitter: f64,
) -> Primitive {
    let n = params.n;
    let s = params.xy_scale;
    let mut draw = |len: usize, lo: f64, hi: f64| -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(lo..hi)).collect()
    };
    let cx = draw(n, -0.3 * s, 0.3 * s);
    let cy = draw(n, -0.3 * s, 0.3 * s);
    let wx = draw(n, 0.8 * s, 1.25 * s);
    let wy = draw(n, 0.8 * s, 1.25 * s);
    let kx = (0..n).map(|_| rng.gen_range(0..=max_k)).collect();
    let ky = (0..n).map(|_| rng.gen_range(0..=max_k)).collect();
    let r_center = if r_jitter > 0.0 { rng.gen_range(-r_jitter..r_jitter) } else { 0.0 };
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    Primitive {
        n,
        kx,
        ky,
        cx,
        cy,
        wx,
        wy,
        r_center,
        r_half,
        coef: Complex64::from_polar(1.0, phase),
    }
    .unit()
}

/// An evaluatable complex function on R^n × R^n × R, zero outside its
/// r-support interval.
#[derive(Clone)]
pub struct CylFunction {
    n: usize,
    eval: Arc<Evaluator>,
    kind: FnKind,
    rsupp: (f64, f64),
    depth: usize,
    label: String,
    hint: Hint,
    sep: Option<Arc<SepFn>>,
    primitive: Option<Arc<Primitive>>,
    breaks: Arc<[f64]>,
}

impl fmt::Debug for CylFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CylFunction")
            .field("label", &self.label)
            .field("kind", &self.kind)
            .field("rsupp", &self.rsupp)
            .field("depth", &self.depth)
            .finish()
    }
}

impl CylFunction {
    /// Lazy function from a closure. The closure is only called for r
    /// inside `rsupp`.
    pub fn lazy<F>(n: usize, rsupp: (f64, f64), hint: Hint, depth: usize, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], f64) -> Complex64 + Send + Sync + 'static,
    {
        debug_assert_eq!(hint.dim(), 2 * n);
        Self {
            n,
            eval: Arc::new(f),
            kind: FnKind::Lazy,
            rsupp,
            depth,
            label: label.into(),
            hint,
            sep: None,
            primitive: None,
            breaks: Arc::new([]),
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::lazy(n, (0.0, 0.0), Hint::isotropic(n, 0.0, 1.0), 0, "0", |_, _, _| ZERO)
    }

    /// Attaches a separable-slice description; `sep(r)` must agree with the
    /// evaluator at every r.
    pub fn with_separable<F>(mut self, sep: F) -> Self
    where
        F: Fn(f64) -> SepSlice + Send + Sync + 'static,
    {
        self.sep = Some(Arc::new(sep));
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_hint(mut self, hint: Hint) -> Self {
        self.hint = hint;
        self
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64], r: f64) -> Complex64 {
        if !(r >= self.rsupp.0 && r <= self.rsupp.1) || self.is_zero() {
            return ZERO;
        }
        (self.eval)(x, y, r)
    }

    pub fn eval_checked(&self, x: &[f64], y: &[f64], r: f64) -> Result<Complex64> {
        for v in [x, y] {
            if v.len() != self.n {
                return Err(Error::Shape { expected: self.n, got: v.len() });
            }
        }
        let v = self.eval(x, y, r);
        if !v.is_finite() {
            return Err(Error::Numeric(format!("{} is not finite at r = {r}", self.label)));
        }
        Ok(v)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> FnKind {
        self.kind
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn hint(&self) -> &Hint {
        &self.hint
    }

    /// Exact r-support interval [lo, hi]; empty when lo ≥ hi.
    pub fn rsupp(&self) -> (f64, f64) {
        self.rsupp
    }

    /// Half-width of the smallest symmetric window containing the support.
    pub fn r_support(&self) -> f64 {
        self.rsupp.0.abs().max(self.rsupp.1.abs())
    }

    pub fn is_zero(&self) -> bool {
        self.rsupp.0 >= self.rsupp.1
    }

    pub fn primitive(&self) -> Option<&Primitive> {
        self.primitive.as_deref()
    }

    /// Separable description at fixed r, when available.
    pub fn separable_slice(&self, r: f64) -> Option<SepSlice> {
        let sep = self.sep.as_ref()?;
        if !(r >= self.rsupp.0 && r <= self.rsupp.1) || self.is_zero() {
            let mut s = sep(0.5 * (self.rsupp.0 + self.rsupp.1));
            s.coef = ZERO;
            return Some(s);
        }
        Some(sep(r))
    }

    pub fn is_separable(&self) -> bool {
        self.sep.is_some()
    }

    /// α·f.
    pub fn scale(&self, alpha: Complex64) -> CylFunction {
        let g = self.clone();
        let mut out = CylFunction::lazy(self.n, self.rsupp, self.hint.clone(), self.depth, format!("{alpha}·{}", self.label), move |x, y, r| alpha * g.eval(x, y, r));
        out.breaks = self.breaks.clone();
        if let Some(sep) = self.sep.clone() {
            out.sep = Some(Arc::new(move |r| {
                let mut s = sep(r);
                s.coef *= alpha;
                s
            }));
        }
        out
    }

    /// f + g.
    pub fn add(&self, other: &CylFunction) -> CylFunction {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let (f, g) = (self.clone(), other.clone());
        let rsupp = (self.rsupp.0.min(other.rsupp.0), self.rsupp.1.max(other.rsupp.1));
        let hint = Hint {
            center: self.hint.center.iter().zip(&other.hint.center).map(|(a, b)| 0.5 * (a + b)).collect(),
            width: self.hint.width.iter().zip(&other.hint.width).map(|(a, b)| a.max(*b)).collect(),
        };
        let breaks = merge_breaks(rsupp, &[self, other], true);
        CylFunction::lazy(self.n, rsupp, hint, self.depth.max(other.depth), format!("({} + {})", self.label, other.label), move |x, y, r| f.eval(x, y, r) + g.eval(x, y, r))
            .with_breaks(breaks)
    }

    /// Interior points of the r-support where the function may fail to be
    /// smooth (support edges of summands); r-integrals split there.
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn with_breaks(mut self, breaks: Vec<f64>) -> Self {
        self.breaks = breaks.into();
        self
    }

    /// Pointwise product with a profile m(r).
    pub fn mul_profile<M>(&self, m: M, label: &str) -> CylFunction
    where
        M: Fn(f64) -> f64 + Send + Sync + Clone + 'static,
    {
        let g = self.clone();
        let m2 = m.clone();
        let mut out = CylFunction::lazy(self.n, self.rsupp, self.hint.clone(), self.depth, format!("{label}·{}", self.label), move |x, y, r| g.eval(x, y, r) * m(r));
        out.breaks = self.breaks.clone();
        if let Some(sep) = self.sep.clone() {
            out.sep = Some(Arc::new(move |r| {
                let mut s = sep(r);
                s.coef *= m2(r);
                s
            }));
        }
        out
    }

    /// Copy whose values are cached by exact point; the cache is shared by
    /// all clones of the returned function.
    pub fn memoized(&self) -> CylFunction {
        if self.kind == FnKind::Primitive {
            return self.clone();
        }
        let inner = self.eval.clone();
        let table: Arc<DashMap<SmallVec<[u64; 5]>, Complex64>> = Arc::new(DashMap::new());
        let mut out = self.clone();
        out.eval = Arc::new(move |x: &[f64], y: &[f64], r: f64| {
            let key: SmallVec<[u64; 5]> =
                x.iter().chain(y).chain(std::iter::once(&r)).map(|v| v.to_bits()).collect();
            if let Some(v) = table.get(&key) {
                return *v;
            }
            let v = inner(x, y, r);
            table.insert(key, v);
            v
        });
        out
    }
}

type PointFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

/// Vector in the k-fold tensor power, evaluated on flat coordinates: for
/// each leg x (n values), y (n values), r.
#[derive(Clone)]
pub struct TensorFunction {
    pub legs: usize,
    pub n: usize,
    eval: PointFn,
    pub rsupps: Vec<(f64, f64)>,
    pub hints: Vec<Hint>,
    pub label: String,
    factors: Option<Vec<CylFunction>>,
}

impl fmt::Debug for TensorFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TensorFunction").field("legs", &self.legs).field("label", &self.label).finish()
    }
}

impl TensorFunction {
    pub fn new<F>(legs: usize, n: usize, rsupps: Vec<(f64, f64)>, hints: Vec<Hint>, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    {
        Self { legs, n, eval: Arc::new(f), rsupps, hints, label: label.into(), factors: None }
    }

    /// Elementary tensor f_1 ⊗ … ⊗ f_k.
    pub fn product(factors: &[CylFunction]) -> Self {
        let n = factors[0].n();
        let fs: Vec<CylFunction> = factors.to_vec();
        let fe = fs.clone();
        let label = fs.iter().map(|f| f.label().to_string()).collect::<Vec<_>>().join("⊗");
        let mut t = Self::new(
            fs.len(),
            n,
            fs.iter().map(|f| f.rsupp()).collect(),
            fs.iter().map(|f| f.hint().clone()).collect(),
            label,
            move |p| {
                let stride = 2 * n + 1;
                let mut v = Complex64::new(1.0, 0.0);
                for (i, f) in fe.iter().enumerate() {
                    let c = &p[i * stride..(i + 1) * stride];
                    v *= f.eval(&c[..n], &c[n..2 * n], c[2 * n]);
                    if v == ZERO {
                        break;
                    }
                }
                v
            },
        );
        t.factors = Some(fs);
        t
    }

    #[inline]
    pub fn eval(&self, p: &[f64]) -> Complex64 {
        (self.eval)(p)
    }

    /// Factors when this is an elementary tensor.
    pub fn factors(&self) -> Option<&[CylFunction]> {
        self.factors.as_deref()
    }
}

/// Sorted, deduplicated breakpoints of `fs` strictly inside `supp`; with
/// `edges` the support endpoints of each function count as breakpoints too.
pub fn merge_breaks(supp: (f64, f64), fs: &[&CylFunction], edges: bool) -> Vec<f64> {
    let mut v: Vec<f64> = fs
        .iter()
        .flat_map(|f| {
            let e = if edges { vec![f.rsupp.0, f.rsupp.1] } else { vec![] };
            f.breaks.iter().copied().chain(e)
        })
        .filter(|b| *b > supp.0 + 1e-12 && *b < supp.1 - 1e-12)
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    v
}

/// ∫ f conj(g) dx dy dr.
pub fn inner_product(params: &ModelParams, f: &CylFunction, g: &CylFunction) -> Result<Complex64> {
    inner_product_weighted(params, f, g, |_| 1.0)
}

/// ∫ f conj(g) w(r) dx dy dr.
pub fn inner_product_weighted<W>(params: &ModelParams, f: &CylFunction, g: &CylFunction, w: W) -> Result<Complex64>
where
    W: Fn(f64) -> f64 + Sync + Send,
{
    check_dims(params, f)?;
    check_dims(params, g)?;
    let lo = f.rsupp().0.max(g.rsupp().0);
    let hi = f.rsupp().1.min(g.rsupp().1);
    if hi <= lo || f.is_zero() || g.is_zero() {
        return Ok(ZERO);
    }
    let xy = XyRule::new(params.quad_xy_order, &f.hint().product(g.hint()));
    let breaks = merge_breaks((lo, hi), &[f, g], false);
    let v = quadrature::integrate_r_split(params.quad_r_order, lo, hi, &breaks, |r| {
        xy.integrate(|x, y| f.eval(x, y, r) * g.eval(x, y, r).conj()) * w(r)
    });
    if !v.is_finite() {
        return Err(Error::Numeric(format!("inner product of {} and {} is not finite", f.label(), g.label())));
    }
    Ok(v)
}

pub fn norm_sq(params: &ModelParams, f: &CylFunction) -> Result<f64> {
    Ok(inner_product(params, f, f)?.re)
}

pub(crate) fn check_dims(params: &ModelParams, f: &CylFunction) -> Result<()> {
    if f.n() != params.n {
        return Err(Error::Shape { expected: params.n, got: f.n() });
    }
    Ok(())
}

/// Orthonormal family q_m(r) = (Legendre P_m(r/R) × bump(r/R)) after Gram–Schmidt on [−R, R].
#[derive(Debug, Clone)]
pub struct RFamily {
    pub half_width: f64,
    coeffs: Vec<Vec<f64>>,
}

impl RFamily {
    pub fn new(len: usize, half_width: f64) -> Self {
        let rule = quadrature::legendre_rule(64, -half_width, half_width, 8);
        let raw: Vec<Vec<f64>> = rule
            .nodes
            .iter()
            .map(|&r| {
                let mut p = vec![0.0; len];
                legendre_values(r / half_width, &mut p);
                let c = bump(r / half_width);
                p.iter().map(|v| v * c).collect()
            })
            .collect();
        let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(len);
        let mut vals: Vec<Vec<f64>> = Vec::with_capacity(len);
        for m in 0..len {
            let mut v: Vec<f64> = raw.iter().map(|row| row[m]).collect();
            let mut c = vec![0.0; len];
            c[m] = 1.0;
            // two passes of modified Gram–Schmidt
            for _ in 0..2 {
                for (cq, q) in coeffs.iter().zip(&vals) {
                    let p: f64 = rule.weights.iter().zip(&v).zip(q).map(|((w, a), b)| w * a * b).sum();
                    v.iter_mut().zip(q).for_each(|(a, b)| *a -= p * b);
                    c.iter_mut().zip(cq).for_each(|(a, b)| *a -= p * b);
                }
            }
            let nrm: f64 = rule.weights.iter().zip(&v).map(|(w, a)| w * a * a).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= nrm);
            c.iter_mut().for_each(|a| *a /= nrm);
            coeffs.push(c);
            vals.push(v);
        }
        Self { half_width, coeffs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// q_0(r) .. q_{len−1}(r).
    pub fn values(&self, r: f64, out: &mut [f64]) {
        let u = r / self.half_width;
        let c = bump(u);
        if c == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let mut p: SmallVec<[f64; 32]> = SmallVec::from_elem(0.0, self.len());
        legendre_values(u, &mut p);
        for (o, cm) in out.iter_mut().zip(&self.coeffs) {
            *o = c * cm.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn value(&self, m: usize, r: f64) -> f64 {
        let mut out: SmallVec<[f64; 32]> = SmallVec::from_elem(0.0, self.len());
        self.values(r, &mut out);
        out[m]
    }
}

fn legendre_values(u: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = u;
    }
    for j in 1..out.len().saturating_sub(1) {
        let jf = j as f64;
        out[j + 1] = ((2.0 * jf + 1.0) * u * out[j] - jf * out[j - 1]) / (jf + 1.0);
    }
}

/// Multi-index of a basis element: Hermite indices for x then y, and the r-mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisIndex {
    pub herm: Vec<u32>,
    pub m: usize,
}

/// The first `len` multi-indices of length 2n+1 ordered by total degree.
pub fn basis_indices(n: usize, len: usize) -> Vec<BasisIndex> {
    fn rec(slots: usize, budget: u32, prefix: &mut Vec<u32>, out: &mut Vec<BasisIndex>, len: usize) {
        if out.len() >= len {
            return;
        }
        if slots == 0 {
            out.push(BasisIndex { herm: prefix.clone(), m: budget as usize });
            return;
        }
        for k in 0..=budget {
            prefix.push(k);
            rec(slots - 1, budget - k, prefix, out, len);
            prefix.pop();
            if out.len() >= len {
                return;
            }
        }
    }
    let mut out = Vec::with_capacity(len);
    let mut d = 0;
    while out.len() < len {
        rec(2 * n, d, &mut Vec::new(), &mut out, len);
        d += 1;
    }
    out
}

/// Orthonormal basis: Hermite functions at scale `xy_scale` in every x, y
/// coordinate tensored with the r-family on [−R, R].
#[derive(Clone)]
pub struct Onb {
    pub n: usize,
    pub scale: f64,
    pub indices: Vec<BasisIndex>,
    pub rfamily: Arc<RFamily>,
    pub max_herm: usize,
    elements: Vec<CylFunction>,
}

impl fmt::Debug for Onb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Onb").field("len", &self.indices.len()).field("scale", &self.scale).finish()
    }
}

impl Onb {
    pub fn new(params: &ModelParams, len: usize) -> Self {
        let n = params.n;
        let s = params.xy_scale;
        let indices = basis_indices(n, len);
        let max_m = indices.iter().map(|b| b.m).max().unwrap_or(0);
        let max_herm = indices.iter().flat_map(|b| b.herm.iter()).copied().max().unwrap_or(0) as usize;
        let rfamily = Arc::new(RFamily::new(max_m + 1, params.r_support));
        let r = params.r_support;
        let elements = indices
            .iter()
            .map(|bi| {
                let norm: f64 = bi
                    .herm
                    .iter()
                    .map(|&k| {
                        let fact: f64 = (1..=k).map(f64::from).product();
                        (2f64.powi(k as i32) * fact * std::f64::consts::PI.sqrt() * s).sqrt().recip()
                    })
                    .product();
                let herm = bi.herm.clone();
                let m = bi.m;
                let fam = rfamily.clone();
                let fam2 = rfamily.clone();
                let herm2 = herm.clone();
                let f = CylFunction::lazy(n, (-r, r), Hint::isotropic(n, 0.0, s), 0, format!("e{:?}/{}", bi.herm, bi.m), move |x, y, rr| {
                    let mut v = norm * fam.value(m, rr);
                    for (i, &k) in herm.iter().enumerate() {
                        let c = if i < n { x[i] } else { y[i - n] };
                        v *= Herm1 { k, center: 0.0, width: s }.eval(c);
                    }
                    Complex64::new(v, 0.0)
                });
                f.with_separable(move |rr| SepSlice {
                    coef: Complex64::new(norm * fam2.value(m, rr), 0.0),
                    x: herm2[..n].iter().map(|&k| Herm1 { k, center: 0.0, width: s }).collect(),
                    y: herm2[n..].iter().map(|&k| Herm1 { k, center: 0.0, width: s }).collect(),
                })
            })
            .collect();
        Self { n, scale: s, indices, rfamily, max_herm, elements }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CylFunction] {
        &self.elements
    }

    pub fn get(&self, l: usize) -> &CylFunction {
        &self.elements[l]
    }
}

/// The first `len` basis elements.
pub fn onb(params: &ModelParams, len: usize) -> Vec<CylFunction> {
    Onb::new(params, len).elements
}

/// e_ε: normalized Gaussian of width `eps` in (x, y), equal on the whole
/// r-window [−R, R].
pub fn approx_identity(params: &ModelParams, eps: f64) -> Result<CylFunction> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let min = MIN_EPS_FACTOR * params.xy_scale;
    if eps < min {
        return Err(Error::Resolution { eps, min });
    }
    let n = params.n;
    let amp = (2.0 * std::f64::consts::PI * eps * eps).powi(-(n as i32));
    let r = params.r_support;
    let inv = 1.0 / (2.0 * eps * eps);
    let f = CylFunction::lazy(n, (-r, r), Hint::isotropic(n, 0.0, eps), 0, format!("e_eps({eps:e})"), move |x, y, _| {
        let s: f64 = x.iter().chain(y).map(|v| v * v).sum();
        Complex64::new(amp * (-s * inv).exp(), 0.0)
    });
    Ok(f.with_separable(move |_| SepSlice {
        coef: Complex64::new(amp, 0.0),
        x: (0..n).map(|_| Herm1 { k: 0, center: 0.0, width: eps }).collect(),
        y: (0..n).map(|_| Herm1 { k: 0, center: 0.0, width: eps }).collect(),
    }))
}

/// Default approximate-identity width.
pub fn default_eps(params: &ModelParams) -> f64 {
    0.02 * params.xy_scale
}

/// Largest |f − g| over random points, relative to the largest |g|.
/// Returns (abs, rel, f, g) at the worst point.
pub fn pointwise_residual(params: &ModelParams, f: &CylFunction, g: &CylFunction, samples: usize, salt: u64) -> (f64, f64, Complex64, Complex64) {
    let n = params.n;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed ^ salt);
    let (glo, ghi) = g.rsupp();
    let (lo, hi) = (glo.max(-params.r_support), ghi.min(params.r_support));
    let h = g.hint();
    let mut worst = (0.0, ZERO, ZERO);
    let mut scale = 0.0f64;
    for _ in 0..samples {
        let x: Vec<f64> = (0..n).map(|i| h.center[i] + h.width[i] * rng.gen_range(-1.5..1.5)).collect();
        let y: Vec<f64> = (0..n).map(|i| h.center[n + i] + h.width[n + i] * rng.gen_range(-1.5..1.5)).collect();
        let r = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let (a, b) = (f.eval(&x, &y, r), g.eval(&x, &y, r));
        scale = scale.max(b.norm());
        let d = (a - b).norm();
        if d >= worst.0 {
            worst = (d, a, b);
        }
    }
    let rel = if scale > 0.0 { worst.0 / scale } else { worst.0 };
    (worst.0, rel, worst.1, worst.2)
}
