//! Gauss–Hermite and Gauss–Legendre rules, Gaussian placement hints and
//! tensor-product integration helpers.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use crate::par;
use crate::params::ModelParams;

/// Largest supported rule order.
pub const MAX_ORDER: usize = 256;

/// Number of Gauss–Legendre panels used for r-integrals on a support interval.
pub const R_PANELS: usize = 2;

/// A one-dimensional rule: Σ w_i f(x_i) ≈ ∫ f.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> Complex64>(&self, f: F) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| f(x) * w)
            .sum()
    }
}

/// Raw Gauss–Hermite data: nodes t_i for the weight e^{−t²} and the
/// scaled weights w_i e^{t_i²}.
#[derive(Debug)]
pub struct HermiteData {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub scaled_weights: Vec<f64>,
}

fn hermite_cache() -> &'static Mutex<HashMap<usize, Arc<HermiteData>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<HermiteData>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn legendre_cache() -> &'static Mutex<HashMap<usize, Arc<Rule>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Gauss–Hermite rule of order `n` (nodes ascending), cached.
///
/// Newton iteration runs on Hermite functions ψ_k = p_k e^{−t²/2}, so the
/// scaled weights 1/(n ψ_{n−1}(t)²) keep full relative accuracy at outer nodes.
pub fn gauss_hermite(n: usize) -> Arc<HermiteData> {
    assert!((1..=MAX_ORDER).contains(&n), "Gauss–Hermite order {n} out of range");
    if let Some(d) = hermite_cache().lock().unwrap().get(&n) {
        return d.clone();
    }
    let m = n.div_ceil(2);
    let mut x = vec![0.0; n];
    let mut sw = vec![0.0; n];
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut z: f64 = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut psi_nm1 = 0.0;
        for _ in 0..200 {
            let (pn, pnm1) = hermite_fn_pair(n, z, pim4);
            psi_nm1 = pnm1;
            // p_n' = sqrt(2n) p_{n−1}; the Gaussian factor cancels in the ratio.
            let dz = pn / ((2.0 * nf).sqrt() * pnm1);
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                let (_, p) = hermite_fn_pair(n, z, pim4);
                psi_nm1 = p;
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        let s = 1.0 / (nf * psi_nm1 * psi_nm1);
        sw[i] = s;
        sw[n - 1 - i] = s;
    }
    if n % 2 == 1 {
        x[m - 1] = 0.0;
    }
    // ascending order
    x.reverse();
    sw.reverse();
    let weights = x.iter().zip(&sw).map(|(t, s)| s * (-t * t).exp()).collect();
    let data = Arc::new(HermiteData { nodes: x, weights, scaled_weights: sw });
    hermite_cache().lock().unwrap().insert(n, data.clone());
    data
}

/// (ψ_n(t), ψ_{n−1}(t)) for the normalized Hermite functions.
fn hermite_fn_pair(n: usize, t: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4 * (-0.5 * t * t).exp();
    let mut p2 = 0.0;
    for j in 0..n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = t * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, p2)
}

/// Gauss–Legendre rule of order `n` on [−1, 1] (nodes ascending), cached.
pub fn gauss_legendre(n: usize) -> Arc<Rule> {
    assert!((1..=MAX_ORDER).contains(&n), "Gauss–Legendre order {n} out of range");
    if let Some(r) = legendre_cache().lock().unwrap().get(&n) {
        return r.clone();
    }
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let (p1, d) = legendre_pair(n, z);
            pp = d;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-16 {
                pp = legendre_pair(n, z).1;
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[m - 1] = 0.0;
    }
    let rule = Arc::new(Rule { nodes, weights });
    legendre_cache().lock().unwrap().insert(n, rule.clone());
    rule
}

/// (P_n(z), P_n'(z)).
fn legendre_pair(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 0..n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
    }
    let nf = n as f64;
    (p1, nf * (z * p1 - p2) / (z * z - 1.0))
}

/// Gauss–Hermite rule for ∫_R f(x) dx whose nodes sit on a Gaussian of
/// center `c` and standard deviation `width`.
pub fn hermite_rule(n: usize, c: f64, width: f64) -> Rule {
    let d = gauss_hermite(n);
    let s = SQRT_2 * width;
    Rule {
        nodes: d.nodes.iter().map(|t| c + s * t).collect(),
        weights: d.scaled_weights.iter().map(|w| s * w).collect(),
    }
}

/// Composite Gauss–Legendre on [lo, hi] with `panels` equal panels.
pub fn legendre_rule(n: usize, lo: f64, hi: f64, panels: usize) -> Rule {
    let base = gauss_legendre(n);
    let panels = panels.max(1);
    let h = (hi - lo) / panels as f64;
    let mut nodes = Vec::with_capacity(n * panels);
    let mut weights = Vec::with_capacity(n * panels);
    for p in 0..panels {
        let a = lo + p as f64 * h;
        for (t, w) in base.nodes.iter().zip(&base.weights) {
            nodes.push(a + 0.5 * h * (t + 1.0));
            weights.push(0.5 * h * w);
        }
    }
    Rule { nodes, weights }
}

/// Rule used for every r-integral over a support interval. Empty intervals
/// give an empty rule.
pub fn r_rule(n: usize, lo: f64, hi: f64) -> Rule {
    if hi <= lo {
        return Rule { nodes: vec![], weights: vec![] };
    }
    legendre_rule(n, lo, hi, R_PANELS)
}

/// ∫_{lo}^{hi} f(r) dr with the composite rule of [`r_rule`].
pub fn integrate_r<F>(n: usize, lo: f64, hi: f64, f: F) -> Complex64
where
    F: Fn(f64) -> Complex64 + Sync + Send,
{
    let rule = r_rule(n, lo, hi);
    par::sum(rule.len(), |i| f(rule.nodes[i]) * rule.weights[i])
}

/// [`integrate_r`] on each piece of [lo, hi] cut at the sorted `breaks`.
pub fn integrate_r_split<F>(n: usize, lo: f64, hi: f64, breaks: &[f64], f: F) -> Complex64
where
    F: Fn(f64) -> Complex64 + Sync + Send,
{
    let mut pts = vec![lo];
    pts.extend(breaks.iter().copied().filter(|b| *b > lo && *b < hi));
    pts.push(hi);
    pts.windows(2).map(|w| integrate_r(n, w[0], w[1], &f)).sum()
}

/// Gaussian placement hint for the (x, y) variables: per coordinate a
/// center and a standard deviation, x coordinates first.
#[derive(Debug, Clone, PartialEq)]
pub struct Hint {
    pub center: Vec<f64>,
    pub width: Vec<f64>,
}

impl Hint {
    pub fn new(center: Vec<f64>, width: Vec<f64>) -> Self {
        debug_assert_eq!(center.len(), width.len());
        Self { center, width }
    }

    pub fn isotropic(n: usize, c: f64, w: f64) -> Self {
        Self { center: vec![c; 2 * n], width: vec![w; 2 * n] }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Hint of a product of two Gaussian-like factors.
    pub fn product(&self, other: &Hint) -> Hint {
        let mut center = Vec::with_capacity(self.dim());
        let mut width = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let (a, b) = (self.width[i], other.width[i]);
            let pa = 1.0 / (a * a);
            let pb = 1.0 / (b * b);
            let p = pa + pb;
            center.push((self.center[i] * pa + other.center[i] * pb) / p);
            width.push(p.sqrt().recip());
        }
        Hint { center, width }
    }

    /// Hint of a convolution of two Gaussian-like factors.
    pub fn convolve(&self, other: &Hint) -> Hint {
        Hint {
            center: self.center.iter().zip(&other.center).map(|(a, b)| a + b).collect(),
            width: self.width.iter().zip(&other.width).map(|(a, b)| a.hypot(*b)).collect(),
        }
    }

    /// Hint of z ↦ f(s z + t) when f has this hint.
    pub fn affine_pullback(&self, s: f64, shift: &[f64]) -> Hint {
        Hint {
            center: self.center.iter().zip(shift).map(|(c, t)| (c - t) / s).collect(),
            width: self.width.iter().map(|w| w / s.abs()).collect(),
        }
    }

    pub fn negated(&self) -> Hint {
        Hint { center: self.center.iter().map(|c| -c).collect(), width: self.width.clone() }
    }

    /// Widens every coordinate by a factor.
    pub fn widened(&self, factor: f64) -> Hint {
        Hint { center: self.center.clone(), width: self.width.iter().map(|w| w * factor).collect() }
    }
}

/// Tensor Gauss–Hermite rule in 2n dimensions placed by a hint.
#[derive(Debug, Clone)]
pub struct XyRule {
    pub n: usize,
    pub rules: Vec<Rule>,
    pub order: usize,
}

impl XyRule {
    pub fn new(order: usize, hint: &Hint) -> Self {
        let rules = (0..hint.dim())
            .map(|i| hermite_rule(order, hint.center[i], hint.width[i]))
            .collect();
        Self { n: hint.dim() / 2, rules, order }
    }

    pub fn len(&self) -> usize {
        self.order.pow(self.rules.len() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Coordinates (x then y) and weight of the flat index `idx`.
    #[inline]
    pub fn point(&self, mut idx: usize, buf: &mut [f64]) -> f64 {
        let mut w = 1.0;
        for d in (0..self.rules.len()).rev() {
            let k = idx % self.order;
            idx /= self.order;
            buf[d] = self.rules[d].nodes[k];
            w *= self.rules[d].weights[k];
        }
        w
    }

    /// Σ w f(x, y) over the tensor grid, with deterministic reduction order.
    pub fn integrate<F>(&self, f: F) -> Complex64
    where
        F: Fn(&[f64], &[f64]) -> Complex64 + Sync + Send,
    {
        let n = self.n;
        par::sum(self.len(), |i| {
            let mut buf = [0.0f64; 16];
            let b = &mut buf[..2 * n];
            let w = self.point(i, b);
            let (x, y) = b.split_at(n);
            f(x, y) * w
        })
    }
}

/// ∫ f(x, y) dx dy over R^{2n} with nodes placed by `hint`.
pub fn integrate_xy<F>(order: usize, hint: &Hint, f: F) -> Complex64
where
    F: Fn(&[f64], &[f64]) -> Complex64 + Sync + Send,
{
    XyRule::new(order, hint).integrate(f)
}

/// The reference grid: Gauss–Hermite at scale `xy_scale` per coordinate and
/// Gauss–Legendre on [−R, R].
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub hermite: Rule,
    pub legendre: Rule,
    pub n: usize,
}

impl QuadratureGrid {
    pub fn new(params: &ModelParams) -> Self {
        let r = params.r_support;
        Self {
            hermite: hermite_rule(params.quad_xy_order, 0.0, params.xy_scale),
            legendre: legendre_rule(params.quad_r_order, -r, r, 1),
            n: params.n,
        }
    }

    /// Smallest spacing between neighbouring Hermite nodes.
    pub fn finest_xy_spacing(&self) -> f64 {
        self.hermite
            .nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}
