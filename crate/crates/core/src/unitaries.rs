//! Operators of the form (A ξ)(p) = amplitude(p) · phase(p) · ξ(T p), with
//! ξ conjugated for antilinear operators, and their exact composition.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;

use crate::algebra::{OperatorHandle, Symbol};
use crate::error::{Error, Result};
use crate::funcspace::{CylFunction, Herm1, SepSlice, TensorFunction};
use crate::kernels::{beta, e_fwd, ebar, eta};
use crate::params::ModelParams;
use crate::quadrature::{self, Hint, XyRule};
use crate::report::{CheckReport, Metric};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

type Buf = SmallVec<[f64; 24]>;
type MapFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type CoefFn = dyn Fn(&[f64]) -> (f64, Complex64) + Send + Sync;

/// Which closed-form family an operator belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    UA,
    UAHat,
    Other,
}

#[derive(Clone)]
pub struct PointPhaseOp {
    pub legs: usize,
    pub n: usize,
    pub antilinear: bool,
    pub kind: OpKind,
    pub label: String,
    fwd: Arc<MapFn>,
    inv: Arc<MapFn>,
    coef: Arc<CoefFn>,
}

impl fmt::Debug for PointPhaseOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointPhaseOp")
            .field("label", &self.label)
            .field("legs", &self.legs)
            .field("antilinear", &self.antilinear)
            .finish()
    }
}

/// Result of evaluating an operator's structure at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointImage {
    pub point: Vec<f64>,
    pub amplitude: f64,
    pub phase: Complex64,
}

impl PointImage {
    pub fn coefficient(&self) -> Complex64 {
        self.phase * self.amplitude
    }
}

impl PointPhaseOp {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F, I, C>(legs: usize, n: usize, antilinear: bool, label: impl Into<String>, fwd: F, inv: I, coef: C) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        I: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        C: Fn(&[f64]) -> (f64, Complex64) + Send + Sync + 'static,
    {
        Self {
            legs,
            n,
            antilinear,
            kind: OpKind::Other,
            label: label.into(),
            fwd: Arc::new(fwd),
            inv: Arc::new(inv),
            coef: Arc::new(coef),
        }
    }

    fn with_kind(mut self, kind: OpKind) -> Self {
        self.kind = kind;
        self
    }

    /// Number of coordinates of a point.
    pub fn dim(&self) -> usize {
        self.legs * (2 * self.n + 1)
    }

    pub fn identity(legs: usize, n: usize) -> Self {
        Self::new(legs, n, false, "1", |p, q| q.copy_from_slice(p), |p, q| q.copy_from_slice(p), |_| (1.0, Complex64::new(1.0, 0.0)))
    }

    #[inline]
    pub fn map(&self, p: &[f64], out: &mut [f64]) {
        (self.fwd)(p, out)
    }

    #[inline]
    pub fn inverse_map(&self, p: &[f64], out: &mut [f64]) {
        (self.inv)(p, out)
    }

    /// (amplitude, phase) at p.
    #[inline]
    pub fn coef_parts(&self, p: &[f64]) -> (f64, Complex64) {
        (self.coef)(p)
    }

    pub fn image(&self, p: &[f64]) -> PointImage {
        let mut q = vec![0.0; p.len()];
        self.map(p, &mut q);
        let (amplitude, phase) = self.coef_parts(p);
        PointImage { point: q, amplitude, phase }
    }

    /// self ∘ other.
    pub fn compose(&self, other: &PointPhaseOp) -> PointPhaseOp {
        assert_eq!(self.legs, other.legs, "leg count mismatch in composition");
        let (a, b) = (self.clone(), other.clone());
        let (a2, b2) = (self.clone(), other.clone());
        let (a3, b3) = (self.clone(), other.clone());
        Self::new(
            self.legs,
            self.n,
            self.antilinear ^ other.antilinear,
            format!("{}·{}", self.label, other.label),
            move |p, out| {
                let mut t: Buf = SmallVec::from_elem(0.0, p.len());
                a.map(p, &mut t);
                b.map(&t, out);
            },
            move |q, out| {
                let mut t: Buf = SmallVec::from_elem(0.0, q.len());
                b2.inverse_map(q, &mut t);
                a2.inverse_map(&t, out);
            },
            move |p| {
                let mut t: Buf = SmallVec::from_elem(0.0, p.len());
                a3.map(p, &mut t);
                let (amp_a, ph_a) = a3.coef_parts(p);
                let (amp_b, ph_b) = b3.coef_parts(&t);
                let ph_b = if a3.antilinear { ph_b.conj() } else { ph_b };
                (amp_a * amp_b, ph_a * ph_b)
            },
        )
    }

    /// Inverse operator; equals the adjoint for unitaries.
    pub fn inverse(&self) -> PointPhaseOp {
        let a = self.clone();
        let (f, i) = (self.fwd.clone(), self.inv.clone());
        Self::new(
            self.legs,
            self.n,
            self.antilinear,
            format!("{}⁻¹", self.label),
            move |p, out| i(p, out),
            move |p, out| f(p, out),
            move |q| {
                let mut p: Buf = SmallVec::from_elem(0.0, q.len());
                a.inverse_map(q, &mut p);
                let (amp, ph) = a.coef_parts(&p);
                (1.0 / amp, if a.antilinear { ph } else { ph.conj() })
            },
        )
    }

    pub fn adjoint(&self) -> PointPhaseOp {
        let mut out = self.inverse();
        out.label = format!("{}*", self.label);
        out
    }

    /// Applies the operator to a vector given pointwise.
    #[inline]
    pub fn apply_at<F: Fn(&[f64]) -> Complex64>(&self, p: &[f64], v: F) -> Complex64 {
        let mut q: Buf = SmallVec::from_elem(0.0, p.len());
        self.map(p, &mut q);
        let val = v(&q);
        if val == ZERO {
            return ZERO;
        }
        let (amp, ph) = self.coef_parts(p);
        let val = if self.antilinear { val.conj() } else { val };
        val * ph * amp
    }

    /// r-support of the image of a function with the given per-leg
    /// r-supports, assuming the r-part of the inverse map is affine in the
    /// r-coordinates alone.
    fn image_rsupps(&self, rsupps: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let d = 2 * self.n + 1;
        let mut lo = vec![f64::INFINITY; self.legs];
        let mut hi = vec![f64::NEG_INFINITY; self.legs];
        // The image is supported where T p lies in the support box, i.e.
        // p ∈ T⁻¹(box); scan the corners of the box.
        for corner in 0..(1usize << self.legs) {
            let mut q = vec![0.0; self.dim()];
            for (l, s) in rsupps.iter().enumerate() {
                q[l * d + 2 * self.n] = if corner >> l & 1 == 1 { s.1 } else { s.0 };
            }
            let mut p = vec![0.0; self.dim()];
            self.inverse_map(&q, &mut p);
            for l in 0..self.legs {
                let r = p[l * d + 2 * self.n];
                lo[l] = lo[l].min(r);
                hi[l] = hi[l].max(r);
            }
        }
        lo.into_iter().zip(hi).collect()
    }

    /// Applies a one-leg operator to a function.
    pub fn apply_cyl(&self, f: &CylFunction) -> Result<CylFunction> {
        if self.legs != 1 {
            return Err(Error::Domain(format!("{} acts on {} legs, not 1", self.label, self.legs)));
        }
        if f.n() != self.n {
            return Err(Error::Shape { expected: self.n, got: f.n() });
        }
        if f.is_zero() {
            return Ok(f.clone());
        }
        let n = self.n;
        let rsupp = self.image_rsupps(&[f.rsupp()])[0];
        let hint = self.pullback_hint(f.hint(), 0.5 * (rsupp.0 + rsupp.1));
        let op = self.clone();
        let g = f.clone();
        let label = format!("{}({})", self.label, f.label());
        Ok(CylFunction::lazy(n, rsupp, hint, f.depth(), label, move |x, y, r| {
            let mut p: Buf = SmallVec::new();
            p.extend_from_slice(x);
            p.extend_from_slice(y);
            p.push(r);
            op.apply_at(&p, |q| g.eval(&q[..n], &q[n..2 * n], q[2 * n]))
        }))
    }

    /// Hint for ξ ∘ T (one leg) from the hint of ξ, using the affine
    /// dependence of T on each coordinate at the given r.
    fn pullback_hint(&self, h: &Hint, r: f64) -> Hint {
        let n = self.n;
        let mut base = vec![0.0; 2 * n + 1];
        base[2 * n] = r;
        let mut q0 = vec![0.0; 2 * n + 1];
        self.map(&base, &mut q0);
        let mut center = Vec::with_capacity(2 * n);
        let mut width = Vec::with_capacity(2 * n);
        for i in 0..2 * n {
            let mut p = base.clone();
            p[i] = 1.0;
            let mut q = vec![0.0; 2 * n + 1];
            self.map(&p, &mut q);
            let slope = q[i] - q0[i];
            if slope.abs() < 1e-300 {
                center.push(h.center[i]);
                width.push(h.width[i]);
            } else {
                center.push((h.center[i] - q0[i]) / slope);
                width.push(h.width[i] / slope.abs());
            }
        }
        Hint { center, width }
    }

    /// Applies the operator to a tensor vector.
    pub fn apply_tensor(&self, v: &TensorFunction) -> Result<TensorFunction> {
        if v.legs != self.legs || v.n != self.n {
            return Err(Error::Shape { expected: self.legs, got: v.legs });
        }
        let op = self.clone();
        let w = v.clone();
        let rsupps = self.image_rsupps(&v.rsupps);
        Ok(TensorFunction::new(self.legs, self.n, rsupps, v.hints.clone(), format!("{}({})", self.label, v.label), move |p| {
            op.apply_at(p, |q| w.eval(q))
        }))
    }

    /// As an operator on one-leg functions.
    pub fn as_handle(&self) -> Result<OperatorHandle> {
        if self.legs != 1 {
            return Err(Error::Domain("only one-leg operators act on CylFunction".into()));
        }
        let (a, b) = (self.clone(), self.adjoint());
        Ok(OperatorHandle::new(self.label.clone(), move |v| a.apply_cyl(v), move |v| b.apply_cyl(v)))
    }

    /// |det DT(p)| by central finite differences with relative step `h`.
    pub fn jacobian_det(&self, p: &[f64], h: f64) -> f64 {
        let d = p.len();
        let mut m = DMatrix::<f64>::zeros(d, d);
        let mut qp = vec![0.0; d];
        let mut qm = vec![0.0; d];
        for j in 0..d {
            let step = h * p[j].abs().max(1.0);
            let mut pp = p.to_vec();
            let mut pm = p.to_vec();
            pp[j] += step;
            pm[j] -= step;
            self.map(&pp, &mut qp);
            self.map(&pm, &mut qm);
            for i in 0..d {
                m[(i, j)] = (qp[i] - qm[i]) / (2.0 * step);
            }
        }
        m.determinant().abs()
    }
}

fn split(p: &[f64], n: usize) -> (&[f64], &[f64], f64) {
    (&p[..n], &p[n..2 * n], p[2 * n])
}

/// U_A: coefficient e^{−λr'n} ē[η(r') β(e^{−λr'}x, y' − e^{−λr'}y)], map
/// (e^{−λr'}x, e^{−λr'}y, r + r', x' − e^{−λr'}x, y' − e^{−λr'}y, r').
pub fn build_ua(params: &ModelParams) -> PointPhaseOp {
    let n = params.n;
    let l = params.lambda;
    let d = 2 * n + 1;
    PointPhaseOp::new(
        2,
        n,
        false,
        "U",
        move |p, q| {
            let r = p[2 * n];
            let rp = p[d + 2 * n];
            let s = (-l * rp).exp();
            for i in 0..2 * n {
                q[i] = s * p[i];
                q[d + i] = p[d + i] - s * p[i];
            }
            q[2 * n] = r + rp;
            q[d + 2 * n] = rp;
        },
        move |q, p| {
            let rp = q[d + 2 * n];
            let s = (-l * rp).exp();
            for i in 0..2 * n {
                p[i] = q[i] / s;
                p[d + i] = q[d + i] + q[i];
            }
            p[2 * n] = q[2 * n] - rp;
            p[d + 2 * n] = rp;
        },
        move |p| {
            let (x, y, _) = split(p, n);
            let (_, yp, rp) = split(&p[d..], n);
            let s = (-l * rp).exp();
            let mut arg = 0.0;
            for i in 0..n {
                arg += s * x[i] * (yp[i] - s * y[i]);
            }
            (s.powi(n as i32), ebar(eta(l, rp) * arg))
        },
    )
    .with_kind(OpKind::UA)
}

/// Û_A in closed form: coefficient e[η(r) β(c x', y)], map
/// (x + c x', y + c y', r, x', y', r' − r), c = e^{λ(r' − r)}.
pub fn build_ua_hat(params: &ModelParams) -> PointPhaseOp {
    let n = params.n;
    let l = params.lambda;
    let d = 2 * n + 1;
    PointPhaseOp::new(
        2,
        n,
        false,
        "Û",
        move |p, q| {
            let r = p[2 * n];
            let rp = p[d + 2 * n];
            let c = (l * (rp - r)).exp();
            for i in 0..2 * n {
                q[i] = p[i] + c * p[d + i];
                q[d + i] = p[d + i];
            }
            q[2 * n] = r;
            q[d + 2 * n] = rp - r;
        },
        move |q, p| {
            let r = q[2 * n];
            let rp = q[d + 2 * n] + r;
            let c = (l * (rp - r)).exp();
            for i in 0..2 * n {
                p[d + i] = q[d + i];
                p[i] = q[i] - c * q[d + i];
            }
            p[2 * n] = r;
            p[d + 2 * n] = rp;
        },
        move |p| {
            let (_, y, r) = split(p, n);
            let (xp, _, rp) = split(&p[d..], n);
            let c = (l * (rp - r)).exp();
            let arg: f64 = (0..n).map(|i| c * xp[i] * y[i]).sum();
            (1.0, e_fwd(eta(l, r) * arg))
        },
    )
    .with_kind(OpKind::UAHat)
}

/// j: coefficient e^{λrn} ē[η(r) β(x, y)], map (−e^{λr}x, −e^{λr}y, −r).
pub fn build_j(params: &ModelParams) -> PointPhaseOp {
    let n = params.n;
    let l = params.lambda;
    PointPhaseOp::new(
        1,
        n,
        false,
        "j",
        move |p, q| {
            let r = p[2 * n];
            let s = (l * r).exp();
            for i in 0..2 * n {
                q[i] = -s * p[i];
            }
            q[2 * n] = -r;
        },
        move |q, p| {
            let r = -q[2 * n];
            let s = (l * r).exp();
            for i in 0..2 * n {
                p[i] = -q[i] / s;
            }
            p[2 * n] = r;
        },
        move |p| {
            let (x, y, r) = split(p, n);
            ((l * r * n as f64).exp(), ebar(eta(l, r) * beta(x, y)))
        },
    )
}

/// Ĵ (antilinear): Ĵξ(x, y, r) = e^{λrn} conj ξ(e^{λr}x, e^{λr}y, −r).
pub fn build_jhat(params: &ModelParams) -> PointPhaseOp {
    let n = params.n;
    let l = params.lambda;
    PointPhaseOp::new(
        1,
        n,
        true,
        "Ĵ",
        move |p, q| {
            let r = p[2 * n];
            let s = (l * r).exp();
            for i in 0..2 * n {
                q[i] = s * p[i];
            }
            q[2 * n] = -r;
        },
        move |q, p| {
            let r = -q[2 * n];
            let s = (l * r).exp();
            for i in 0..2 * n {
                p[i] = q[i] / s;
            }
            p[2 * n] = r;
        },
        move |p| ((l * p[2 * n] * n as f64).exp(), Complex64::new(1.0, 0.0)),
    )
}

/// J (antilinear): Jξ(x, y, r) = ē[η(r) β(x, y)] conj ξ(−x, −y, r), the closure of f ↦ f*.
pub fn build_j_star(params: &ModelParams) -> PointPhaseOp {
    let n = params.n;
    let l = params.lambda;
    let neg = move |p: &[f64], q: &mut [f64]| {
        for i in 0..2 * n {
            q[i] = -p[i];
        }
        q[2 * n] = p[2 * n];
    };
    PointPhaseOp::new(1, n, true, "J", neg, neg, move |p| {
        let (x, y, r) = split(p, n);
        (1.0, ebar(eta(l, r) * beta(x, y)))
    })
}

/// Σ: the flip of two legs.
pub fn build_flip(params: &ModelParams) -> PointPhaseOp {
    let n = params.n;
    let d = 2 * n + 1;
    let swap = move |p: &[f64], q: &mut [f64]| {
        q[..d].copy_from_slice(&p[d..2 * d]);
        q[d..2 * d].copy_from_slice(&p[..d]);
    };
    PointPhaseOp::new(2, n, false, "Σ", swap, swap, |_| (1.0, Complex64::new(1.0, 0.0)))
}

/// Multiplication by a positive profile m(r) on one leg (not unitary).
pub fn build_multiplier<M>(params: &ModelParams, label: &str, m: M) -> PointPhaseOp
where
    M: Fn(f64) -> f64 + Send + Sync + 'static,
{
    let n = params.n;
    let id = |p: &[f64], q: &mut [f64]| q.copy_from_slice(p);
    PointPhaseOp::new(1, n, false, label, id, id, move |p| (m(p[2 * n]), Complex64::new(1.0, 0.0)))
}

/// Embeds an operator acting on `op.legs` legs into `total` legs, acting on
/// `legs` (in order) and as the identity elsewhere.
pub fn embed(op: &PointPhaseOp, legs: &[usize], total: usize) -> Result<PointPhaseOp> {
    if legs.len() != op.legs || legs.iter().any(|&l| l >= total) {
        return Err(Error::Domain(format!("invalid leg selection {legs:?} for {} of {} legs", op.label, total)));
    }
    for (i, a) in legs.iter().enumerate() {
        if legs[i + 1..].contains(a) {
            return Err(Error::Domain(format!("repeated leg in {legs:?}")));
        }
    }
    let d = 2 * op.n + 1;
    let sel: Arc<Vec<usize>> = Arc::new(legs.to_vec());
    let gather = {
        let sel = sel.clone();
        move |p: &[f64]| -> Buf {
            let mut b: Buf = SmallVec::new();
            for &l in sel.iter() {
                b.extend_from_slice(&p[l * d..(l + 1) * d]);
            }
            b
        }
    };
    let scatter = {
        let sel = sel.clone();
        move |b: &[f64], out: &mut [f64]| {
            for (k, &l) in sel.iter().enumerate() {
                out[l * d..(l + 1) * d].copy_from_slice(&b[k * d..(k + 1) * d]);
            }
        }
    };
    let (o1, o2, o3) = (op.clone(), op.clone(), op.clone());
    let (g1, g2, g3) = (gather.clone(), gather.clone(), gather);
    let (s1, s2) = (scatter.clone(), scatter);
    let name = legs.iter().map(|l| (l + 1).to_string()).collect::<String>();
    Ok(PointPhaseOp::new(
        total,
        op.n,
        op.antilinear,
        format!("{}_{name}", op.label),
        move |p, out| {
            out.copy_from_slice(p);
            let b = g1(p);
            let mut t: Buf = SmallVec::from_elem(0.0, b.len());
            o1.map(&b, &mut t);
            s1(&t, out);
        },
        move |q, out| {
            out.copy_from_slice(q);
            let b = g2(q);
            let mut t: Buf = SmallVec::from_elem(0.0, b.len());
            o2.inverse_map(&b, &mut t);
            s2(&t, out);
        },
        move |p| o3.coef_parts(&g3(p)),
    ))
}

/// Leg embedding of a two-leg operator into three legs: "12", "13" or "23".
pub fn leg_embed(op: &PointPhaseOp, legs: &str, total: usize) -> Result<PointPhaseOp> {
    if op.legs != 2 {
        return Err(Error::Domain(format!("{} has {} legs, expected 2", op.label, op.legs)));
    }
    let sel = match legs {
        "12" => [0, 1],
        "13" => [0, 2],
        "23" => [1, 2],
        other => return Err(Error::Domain(format!("invalid leg pair `{other}`"))),
    };
    embed(op, &sel, total)
}

/// Σ(j⊗1)U(j⊗1)Σ built by composition.
pub fn ua_hat_by_composition(params: &ModelParams) -> Result<PointPhaseOp> {
    let s = build_flip(params);
    let j1 = embed(&build_j(params), &[0], 2)?;
    let u = build_ua(params);
    Ok(s.compose(&j1).compose(&u).compose(&j1).compose(&s))
}

/// Random point with x, y ~ U(−2s, 2s) and r ~ U(−R, R) on every leg.
pub fn random_point<R: Rng + ?Sized>(params: &ModelParams, legs: usize, rng: &mut R) -> Vec<f64> {
    let n = params.n;
    let s = 2.0 * params.xy_scale;
    let mut p = Vec::with_capacity(legs * (2 * n + 1));
    for _ in 0..legs {
        for _ in 0..2 * n {
            p.push(rng.gen_range(-s..s));
        }
        p.push(rng.gen_range(-params.r_support..params.r_support));
    }
    p
}

/// Largest pointwise difference of two operators (maps, coefficients and
/// linearity) over random points. Returns (residual, lhs coef, rhs coef) at the worst point.
pub fn op_difference(params: &ModelParams, a: &PointPhaseOp, b: &PointPhaseOp, samples: usize, salt: u64) -> (f64, Complex64, Complex64) {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ salt);
    let mut worst = (0.0, Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
    if a.antilinear != b.antilinear || a.legs != b.legs {
        return (f64::INFINITY, worst.1, worst.2);
    }
    for _ in 0..samples {
        let p = random_point(params, a.legs, &mut rng);
        let ia = a.image(&p);
        let ib = b.image(&p);
        let dmap = ia.point.iter().zip(&ib.point).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        let (ca, cb) = (ia.coefficient(), ib.coefficient());
        let res = dmap.max((ca - cb).norm());
        if res >= worst.0 {
            worst = (res, ca, cb);
        }
    }
    worst
}

/// U₁₂U₁₃U₂₃ = U₂₃U₁₂ at random points.
pub fn pentagon_check(params: &ModelParams, u: &PointPhaseOp, samples: usize) -> Result<CheckReport> {
    let start = Instant::now();
    let u12 = leg_embed(u, "12", 3)?;
    let u13 = leg_embed(u, "13", 3)?;
    let u23 = leg_embed(u, "23", 3)?;
    let lhs = u12.compose(&u13).compose(&u23);
    let rhs = u23.compose(&u12);
    let (res, a, b) = op_difference(params, &lhs, &rhs, samples, 0x70656e74);
    let rep = CheckReport::from_residual(format!("pentagon[{}]", u.label), params, a, b, res, res, params.tol_exact, Metric::Absolute);
    Ok(rep.with_runtime(start).note(format!("{samples} random points")))
}

/// amplitude² / |det DT| = 1 at random points.
pub fn unitarity_check(params: &ModelParams, op: &PointPhaseOp, samples: usize) -> CheckReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x756e6974);
    let mut worst = (0.0f64, 1.0f64, 1.0f64);
    for _ in 0..samples {
        let p = random_point(params, op.legs, &mut rng);
        let (amp, ph) = op.coef_parts(&p);
        let det = op.jacobian_det(&p, 1e-5);
        let ratio = amp * amp / det;
        let res = (ratio - 1.0).abs().max((ph.norm() - 1.0).abs());
        if res >= worst.0 {
            worst = (res, amp * amp, det);
        }
    }
    CheckReport::from_residual(
        format!("unitarity[{}]", op.label),
        params,
        Complex64::new(worst.1, 0.0),
        Complex64::new(worst.2, 0.0),
        worst.0,
        worst.0,
        1e-8,
        Metric::Absolute,
    )
    .with_runtime(start)
}

/// j² = Ĵ² = J² = 1 and j = ĴJ = JĴ at random points.
pub fn involution_checks(params: &ModelParams, samples: usize) -> Vec<CheckReport> {
    let j = build_j(params);
    let jh = build_jhat(params);
    let js = build_j_star(params);
    let id = PointPhaseOp::identity(1, params.n);
    let cases = [
        ("j^2=1", j.compose(&j), id.clone()),
        ("Jhat^2=1", jh.compose(&jh), id.clone()),
        ("J^2=1", js.compose(&js), id),
        ("j=JhatJ", jh.compose(&js), j.clone()),
        ("j=JJhat", js.compose(&jh), j),
    ];
    cases
        .iter()
        .enumerate()
        .map(|(k, (name, a, b))| {
            let start = Instant::now();
            let (res, ca, cb) = op_difference(params, a, b, samples, 0x696e76 + k as u64);
            CheckReport::from_residual(*name, params, ca, cb, res, res, params.tol_exact, Metric::Absolute).with_runtime(start)
        })
        .collect()
}

/// One factor of a slice integrand: a function evaluated on one leg of T p.
struct Factor<'a> {
    leg: usize,
    f: &'a CylFunction,
}

/// ∫ dp_k c(p) Π_factors f(T p|leg) · conj η(p_k), the other legs of p fixed
/// to `fixed`. Used for both slice maps.
fn slice_integral(params: &ModelParams, op: &PointPhaseOp, leg: usize, fixed: &[f64], factors: &[Factor<'_>], eta_fn: &CylFunction) -> Complex64 {
    let n = params.n;
    let d = 2 * n + 1;
    let legs = op.legs;
    let mut p0 = vec![0.0; legs * d];
    let mut k = 0;
    for l in 0..legs {
        if l != leg {
            p0[l * d..(l + 1) * d].copy_from_slice(&fixed[k * d..(k + 1) * d]);
            k += 1;
        }
    }
    // r-range: η's support intersected with each factor's support pulled back
    let (mut lo, mut hi) = eta_fn.rsupp();
    let image_r = |r: f64, out_leg: usize| {
        let mut p = p0.clone();
        p[leg * d + 2 * n] = r;
        let mut q = vec![0.0; p.len()];
        op.map(&p, &mut q);
        q[out_leg * d + 2 * n]
    };
    for fac in factors {
        let (a, b) = fac.f.rsupp();
        let o = image_r(0.0, fac.leg);
        let s = image_r(1.0, fac.leg) - o;
        if s.abs() < 1e-12 {
            if !(o >= a && o <= b) {
                return ZERO;
            }
        } else {
            let (u, v) = ((a - o) / s, (b - o) / s);
            lo = lo.max(u.min(v));
            hi = hi.min(u.max(v));
        }
    }
    if hi <= lo {
        return ZERO;
    }
    let rule = quadrature::r_rule(params.quad_r_order, lo, hi);
    let mut total = ZERO;
    for (&r, &wr) in rule.nodes.iter().zip(&rule.weights) {
        let mut base = p0.clone();
        base[leg * d + 2 * n] = r;
        // hint: product of η's hint and each factor's hint pulled back
        let mut q0 = vec![0.0; base.len()];
        op.map(&base, &mut q0);
        let mut hint = eta_fn.hint().clone();
        for fac in factors {
            let fh = fac.f.hint();
            let mut center = Vec::with_capacity(2 * n);
            let mut width = Vec::with_capacity(2 * n);
            let mut any = false;
            for i in 0..2 * n {
                let mut p = base.clone();
                p[leg * d + i] += 1.0;
                let mut q = vec![0.0; p.len()];
                op.map(&p, &mut q);
                let slope = q[fac.leg * d + i] - q0[fac.leg * d + i];
                if slope.abs() > 1e-12 {
                    any = true;
                    center.push((fh.center[i] - q0[fac.leg * d + i]) / slope);
                    width.push(fh.width[i] / slope.abs());
                } else {
                    center.push(hint.center[i]);
                    width.push(1e6);
                }
            }
            if any {
                hint = hint.product(&Hint { center, width });
            }
        }
        let xy = XyRule::new(params.quad_xy_order, &hint);
        let v = xy.integrate(|x, y| {
            let mut p = base.clone();
            p[leg * d..leg * d + n].copy_from_slice(x);
            p[leg * d + n..leg * d + 2 * n].copy_from_slice(y);
            let e = eta_fn.eval(x, y, r);
            if e == ZERO {
                return ZERO;
            }
            let val = op.apply_at(&p, |q| {
                let mut v = Complex64::new(1.0, 0.0);
                for fac in factors {
                    let c = &q[fac.leg * d..(fac.leg + 1) * d];
                    v *= fac.f.eval(&c[..n], &c[n..2 * n], c[2 * n]);
                    if v == ZERO {
                        break;
                    }
                }
                v
            });
            val * e.conj()
        });
        total += v * wr;
    }
    total
}

/// Black-box (ω_{ξ,η} ⊗ id)(U) as an operator, by quadrature over the first leg.
pub fn slice_first_op(params: &ModelParams, u: &PointPhaseOp, xi: &CylFunction, eta_v: &CylFunction) -> Result<OperatorHandle> {
    slice_op(params, u, xi, eta_v, 0)
}

/// Black-box (id ⊗ ω_{ξ,η})(U) as an operator, by quadrature over the second leg.
pub fn slice_second_op(params: &ModelParams, u: &PointPhaseOp, xi: &CylFunction, eta_v: &CylFunction) -> Result<OperatorHandle> {
    slice_op(params, u, xi, eta_v, 1)
}

fn slice_op(params: &ModelParams, u: &PointPhaseOp, xi: &CylFunction, eta_v: &CylFunction, leg: usize) -> Result<OperatorHandle> {
    if u.legs != 2 || u.antilinear {
        return Err(Error::Domain(format!("slices need a linear two-leg operator, got {}", u.label)));
    }
    let make = |op: PointPhaseOp, a: CylFunction, b: CylFunction| {
        let p = params.clone();
        move |zeta: &CylFunction| -> Result<CylFunction> {
            let n = p.n;
            let other = 1 - leg;
            let (op, a, b, zeta2) = (op.clone(), a.clone(), b.clone(), zeta.clone());
            let p2 = p.clone();
            let r = p.r_support + a.r_support() + zeta.r_support();
            let hint = zeta.hint().clone();
            Ok(CylFunction::lazy(n, (-r, r), hint, zeta.depth() + 1, format!("slice({})", zeta.label()), move |x, y, rr| {
                let mut fixed = x.to_vec();
                fixed.extend_from_slice(y);
                fixed.push(rr);
                let factors = if leg == 0 {
                    [Factor { leg: 0, f: &a }, Factor { leg: other, f: &zeta2 }]
                } else {
                    [Factor { leg: other, f: &zeta2 }, Factor { leg: 1, f: &a }]
                };
                slice_integral(&p2, &op, leg, &fixed, &factors, &b)
            })
            .memoized())
        }
    };
    // ⟨(ω⊗id)(U) ζ, ζ'⟩ = ⟨U(ξ⊗ζ), η⊗ζ'⟩, so the adjoint is the same slice of U* with ξ and η swapped.
    let action = make(u.clone(), xi.clone(), eta_v.clone());
    let adjoint = make(u.adjoint(), eta_v.clone(), xi.clone());
    let label = format!("slice{}[{}]({},{})", leg + 1, u.label, xi.label(), eta_v.label());
    Ok(OperatorHandle::new(label, action, adjoint))
}

/// Closed-form symbol f of (ω_{ξ,η} ⊗ id)(U_A) = L_f:
/// f(x, y, r) = ∫ ξ(x, y, r̃ + r) e^{λrn} conj η(e^{λr}x, e^{λr}y, r̃) dr̃.
pub fn slice_first_symbol(params: &ModelParams, xi: &CylFunction, eta_v: &CylFunction) -> CylFunction {
    let n = params.n;
    if xi.is_zero() || eta_v.is_zero() {
        return CylFunction::zero(n);
    }
    let l = params.lambda;
    let (xl, xh) = xi.rsupp();
    let (el, eh) = eta_v.rsupp();
    let rsupp = (xl - eh, xh - el);
    let mid = 0.5 * (rsupp.0 + rsupp.1);
    let s = (l * mid).exp();
    let hint = xi.hint().product(&eta_v.hint().affine_pullback(s, &vec![0.0; 2 * n]));
    let (a, b) = (xi.clone(), eta_v.clone());
    let order = params.quad_r_order;
    let depth = xi.depth().max(eta_v.depth()) + 1;
    CylFunction::lazy(n, rsupp, hint, depth, format!("sym1({},{})", xi.label(), eta_v.label()), move |x, y, r| {
        let s = (l * r).exp();
        let mut xs = [0.0f64; 8];
        let mut ys = [0.0f64; 8];
        for i in 0..n {
            xs[i] = s * x[i];
            ys[i] = s * y[i];
        }
        let lo = el.max(xl - r);
        let hi = eh.min(xh - r);
        let amp = (l * r * n as f64).exp();
        quadrature::r_rule(order, lo, hi).integrate(|rt| a.eval(x, y, rt + r) * b.eval(&xs[..n], &ys[..n], rt).conj()) * amp
    })
}

/// Closed-form symbol g of (ω_{ξ,η} ⊗ id)(U_A*) = L_g:
/// g(x, y, r) = ∫ e^{λrn} ξ(−e^{λr}x, −e^{λr}y, r̃ − r) conj η(−x, −y, r̃) ē[η(r) β(x, y)] dr̃.
pub fn slice_first_symbol_adjoint(params: &ModelParams, xi: &CylFunction, eta_v: &CylFunction) -> CylFunction {
    let n = params.n;
    if xi.is_zero() || eta_v.is_zero() {
        return CylFunction::zero(n);
    }
    let l = params.lambda;
    let (xl, xh) = xi.rsupp();
    let (el, eh) = eta_v.rsupp();
    let rsupp = (el - xh, eh - xl);
    let mid = 0.5 * (rsupp.0 + rsupp.1);
    let s = (l * mid).exp();
    let hint = eta_v.hint().negated().product(&xi.hint().affine_pullback(-s, &vec![0.0; 2 * n]));
    let (a, b) = (xi.clone(), eta_v.clone());
    let order = params.quad_r_order;
    let depth = xi.depth().max(eta_v.depth()) + 1;
    CylFunction::lazy(n, rsupp, hint, depth, format!("sym1*({},{})", xi.label(), eta_v.label()), move |x, y, r| {
        let s = (l * r).exp();
        let mut xs = [0.0f64; 8];
        let mut ys = [0.0f64; 8];
        let mut xm = [0.0f64; 8];
        let mut ym = [0.0f64; 8];
        for i in 0..n {
            xs[i] = -s * x[i];
            ys[i] = -s * y[i];
            xm[i] = -x[i];
            ym[i] = -y[i];
        }
        let lo = el.max(xl + r);
        let hi = eh.min(xh + r);
        let pre = ebar(eta(l, r) * beta(x, y)) * (l * r * n as f64).exp();
        quadrature::r_rule(order, lo, hi).integrate(|rt| a.eval(&xs[..n], &ys[..n], rt - r) * b.eval(&xm[..n], &ym[..n], rt).conj()) * pre
    })
}

/// Closed-form symbol f of (id ⊗ ω_{ξ,η})(U_A) = ρ_f:
/// f(x, y, r̃) = ∫ ē[η(r̃) β(x, y − e^{−λr̃}ỹ)] ξ(x̃ − e^{λr̃}x, ỹ − e^{λr̃}y, −r̃) conj η(x̃, ỹ, −r̃) dx̃ dỹ.
pub fn slice_second_symbol(params: &ModelParams, xi: &CylFunction, eta_v: &CylFunction) -> CylFunction {
    let n = params.n;
    let lo = xi.rsupp().0.max(eta_v.rsupp().0);
    let hi = xi.rsupp().1.min(eta_v.rsupp().1);
    if hi <= lo || xi.is_zero() || eta_v.is_zero() {
        return CylFunction::zero(n);
    }
    let l = params.lambda;
    let rsupp = (-hi, -lo);
    let mid = -0.5 * (lo + hi);
    let s = (l * mid).exp();
    // as a function of (x, y): centered where x̃ − e^{λr̃}x meets both hints
    let diff = Hint {
        center: eta_v.hint().center.iter().zip(&xi.hint().center).map(|(e, c)| (e - c) / s).collect(),
        width: eta_v.hint().width.iter().zip(&xi.hint().width).map(|(a, b)| a.hypot(*b) / s).collect(),
    };
    let (a, b) = (xi.clone(), eta_v.clone());
    let order = params.quad_xy_order;
    let depth = xi.depth().max(eta_v.depth()) + 1;
    CylFunction::lazy(n, rsupp, diff, depth, format!("sym2({},{})", xi.label(), eta_v.label()), move |x, y, rt| {
        let s = (l * rt).exp();
        let et = eta(l, rt);
        let mut shift = Vec::with_capacity(2 * n);
        shift.extend(x.iter().map(|v| s * v));
        shift.extend(y.iter().map(|v| s * v));
        let ah = a.hint();
        let pulled = Hint { center: ah.center.iter().zip(&shift).map(|(c, t)| c + t).collect(), width: ah.width.clone() };
        let hint = b.hint().product(&pulled);
        XyRule::new(order, &hint).integrate(|xt, yt| {
            let mut u = [0.0f64; 8];
            let mut v = [0.0f64; 8];
            let mut arg = 0.0;
            for i in 0..n {
                u[i] = xt[i] - s * x[i];
                v[i] = yt[i] - s * y[i];
                arg += x[i] * (y[i] - yt[i] / s);
            }
            let av = a.eval(&u[..n], &v[..n], -rt);
            if av == ZERO {
                return ZERO;
            }
            ebar(et * arg) * av * b.eval(xt, yt, -rt).conj()
        })
    })
}

/// Slice map (ω_{ξ,η} ⊗ id)(U): black-box handle plus, for U_A, the symbol f with L_f equal to it.
pub fn slice_first(params: &ModelParams, u: &PointPhaseOp, xi: &CylFunction, eta_v: &CylFunction) -> Result<(OperatorHandle, CylFunction)> {
    let op = slice_first_op(params, u, xi, eta_v)?;
    if u.kind != OpKind::UA {
        return Err(Error::Unsupported(format!("closed-form first slice of {}", u.label)));
    }
    let f = slice_first_symbol(params, xi, eta_v);
    Ok((op.with_symbol(Symbol::Left(f.clone())), f))
}

/// Slice map (id ⊗ ω_{ξ,η})(U): black-box handle plus, for U_A, the symbol f with ρ_f equal to it.
pub fn slice_second(params: &ModelParams, u: &PointPhaseOp, xi: &CylFunction, eta_v: &CylFunction) -> Result<(OperatorHandle, CylFunction)> {
    let op = slice_second_op(params, u, xi, eta_v)?;
    if u.kind != OpKind::UA {
        return Err(Error::Unsupported(format!("closed-form second slice of {}", u.label)));
    }
    let f = slice_second_symbol(params, xi, eta_v);
    Ok((op.with_symbol(Symbol::Rho(f.clone())), f))
}

/// Ĵ applied to a function, keeping a separable description when the input has one.
pub fn apply_jhat(params: &ModelParams, v: &CylFunction) -> Result<CylFunction> {
    let out = build_jhat(params).apply_cyl(v)?;
    if !v.is_separable() {
        return Ok(out);
    }
    let (l, n) = (params.lambda, params.n);
    let w = v.clone();
    Ok(out.with_separable(move |r| {
        let s = (l * r).exp();
        let src: SepSlice = w.separable_slice(-r).expect("separable input");
        let tr = |h: &Herm1| Herm1 { k: h.k, center: h.center / s, width: h.width / s };
        SepSlice {
            coef: src.coef.conj() * (l * r * n as f64).exp(),
            x: src.x.iter().map(tr).collect(),
            y: src.y.iter().map(tr).collect(),
        }
    }))
}

/// Checks that the closed form of Û agrees with Σ(j⊗1)U(j⊗1)Σ.
pub fn ua_hat_consistency_check(params: &ModelParams, samples: usize) -> Result<CheckReport> {
    let start = Instant::now();
    let a = build_ua_hat(params);
    let b = ua_hat_by_composition(params)?;
    let (res, ca, cb) = op_difference(params, &a, &b, samples, 0x68617420);
    Ok(CheckReport::from_residual("uhat_closed_vs_composed", params, ca, cb, res, res, params.tol_exact, Metric::Absolute).with_runtime(start))
}

/// Black-box slices of U_A against their closed forms, pointwise on a test
/// vector ζ: (ω⊗id)(U_A)ζ = L_f ζ and (id⊗ω)(U_A)ζ = ρ_g ζ.
pub fn slice_agreement_check(params: &ModelParams, xi: &CylFunction, eta_v: &CylFunction, zeta: &CylFunction, samples: usize) -> Result<CheckReport> {
    let start = Instant::now();
    let u = build_ua(params);
    let (op1, f) = slice_first(params, &u, xi, eta_v)?;
    let lhs1 = op1.apply(zeta)?;
    let rhs1 = crate::algebra::twisted_mul(params, &f.memoized(), zeta)?;
    let (op2, g) = slice_second(params, &u, xi, eta_v)?;
    let lhs2 = op2.apply(zeta)?;
    let rhs2 = crate::duality::rho_op(params, &g.memoized())?.apply(zeta)?;
    let mut parts = Vec::new();
    for (name, a, b, salt) in [("slice_first", &lhs1, &rhs1, 0x736c31u64), ("slice_second", &lhs2, &rhs2, 0x736c32)] {
        let (abs, rel, x, y) = crate::funcspace::pointwise_residual(params, a, b, samples, salt);
        parts.push(CheckReport::from_residual(name, params, x, y, abs, rel, params.tol_quad, Metric::Relative).note(format!("{samples} random points")));
    }
    Ok(crate::report::worst_of("slice_closed_forms", params, parts).with_runtime(start))
}
