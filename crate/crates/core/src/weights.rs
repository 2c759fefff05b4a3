//! The functionals φ, ψ, ε, φ_B, the trace weight μ = Tr(γ ·), the modular
//! profiles δ and γ, and the invariance theorems.

use std::time::Instant;

use num_complex::Complex64;
use smallvec::SmallVec;

use crate::algebra::{self, OperatorHandle, Symbol};
use crate::duality;
use crate::error::{Error, Result};
use crate::funcspace::{self, check_dims, hermite_functions, inner_product, inner_product_weighted, CylFunction, Onb, Primitive};
use crate::kernels::{e_fwd, ebar, eta};
use crate::par;
use crate::params::ModelParams;
use crate::quadrature::{self, Hint, XyRule};
use crate::report::{worst_of, CheckReport, Metric};
use crate::unitaries::{self, build_multiplier, embed, PointPhaseOp};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// δ profile e^{−2λrn}.
pub fn delta_profile(params: &ModelParams) -> impl Fn(f64) -> f64 + Send + Sync + Clone + 'static {
    let c = -2.0 * params.lambda * params.n as f64;
    move |r| (c * r).exp()
}

/// γ profile e^{2λrn} = 1/δ.
pub fn gamma_profile(params: &ModelParams) -> impl Fn(f64) -> f64 + Send + Sync + Clone + 'static {
    let c = 2.0 * params.lambda * params.n as f64;
    move |r| (c * r).exp()
}

/// φ(f) = ∫ f(0, 0, r) dr.
pub fn phi(params: &ModelParams, f: &CylFunction) -> Result<Complex64> {
    phi_weighted(params, f, |_| 1.0)
}

/// ψ(f) = ∫ f(0, 0, r) e^{−2λrn} dr.
pub fn psi(params: &ModelParams, f: &CylFunction) -> Result<Complex64> {
    phi_weighted(params, f, delta_profile(params))
}

fn phi_weighted<W: Fn(f64) -> f64 + Sync + Send>(params: &ModelParams, f: &CylFunction, w: W) -> Result<Complex64> {
    check_dims(params, f)?;
    if f.is_zero() {
        return Ok(ZERO);
    }
    let zero = vec![0.0; params.n];
    let (lo, hi) = f.rsupp();
    Ok(quadrature::integrate_r_split(params.quad_r_order, lo, hi, f.breaks(), |r| f.eval(&zero, &zero, r) * w(r)))
}

/// ε(f) = ∫ f(x, y, 0) dx dy.
pub fn epsilon(params: &ModelParams, f: &CylFunction) -> Result<Complex64> {
    check_dims(params, f)?;
    let (lo, hi) = f.rsupp();
    if f.is_zero() || lo > 0.0 || hi < 0.0 {
        return Ok(ZERO);
    }
    Ok(XyRule::new(params.quad_xy_order, f.hint()).integrate(|x, y| f.eval(x, y, 0.0)))
}

/// φ_B(λ_f) = ∫ f(x, y, 0) dx dy, taking the symbol f.
pub fn phi_b(params: &ModelParams, f: &CylFunction) -> Result<Complex64> {
    epsilon(params, f)
}

/// Normalized bump of half-width `eps` in r, constant 1 in (x, y).
fn r_mollifier(params: &ModelParams, eps: f64, width_hint: &Hint) -> CylFunction {
    let mass = eps * funcspace_bump_integral();
    CylFunction::lazy(params.n, (-eps, eps), width_hint.widened(1e3), 0, format!("1⊗m({eps:e})"), move |_, _, r| {
        Complex64::new(funcspace::bump(r / eps) / mass, 0.0)
    })
}

fn funcspace_bump_integral() -> f64 {
    let rule = quadrature::legendre_rule(64, -1.0, 1.0, 8);
    rule.nodes.iter().zip(&rule.weights).map(|(u, w)| w * funcspace::bump(*u)).sum()
}

/// φ_B(λ_f* λ_f) with the symbol of λ_f* λ_f recovered in the λ-picture:
/// h = λ_f* λ_f (1 ⊗ m_ε) approximates the symbol, and φ_B = ∫ h(x, y, 0).
pub fn phi_b_of_lambda_product(params: &ModelParams, f: &CylFunction, eps_r: f64) -> Result<Complex64> {
    check_dims(params, f)?;
    if eps_r.is_nan() || eps_r <= 0.0 {
        return Err(Error::Domain(format!("mollifier width must be positive, got {eps_r}")));
    }
    if f.is_zero() {
        return Ok(ZERO);
    }
    let lam = duality::lambda_op(params, f)?;
    let z = r_mollifier(params, eps_r, f.hint());
    let h = lam.apply_adjoint(&lam.apply(&z)?)?;
    let (lo, hi) = h.rsupp();
    if lo > 0.0 || hi < 0.0 {
        return Err(Error::NotASymbol { coarse: lo, fine: hi });
    }
    Ok(XyRule::new(params.quad_xy_order, f.hint()).integrate(|x, y| h.eval(x, y, 0.0)))
}

/// φ_B(λ_f* λ_f) = ‖f‖₂².
pub fn phi_b_check(params: &ModelParams, f: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let lhs = phi_b_of_lambda_product(params, f, 1e-3)?;
    let rhs = Complex64::new(funcspace::norm_sq(params, f)?, 0.0);
    Ok(CheckReport::compare("phiB_norm", params, lhs, rhs, 1e-4, Metric::Relative).with_runtime(start))
}

/// φ(f* × f) = φ(f × f*) = ‖f‖₂².
pub fn trace_check(params: &ModelParams, f: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let fs = algebra::involution(params, f);
    let a = phi(params, &algebra::twisted_mul(params, &fs, f)?)?;
    let b = phi(params, &algebra::twisted_mul(params, f, &fs)?)?;
    let nrm = Complex64::new(funcspace::norm_sq(params, f)?, 0.0);
    let parts = vec![
        CheckReport::compare("trace_f*f", params, a, nrm, params.tol_quad, Metric::Relative),
        CheckReport::compare("trace_ff*", params, b, nrm, params.tol_quad, Metric::Relative),
    ];
    Ok(worst_of("trace", params, parts).with_runtime(start))
}

/// φ(f × g) = φ(g × f).
pub fn kms_check(params: &ModelParams, f: &CylFunction, g: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let a = phi(params, &algebra::twisted_mul(params, f, g)?)?;
    let b = phi(params, &algebra::twisted_mul(params, g, f)?)?;
    Ok(CheckReport::compare("kms", params, a, b, params.tol_quad, Metric::Relative).with_runtime(start))
}

/// Partial sums of μ over the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MuSums {
    /// partial[l] = Σ_{k ≤ l} ⟨γ T e_k, e_k⟩
    pub partial: Vec<Complex64>,
}

impl MuSums {
    /// Σ_{k < len}.
    pub fn at(&self, len: usize) -> Complex64 {
        if len == 0 {
            ZERO
        } else {
            self.partial[(len - 1).min(self.partial.len() - 1)]
        }
    }
}

/// μ(T) = Σ_{l<L} ⟨γ T e_l, e_l⟩ for a generic operator, one application per basis element.
pub fn mu(params: &ModelParams, t: &OperatorHandle, len: usize) -> Result<MuSums> {
    if len > params.basis_size.max(1) * 2 {
        return Err(Error::Domain(format!("basis length {len} exceeds twice basis_size")));
    }
    let onb = Onb::new(params, len);
    let g = gamma_profile(params);
    let mut partial = Vec::with_capacity(len);
    let mut acc = ZERO;
    for e in onb.elements() {
        let te = t.apply(e)?;
        acc += inner_product_weighted(params, &te, e, g.clone())?;
        partial.push(acc);
    }
    Ok(MuSums { partial })
}

/// The fixed element b: unit Gaussian primitive of width xy_scale, r-bump
/// centered at 0 with half-width 0.75·r_support.
pub fn fixed_b(params: &ModelParams) -> Primitive {
    Primitive::gaussian(params.n, params.xy_scale, 0.0, 0.75 * params.r_support).unit()
}

/// μ(λ_b* L_t λ_b) partial sums up to `len` basis elements, by the
/// sandwich kernel: Σ_l ∫ t(δ,ε,ρ) (λ_b e_l)(x−δ, y−ε, ρ) ē[η(ρ)β(δ, y−ε)] conj(λ_b γ e_l)(x, y, ρ).
pub fn mu_sandwich(params: &ModelParams, t: &CylFunction, b: &CylFunction, len: usize) -> Result<MuSums> {
    check_dims(params, t)?;
    check_dims(params, b)?;
    let n = params.n;
    if t.is_zero() || b.is_zero() || len == 0 {
        return Ok(MuSums { partial: vec![ZERO; len] });
    }
    let onb = Onb::new(params, len);
    let l = params.lambda;
    let nf = n as f64;
    let big_r = params.r_support;
    let s = params.xy_scale;
    let order = (params.quad_xy_order / 2).max(4);
    let r_order = (params.quad_r_order / 2).max(4);
    let m_len = onb.rfamily.len();
    let h_len = onb.max_herm + 1;
    let idx: Vec<(SmallVec<[u32; 4]>, usize)> = onb.indices.iter().map(|b| (b.herm.iter().copied().collect(), b.m)).collect();
    // the δ grid must resolve the basis oscillation in u_l(x − δ): no wider than the basis scale
    let th = t.hint();
    let dgrid = XyRule::new(order, &Hint::new(th.center.clone(), th.width.iter().map(|w| w.min(s)).collect()));
    let xgrid = XyRule::new(order, &Hint::isotropic(n, 0.0, s));
    let (nd, nx) = (dgrid.len(), xgrid.len());
    let (bl, bh) = b.rsupp();
    let (tl, th) = t.rsupp();
    let rho_rule = quadrature::r_rule(r_order, tl, th);
    let mut acc = vec![ZERO; len];
    // (λ_b e_l)(z, ρ) = Π ψ(z) · B_m(z, ρ), B_m = ∫ b(e^{λq} z, ρ − q) q_m(q) γ(q)^{gam} dq
    let b_modes = |z: &[f64], rho: f64, qn: &[f64], qw: &[f64], qm: &[f64], gam: bool, out: &mut [Complex64]| {
        out.iter_mut().for_each(|o| *o = ZERO);
        let mut zs = [0.0f64; 16];
        for (iq, (&q, &w)) in qn.iter().zip(qw).enumerate() {
            let e = (l * q).exp();
            for (i, v) in z.iter().enumerate() {
                zs[i] = e * v;
            }
            let mut bv = b.eval(&zs[..n], &zs[n..2 * n], rho - q) * w;
            if bv == ZERO {
                continue;
            }
            if gam {
                bv *= (2.0 * l * q * nf).exp();
            }
            for (m, o) in out.iter_mut().enumerate() {
                *o += bv * qm[iq * m_len + m];
            }
        }
    };
    let basis_values = |z: &[f64], bm: &[Complex64], out: &mut [Complex64]| {
        let mut h = vec![0.0f64; 2 * n * h_len];
        for (i, v) in z.iter().enumerate() {
            hermite_functions(h_len, *v, s, &mut h[i * h_len..(i + 1) * h_len]);
        }
        for (o, (herm, m)) in out.iter_mut().zip(&idx) {
            let mut p = 1.0;
            for (i, &k) in herm.iter().enumerate() {
                p *= h[i * h_len + k as usize];
            }
            *o = bm[*m] * p;
        }
    };
    for (&rho, &wr) in rho_rule.nodes.iter().zip(&rho_rule.weights) {
        let qlo = (rho - bh).max(-big_r);
        let qhi = (rho - bl).min(big_r);
        if qhi <= qlo {
            continue;
        }
        let qrule = quadrature::r_rule(r_order, qlo, qhi);
        let mut qm = vec![0.0; qrule.len() * m_len];
        for (iq, &q) in qrule.nodes.iter().enumerate() {
            onb.rfamily.values(q, &mut qm[iq * m_len..(iq + 1) * m_len]);
        }
        let et = eta(l, rho);
        // conj(λ_b γ e_l) at the x grid
        let wtab: Vec<Vec<Complex64>> = par::map(nx, |j| {
            let mut z = [0.0f64; 16];
            xgrid.point(j, &mut z[..2 * n]);
            let mut bm = vec![ZERO; m_len];
            b_modes(&z[..2 * n], rho, &qrule.nodes, &qrule.weights, &qm, true, &mut bm);
            let mut out = vec![ZERO; len];
            basis_values(&z[..2 * n], &bm, &mut out);
            out.iter_mut().for_each(|v| *v = v.conj());
            out
        });
        let tvals: Vec<Complex64> = par::map(nd, |k| {
            let mut d = [0.0f64; 16];
            dgrid.point(k, &mut d[..2 * n]);
            t.eval(&d[..n], &d[n..2 * n], rho)
        });
        let contrib: Vec<Vec<Complex64>> = par::map(nd, |k| {
            let mut local = vec![ZERO; len];
            let tv = tvals[k];
            if tv == ZERO {
                return local;
            }
            let mut d = [0.0f64; 16];
            let wd = dgrid.point(k, &mut d[..2 * n]);
            let mut bm = vec![ZERO; m_len];
            let mut u = vec![ZERO; len];
            for j in 0..nx {
                let mut x = [0.0f64; 16];
                let wx = xgrid.point(j, &mut x[..2 * n]);
                let mut z = [0.0f64; 16];
                let mut arg = 0.0;
                for i in 0..2 * n {
                    z[i] = x[i] - d[i];
                }
                for i in 0..n {
                    arg += d[i] * z[n + i];
                }
                b_modes(&z[..2 * n], rho, &qrule.nodes, &qrule.weights, &qm, false, &mut bm);
                basis_values(&z[..2 * n], &bm, &mut u);
                let c = tv * ebar(et * arg) * (wd * wx);
                let wrow = &wtab[j];
                for ll in 0..len {
                    local[ll] += c * u[ll] * wrow[ll];
                }
            }
            local
        });
        for row in contrib {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v * wr;
            }
        }
    }
    let mut partial = Vec::with_capacity(len);
    let mut run = ZERO;
    for v in acc {
        run += v;
        partial.push(run);
    }
    Ok(MuSums { partial })
}

/// φ_A(T) = μ(λ_b* T λ_b)/‖b‖₂² with `len` basis elements. Uses the sandwich
/// kernel when T carries an L-picture symbol.
pub fn phi_a_of_operator(params: &ModelParams, t: &OperatorHandle, b: &CylFunction, len: usize) -> Result<MuSums> {
    let nb = funcspace::norm_sq(params, b)?;
    let sums = match &t.symbol {
        Some(Symbol::Left(f)) => mu_sandwich(params, f, b, len)?,
        _ => {
            let lb = duality::lambda_op(params, b)?;
            mu(params, &lb.adjoint().compose(t).compose(&lb), len)?
        }
    };
    Ok(MuSums { partial: sums.partial.into_iter().map(|v| v / nb).collect() })
}

/// Truncated-sum report: value at `len`, trend from `len/2`.
fn truncation_report(name: &str, params: &ModelParams, sums: &MuSums, len: usize, expected: Complex64) -> CheckReport {
    let coarse = sums.at(len / 2);
    let fine = sums.at(len);
    let rep = CheckReport::compare(name, params, fine, expected, params.tol_trunc, Metric::Relative);
    let e_coarse = crate::report::rel_err(coarse, expected);
    let e_fine = rep.rel_err;
    let rep = rep.note(format!("rel_err at L={}: {:.3e}; at L={}: {:.3e}", len / 2, e_coarse, len, e_fine));
    if rep.rel_err > e_coarse && rep.rel_err > params.tol_exact {
        rep.fail("partial sums not improving with basis size")
    } else {
        rep
    }
}

/// μ(λ_b* L_a* L_a λ_b) = φ_B(λ_b* λ_b) φ(a* × a) at basis_size.
pub fn mu_factorization_check(params: &ModelParams, a: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let b = fixed_b(params).to_function();
    let t = algebra::twisted_mul(params, &algebra::involution(params, a), a)?;
    let len = params.basis_size;
    let sums = mu_sandwich(params, &t, &b, len)?;
    let rhs = phi_b_of_lambda_product(params, &b, 1e-3)? * phi(params, &t)?;
    Ok(truncation_report("mu_factorization", params, &sums, len, rhs).with_runtime(start))
}

/// φ_A((ω_{ζ,ζ} ⊗ id)(Δ a)) = ⟨ζ, ζ⟩ φ(a) with a = f* × f, at basis_size
/// and 2·basis_size.
pub fn left_invariance_check(params: &ModelParams, f: &CylFunction, zeta: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let a = algebra::twisted_mul(params, &algebra::involution(params, f), f)?;
    let t = duality::left_contraction_symbol(params, &a, zeta);
    let rhs = phi(params, &a)? * funcspace::norm_sq(params, zeta)?;
    invariance_report("left_invariance", params, &t, rhs, start)
}

/// ψ_A((id ⊗ ω_{ζ,ζ})(Δ a)) = ⟨ζ, ζ⟩ ψ(a), with ψ_A = φ_A ∘ S.
pub fn right_invariance_check(params: &ModelParams, f: &CylFunction, zeta: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let a = algebra::twisted_mul(params, &algebra::involution(params, f), f)?;
    let t2 = duality::right_contraction_symbol(params, &a, zeta);
    let st2 = crate::antipode::antipode_fn(params, &t2).memoized();
    let rhs = psi(params, &a)? * funcspace::norm_sq(params, zeta)?;
    invariance_report("right_invariance", params, &st2, rhs, start)
}

fn invariance_report(name: &str, params: &ModelParams, t: &CylFunction, rhs: Complex64, start: Instant) -> Result<CheckReport> {
    if rhs == ZERO {
        let lhs = phi(params, t)?;
        return Ok(CheckReport::compare(name, params, lhs, rhs, params.tol_trunc, Metric::Absolute).with_runtime(start));
    }
    let b = fixed_b(params).to_function();
    let len = params.basis_size;
    let nb = funcspace::norm_sq(params, &b)?;
    let sums = mu_sandwich(params, t, &b, 2 * len)?;
    let sums = MuSums { partial: sums.partial.into_iter().map(|v| v / nb).collect() };
    let at = |k: usize| sums.at(k);
    let (e1, e2) = (crate::report::rel_err(at(len), rhs), crate::report::rel_err(at(2 * len), rhs));
    let rep = CheckReport::compare(name, params, at(len), rhs, params.tol_trunc, Metric::Relative)
        .note(format!("rel_err at L={len}: {e1:.3e}; at L={}: {e2:.3e}", 2 * len))
        .note(format!("direct phi of contraction symbol: {:.6e}", phi(params, t)?));
    Ok(if e2 >= e1 && e1 > params.tol_exact { rep.fail("residual did not decrease when the basis doubled") } else { rep }.with_runtime(start))
}

/// Partial sums Σ_{k<L} ⟨v_k ξ_l, v_k ξ_j⟩ for v_k = (ω_{ζ,ξ_k} ⊗ id)(Û_A),
/// for the pairs among the basis elements `ls`. Returns [a][b][k] cumulative.
pub fn vk_partial_sums(params: &ModelParams, zeta: &CylFunction, ls: &[usize], len: usize) -> Result<Vec<Vec<Vec<Complex64>>>> {
    check_dims(params, zeta)?;
    if !zeta.is_separable() {
        return Err(Error::Unsupported("v_k sums need a separable ζ".into()));
    }
    let n = params.n;
    let l = params.lambda;
    let nl = ls.iter().copied().max().unwrap_or(0) + 1;
    let onb = Onb::new(params, len.max(nl));
    let s = params.xy_scale;
    let big_r = params.r_support;
    let order = (params.quad_xy_order * 5 / 8).max(4);
    let m_len = onb.rfamily.len();
    let h_len = onb.max_herm + 1;
    let zw = zeta.hint().width.iter().cloned().fold(s, f64::max);
    let xg = quadrature::hermite_rule(order, 0.0, s);
    let ig = quadrature::hermite_rule(order, 0.0, zw);
    let gx = XyRule::new(order, &Hint::isotropic(n, 0.0, s));
    let ngx = gx.len();
    // Hermite functions on the inner grid: hi[k][node]
    let mut hi = vec![vec![0.0; order]; h_len];
    for (j, &x) in ig.nodes.iter().enumerate() {
        let mut out = vec![0.0; h_len];
        hermite_functions(h_len, x, s, &mut out);
        for k in 0..h_len {
            hi[k][j] = out[k];
        }
    }
    let rrule = quadrature::legendre_rule(params.quad_r_order, -big_r, big_r, 1);
    let (zl, zh) = zeta.rsupp();
    let na = ls.len();
    let mut out = vec![vec![vec![ZERO; len]; na]; na];
    for (&r, &wr) in rrule.nodes.iter().zip(&rrule.weights) {
        let lo = zl.max(r - big_r);
        let hi_ = zh.min(r + big_r);
        if hi_ <= lo {
            continue;
        }
        let qrule = quadrature::legendre_rule(params.quad_r_order, lo, hi_, 1);
        // coef[a][g][k] accumulated over q
        let coef: Vec<Vec<Vec<Complex64>>> = par::map(ngx, |g| {
            let mut pt = [0.0f64; 16];
            gx.point(g, &mut pt[..2 * n]);
            let (xx, yy) = pt[..2 * n].split_at(n);
            let mut acc = vec![vec![ZERO; len]; na];
            let mut qm = vec![0.0; m_len];
            for (&q, &wq) in qrule.nodes.iter().zip(&qrule.weights) {
                let sl = zeta.separable_slice(q).expect("separable");
                if sl.coef == ZERO {
                    continue;
                }
                let c = (l * (r - q)).exp();
                let eq = eta(l, q);
                // per coordinate: Ix[i][k] = ∫ ψ_k(x) ζx(x + cX) dx, Iy[i][k] = ∫ ψ_k(y) ζy(y + cY) e[η(q) c X y] dy
                let mut ix = vec![vec![ZERO; h_len]; n];
                let mut iy = vec![vec![ZERO; h_len]; n];
                for i in 0..n {
                    for (j, (&x, &w)) in ig.nodes.iter().zip(&ig.weights).enumerate() {
                        let zx = sl.x[i].eval(x + c * xx[i]) * w;
                        let zy = e_fwd(eq * c * xx[i] * x) * (sl.y[i].eval(x + c * yy[i]) * w);
                        for k in 0..h_len {
                            ix[i][k] += zx * hi[k][j];
                            iy[i][k] += zy * hi[k][j];
                        }
                    }
                }
                onb.rfamily.values(q, &mut qm);
                let base: Vec<Complex64> = onb
                    .indices
                    .iter()
                    .take(len)
                    .map(|bi| {
                        let mut v = Complex64::new(qm[bi.m], 0.0);
                        for i in 0..n {
                            v *= ix[i][bi.herm[i] as usize] * iy[i][bi.herm[n + i] as usize];
                        }
                        v
                    })
                    .collect();
                for (a, &lsel) in ls.iter().enumerate() {
                    let xl = onb.get(lsel).eval(xx, yy, r - q);
                    if xl == ZERO {
                        continue;
                    }
                    let f = sl.coef * xl * wq;
                    for k in 0..len {
                        acc[a][k] += f * base[k];
                    }
                }
            }
            acc
        });
        for (g, cg) in coef.iter().enumerate() {
            let mut pt = [0.0f64; 16];
            let wg = gx.point(g, &mut pt[..2 * n]) * wr;
            for a in 0..na {
                for b2 in 0..na {
                    for k in 0..len {
                        out[a][b2][k] += cg[a][k] * cg[b2][k].conj() * wg;
                    }
                }
            }
        }
    }
    let _ = xg;
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            let mut run = ZERO;
            for x in v.iter_mut() {
                run += *x;
                *x = run;
            }
        }
    }
    Ok(out)
}

/// Σ_{k<L} ⟨v_k ξ_l, v_k ξ_j⟩ = ⟨ζ, ζ⟩ δ_{lj} for l, j among the first basis elements.
pub fn vk_isometry_check(params: &ModelParams, zeta: &CylFunction, len: usize) -> Result<CheckReport> {
    let start = Instant::now();
    let ls = [0usize, 1, 2];
    let sums = vk_partial_sums(params, zeta, &ls, len)?;
    let zz = funcspace::norm_sq(params, zeta)?;
    let mut parts = Vec::new();
    for a in 0..ls.len() {
        for b in 0..ls.len() {
            let expected = if a == b { Complex64::new(zz, 0.0) } else { ZERO };
            let fine = sums[a][b][len - 1] / zz;
            let coarse = sums[a][b][len / 2 - 1] / zz;
            let exp_n = expected / zz;
            let rep = CheckReport::from_residual(
                format!("vk[{},{}]", ls[a], ls[b]),
                params,
                fine,
                exp_n,
                (fine - exp_n).norm(),
                (fine - exp_n).norm(),
                params.tol_trunc,
                Metric::Absolute,
            );
            let (ec, ef) = ((coarse - exp_n).norm(), (fine - exp_n).norm());
            let rep = rep.note(format!("residual at L={}: {ec:.3e}; at L={len}: {ef:.3e}", len / 2));
            parts.push(if a == b && ef > ec { rep.fail("diagonal partial sums not improving") } else { rep });
        }
    }
    Ok(worst_of("vk_isometry", params, parts).with_runtime(start))
}

/// (i) ψ(f) = φ(δ^{1/2} f δ^{1/2}); (ii) U_A(δ̃⊗1)U_A* = δ̃⊗δ̃ pointwise;
/// (iii) ⟨NΛf, NΛg⟩_R = ⟨Λf, Λ(δg)⟩.
pub fn modular_checks(params: &ModelParams, f: &CylFunction, g: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let dp = delta_profile(params);
    let lhs1 = psi(params, f)?;
    let rhs1 = phi(params, &f.mul_profile(dp.clone(), "δ"))?;
    let r1 = CheckReport::compare("modular_psi", params, lhs1, rhs1, params.tol_quad, Metric::Relative);

    let u = unitaries::build_ua(params);
    let d1 = embed(&build_multiplier(params, "δ", dp.clone()), &[0], 2)?;
    let d2 = embed(&build_multiplier(params, "δ", dp.clone()), &[1], 2)?;
    let lhs_op = u.compose(&d1).compose(&u.adjoint());
    let rhs_op: PointPhaseOp = d1.compose(&d2);
    let (res, a, b) = unitaries::op_difference(params, &lhs_op, &rhs_op, 1000, 0x6d6f64);
    let r2 = CheckReport::from_residual("modular_grouplike", params, a, b, res, res, params.tol_exact, Metric::Absolute);

    let lhs3 = inner_product_weighted(params, f, g, dp.clone())?;
    let rhs3 = inner_product(params, f, &g.mul_profile(dp, "δ"))?;
    let r3 = CheckReport::compare("modular_N", params, lhs3, rhs3, params.tol_quad, Metric::Relative);
    Ok(worst_of("modular", params, vec![r1, r2, r3]).with_runtime(start))
}

/// ω_{ξ,η}(ab) = Σ_k ω_{ξ_k,η}(a) ω_{ξ,ξ_k}(b), partial sums to `len`.
pub fn omega_expansion_check(
    params: &ModelParams,
    a_op: &OperatorHandle,
    b_op: &OperatorHandle,
    xi: &CylFunction,
    eta_v: &CylFunction,
    len: usize,
) -> Result<CheckReport> {
    let start = Instant::now();
    let u = b_op.apply(xi)?.memoized();
    let v = a_op.apply_adjoint(eta_v)?.memoized();
    let lhs = inner_product(params, &u, &v)?;
    let onb = Onb::new(params, len);
    let terms: Vec<Complex64> = onb
        .elements()
        .iter()
        .map(|e| Ok(inner_product(params, &u, e)? * inner_product(params, &v, e)?.conj()))
        .collect::<Result<_>>()?;
    let sums = MuSums {
        partial: terms
            .iter()
            .scan(ZERO, |acc, t| {
                *acc += t;
                Some(*acc)
            })
            .collect(),
    };
    Ok(truncation_report("omega_expansion", params, &sums, len, lhs).with_runtime(start))
}

/// Linearity of φ, ψ, ε on αf + g.
pub fn linearity_check(params: &ModelParams, f: &CylFunction, g: &CylFunction, alpha: Complex64) -> Result<CheckReport> {
    let start = Instant::now();
    let h = f.scale(alpha).add(g);
    let mut parts = Vec::new();
    for (name, fun) in [("phi", phi as fn(&ModelParams, &CylFunction) -> Result<Complex64>), ("psi", psi), ("epsilon", epsilon)] {
        let lhs = fun(params, &h)?;
        let rhs = alpha * fun(params, f)? + fun(params, g)?;
        parts.push(CheckReport::compare(format!("linearity_{name}"), params, lhs, rhs, params.tol_quad, Metric::Absolute));
    }
    Ok(worst_of("linearity", params, parts).with_runtime(start))
}

/// ε(f × g) = ε(f) ε(g).
pub fn counit_check(params: &ModelParams, f: &CylFunction, g: &CylFunction) -> Result<CheckReport> {
    let start = Instant::now();
    let lhs = epsilon(params, &algebra::twisted_mul(params, f, g)?)?;
    let rhs = epsilon(params, f)? * epsilon(params, g)?;
    Ok(CheckReport::compare("counit_homomorphism", params, lhs, rhs, params.tol_quad, Metric::Absolute).with_runtime(start))
}
