//! Named check suites, their seeded test elements, and parameter sweeps.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::funcspace::{random_primitive, CylFunction, Primitive};
use crate::params::ModelParams;
use crate::report::{CheckReport, Metric, RunReport};
use crate::{algebra, antipode, duality, par, unitaries, weights};

pub const SUITES: &[&str] = &["structure", "algebra", "weights", "antipode", "dual", "classical", "expensive"];

/// Suites that `classical` runs at λ = 0.
pub const CLASSICAL_MEMBERS: &[&str] = &["structure", "algebra", "weights", "antipode", "dual"];

pub const SWEEP_PARAMS: &[&str] = &["lambda", "quad_xy_order", "basis_size"];

/// A registered check and how many seeded instances of it a suite runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckSpec {
    pub id: &'static str,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteSpec {
    pub name: &'static str,
    pub checks: Vec<CheckSpec>,
}

const fn c(id: &'static str, reps: usize) -> CheckSpec {
    CheckSpec { id, reps }
}

/// Every identifier accepted by [`run_check`].
pub const CHECK_IDS: &[&str] = &[
    "pentagon",
    "unitarity",
    "involutions",
    "uhat_consistency",
    "coassociativity",
    "slice_closed_forms",
    "associativity",
    "involution",
    "gns",
    "trace",
    "kms",
    "counit",
    "linearity",
    "left_invariance",
    "right_invariance",
    "mu_factorization",
    "vk_isometry",
    "modular",
    "antipode_involutive",
    "slice_antipode",
    "antipode_op",
    "antipode_antimultiplicative",
    "flip_coproduct",
    "psi_phi_s",
    "s_norm",
    "commutant",
    "duality_pairing",
    "j_rho_j",
    "phi_b",
    "coproduct_routes",
    "convolution_identity",
];

/// The built-in suite definitions. `classical` is not listed: it reruns the
/// members of [`CLASSICAL_MEMBERS`] at λ = 0.
pub fn suite_spec(name: &str) -> Result<SuiteSpec> {
    let checks = match name {
        "structure" => vec![
            c("pentagon", 1),
            c("unitarity", 1),
            c("involutions", 1),
            c("uhat_consistency", 1),
            c("coassociativity", 1),
            c("slice_closed_forms", 5),
        ],
        "algebra" => vec![
            c("associativity", 3),
            c("involution", 3),
            c("gns", 10),
            c("trace", 10),
            c("kms", 3),
            c("counit", 3),
            c("linearity", 3),
        ],
        "weights" => vec![
            c("left_invariance", 3),
            c("right_invariance", 3),
            c("mu_factorization", 1),
            c("vk_isometry", 1),
            c("modular", 3),
        ],
        "antipode" => vec![
            c("antipode_involutive", 5),
            c("slice_antipode", 5),
            c("antipode_op", 5),
            c("antipode_antimultiplicative", 3),
            c("flip_coproduct", 3),
            c("psi_phi_s", 5),
            c("s_norm", 5),
        ],
        "dual" => vec![
            c("commutant", 10),
            c("duality_pairing", 3),
            c("j_rho_j", 3),
            c("phi_b", 3),
            c("coproduct_routes", 1),
        ],
        "expensive" => vec![c("convolution_identity", 3)],
        _ => return Err(Error::UnknownSuite(name.to_string())),
    };
    Ok(SuiteSpec { name: SUITES.iter().find(|s| **s == name).copied().unwrap_or("?"), checks })
}

fn fnv(s: &str) -> u64 {
    s.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// Seeded draws for one check instance: independent of the other checks in
/// the suite so that editing a suite does not change their inputs.
pub struct Elements {
    params: ModelParams,
    rng: ChaCha8Rng,
}

impl Elements {
    pub fn new(params: &ModelParams, id: &str, rep: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ fnv(id));
        rng.set_stream(rep as u64);
        Self { params: params.clone(), rng }
    }

    /// A general primitive: Hermite indices up to 2, random phase, offset
    /// center and r-bump.
    pub fn general(&mut self) -> CylFunction {
        let big_r = self.params.r_support;
        random_primitive(&self.params, &mut self.rng, 2, 0.3 * big_r, 0.2 * big_r).to_function()
    }

    /// Element class for the truncated-basis checks: a centered unit
    /// Gaussian of xy width in [1.5, 1.8]·xy_scale with an r-bump of
    /// half-width [0.05, 0.08]·R centered within ±0.025·R.
    pub fn wide_primitive(&mut self) -> Primitive {
        let s = self.params.xy_scale;
        let big_r = self.params.r_support;
        let w = self.rng.gen_range(1.5 * s..1.8 * s);
        let rc = self.rng.gen_range(-0.025 * big_r..0.025 * big_r);
        let rh = self.rng.gen_range(0.05 * big_r..0.08 * big_r);
        Primitive::gaussian(self.params.n, w, rc, rh).unit()
    }

    pub fn wide(&mut self) -> CylFunction {
        self.wide_primitive().to_function()
    }

    pub fn complex(&mut self) -> Complex64 {
        Complex64::new(self.rng.gen_range(-1.0..1.0), self.rng.gen_range(-1.0..1.0))
    }
}

/// Runs instance `rep` of the check `id`.
pub fn run_check(params: &ModelParams, id: &str, rep: usize) -> Result<Vec<CheckReport>> {
    let mut el = Elements::new(params, id, rep);
    let p = params;
    let one = |r: Result<CheckReport>| r.map(|c| vec![c]);
    match id {
        "pentagon" => Ok(vec![
            unitaries::pentagon_check(p, &unitaries::build_ua(p), 1000)?,
            unitaries::pentagon_check(p, &unitaries::build_ua_hat(p), 1000)?,
        ]),
        "unitarity" => Ok([
            unitaries::build_ua(p),
            unitaries::build_ua_hat(p),
            unitaries::build_j(p),
            unitaries::build_jhat(p),
            unitaries::build_j_star(p),
        ]
        .iter()
        .map(|u| unitaries::unitarity_check(p, u, 1000))
        .collect()),
        "involutions" => Ok(unitaries::involution_checks(p, 100)),
        "uhat_consistency" => one(unitaries::ua_hat_consistency_check(p, 1000)),
        "coassociativity" => Ok(vec![
            duality::coassociativity_check(p, &unitaries::build_ua(p), 1000)?,
            duality::coassociativity_check(p, &unitaries::build_ua_hat(p), 1000)?,
        ]),
        "slice_closed_forms" => {
            let (xi, eta, zeta) = (el.general(), el.general(), el.general());
            one(unitaries::slice_agreement_check(p, &xi, &eta, &zeta, 8))
        }
        "associativity" => {
            let (f, g, h) = (el.general(), el.general(), el.general());
            one(algebra::associativity_check(p, &f, &g, &h))
        }
        "involution" => {
            let (f, g) = (el.general(), el.general());
            one(algebra::involution_check(p, &f, &g))
        }
        "gns" => {
            let (f, g) = (el.general(), el.general());
            one(algebra::gns_check(p, &f, &g))
        }
        "trace" => one(weights::trace_check(p, &el.general())),
        "kms" => {
            let (f, g) = (el.general(), el.general());
            one(weights::kms_check(p, &f, &g))
        }
        "counit" => {
            let (f, g) = (el.general(), el.general());
            one(weights::counit_check(p, &f, &g))
        }
        "linearity" => {
            let (f, g, a) = (el.general(), el.general(), el.complex());
            one(weights::linearity_check(p, &f, &g, a))
        }
        "left_invariance" => {
            let (f, z) = (el.wide(), el.wide());
            one(weights::left_invariance_check(p, &f, &z))
        }
        "right_invariance" => {
            let (f, z) = (el.wide(), el.wide());
            one(weights::right_invariance_check(p, &f, &z))
        }
        "mu_factorization" => one(weights::mu_factorization_check(p, &el.wide())),
        "vk_isometry" => {
            let zeta = weights::fixed_b(p).to_function();
            one(weights::vk_isometry_check(p, &zeta, p.basis_size))
        }
        "modular" => {
            let (f, g) = (el.general(), el.general());
            one(weights::modular_checks(p, &f, &g))
        }
        "antipode_involutive" => one(antipode::s_squared_check(p, &el.general())),
        "slice_antipode" => {
            let (xi, eta) = (el.general(), el.general());
            one(antipode::slice_antipode_check(p, &xi, &eta))
        }
        "antipode_op" => {
            let (f, xi, eta) = (el.general(), el.general(), el.general());
            one(antipode::antipode_op_check(p, &f, &xi, &eta))
        }
        "antipode_antimultiplicative" => {
            let (f, g) = (el.general(), el.general());
            one(antipode::anti_multiplicativity_check(p, &f, &g))
        }
        "flip_coproduct" => {
            let a = el.general();
            let v = [el.general(), el.general()];
            let w = [el.general(), el.general()];
            one(antipode::flip_coproduct_check(p, &a, [&v[0], &v[1]], [&w[0], &w[1]]))
        }
        "psi_phi_s" => one(antipode::psi_phi_s_check(p, &el.general())),
        "s_norm" => one(antipode::s_norm_check(p, &el.general())),
        "commutant" => {
            let (f, g, xi, eta) = (el.general(), el.general(), el.general(), el.general());
            one(duality::commutant_check(p, &f, &g, &xi, &eta))
        }
        "duality_pairing" => {
            let (xi, eta, xi2, eta2) = (el.general(), el.general(), el.general(), el.general());
            one(duality::duality_pairing(p, (&xi, &eta), (&xi2, &eta2)))
        }
        "j_rho_j" => {
            let (f, xi, eta) = (el.general(), el.general(), el.general());
            one(duality::j_rho_j_check(p, &f, &xi, &eta))
        }
        "phi_b" => one(weights::phi_b_check(p, &el.general())),
        "coproduct_routes" => {
            let a = el.general();
            let v = [el.general(), el.general()];
            let w = [el.general(), el.general()];
            one(duality::coproduct_routes_check(p, &a, [&v[0], &v[1]], [&w[0], &w[1]]))
        }
        "convolution_identity" => one(antipode::convolution_identity_check(p, &el.wide(), 0.05)),
        _ => Err(Error::UnknownCheck(id.to_string())),
    }
}

/// Runs every instance of a suite's checks. Errors inside a check become
/// failed reports; only an unknown suite is an error.
pub fn run_suite(params: &ModelParams, suite: &str) -> Result<RunReport> {
    params.validate()?;
    let start = Instant::now();
    let checks = if suite == "classical" {
        let p0 = params.with_lambda(0.0);
        let mut all = Vec::new();
        for member in CLASSICAL_MEMBERS {
            let spec = suite_spec(member)?;
            all.extend(run_spec(&p0, &spec).into_iter().map(|c| {
                let name = format!("{member}/{}", c.name);
                c.renamed(name)
            }));
        }
        all
    } else {
        run_spec(params, &suite_spec(suite)?)
    };
    let used = if suite == "classical" { params.with_lambda(0.0) } else { params.clone() };
    Ok(RunReport::new(suite, &used, checks, start.elapsed().as_secs_f64() * 1e3))
}

fn run_spec(params: &ModelParams, spec: &SuiteSpec) -> Vec<CheckReport> {
    let jobs: Vec<(&str, usize)> = spec.checks.iter().flat_map(|c| (0..c.reps).map(move |i| (c.id, i))).collect();
    let results = par::map(jobs.len(), |k| {
        let (id, rep) = jobs[k];
        let multi = spec.checks.iter().any(|c| c.id == id && c.reps > 1);
        let reports = run_check(params, id, rep).unwrap_or_else(|e| {
            vec![CheckReport::compare(id, params, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), 0.0, Metric::Absolute)
                .fail(format!("error: {e}"))]
        });
        reports
            .into_iter()
            .map(|c| {
                if multi {
                    let name = format!("{}#{rep}", c.name);
                    c.renamed(name)
                } else {
                    c
                }
            })
            .collect::<Vec<_>>()
    });
    results.into_iter().flatten().collect()
}

/// Sets `param` to `value` on a copy of `params`.
pub fn with_param(params: &ModelParams, param: &str, value: &str) -> Result<ModelParams> {
    if !SWEEP_PARAMS.contains(&param) {
        return Err(Error::SweepParam(param.to_string()));
    }
    let mut p = params.clone();
    p.set(param, value)?;
    p.validate()?;
    Ok(p)
}

/// One report per value. Values are validated before any suite runs.
pub fn sweep(params: &ModelParams, suite: &str, param: &str, values: &[String]) -> Result<Vec<(String, RunReport)>> {
    if suite != "classical" {
        suite_spec(suite)?;
    }
    let ps: Vec<ModelParams> = values.iter().map(|v| with_param(params, param, v.trim())).collect::<Result<_>>()?;
    values
        .iter()
        .zip(ps)
        .map(|(v, p)| Ok((v.trim().to_string(), run_suite(&p, suite)?)))
        .collect()
}
