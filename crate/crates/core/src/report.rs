//! Check reports, run reports and their JSON / CSV forms.

use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::params::ModelParams;

/// How `pass` is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    /// rel_err < tol
    Relative,
    /// abs_err < tol
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureInfo {
    /// [quad_xy_order, quad_r_order]
    pub orders: [usize; 2],
    pub basis_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub tol: f64,
    pub pass: bool,
    pub params_digest: String,
    pub quadrature: QuadratureInfo,
    pub runtime_ms: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// |a − b| / |b|, falling back to the absolute error when b = 0.
pub fn rel_err(a: Complex64, b: Complex64) -> f64 {
    let d = (a - b).norm();
    let s = b.norm();
    if s > 0.0 {
        d / s
    } else {
        d
    }
}

impl CheckReport {
    /// Report comparing two values.
    pub fn compare(name: impl Into<String>, params: &ModelParams, lhs: Complex64, rhs: Complex64, tol: f64, metric: Metric) -> Self {
        let abs_err = (lhs - rhs).norm();
        let rel = rel_err(lhs, rhs);
        Self::from_residual(name, params, lhs, rhs, abs_err, rel, tol, metric)
    }

    /// Report with externally computed residuals (worst case over samples).
    #[allow(clippy::too_many_arguments)]
    pub fn from_residual(
        name: impl Into<String>,
        params: &ModelParams,
        lhs: Complex64,
        rhs: Complex64,
        abs_err: f64,
        rel_err: f64,
        tol: f64,
        metric: Metric,
    ) -> Self {
        let err = match metric {
            Metric::Relative => rel_err,
            Metric::Absolute => abs_err,
        };
        Self {
            name: name.into(),
            lhs,
            rhs,
            abs_err,
            rel_err,
            tol,
            pass: err.is_finite() && err < tol,
            params_digest: params.digest(),
            quadrature: QuadratureInfo {
                orders: [params.quad_xy_order, params.quad_r_order],
                basis_size: params.basis_size,
            },
            runtime_ms: 0.0,
            notes: Vec::new(),
        }
    }

    pub fn with_runtime(mut self, start: Instant) -> Self {
        self.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        self
    }

    pub fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }

    /// Forces failure with a reason (e.g. a missing convergence trend).
    pub fn fail(mut self, reason: impl Into<String>) -> Self {
        self.pass = false;
        self.notes.push(reason.into());
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        format!(
            "{} {}: abs_err={:.3e} rel_err={:.3e} tol={:.1e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.abs_err,
            self.rel_err,
            self.tol
        )
    }
}

/// Combines sub-checks into one report: worst sub-check by its own metric
/// ratio err/tol decides lhs/rhs; pass iff every sub-check passes.
pub fn worst_of(name: impl Into<String>, params: &ModelParams, parts: Vec<CheckReport>) -> CheckReport {
    let name = name.into();
    let mut worst: Option<&CheckReport> = None;
    let ratio = |c: &CheckReport| c.rel_err.min(c.abs_err) / c.tol;
    for c in &parts {
        if worst.is_none_or(|w| (!c.pass && w.pass) || (c.pass == w.pass && ratio(c) > ratio(w))) {
            worst = Some(c);
        }
    }
    let mut out = match worst {
        Some(w) => {
            let mut o = w.clone();
            o.name = name;
            o
        }
        None => CheckReport::compare(name, params, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), params.tol_exact, Metric::Absolute),
    };
    out.pass = parts.iter().all(|c| c.pass);
    out.notes = parts
        .iter()
        .map(|c| c.summary())
        .chain(parts.iter().flat_map(|c| c.notes.iter().map(|n| format!("{}: {n}", c.name))))
        .collect();
    out.runtime_ms = parts.iter().map(|c| c.runtime_ms).sum();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub suite: String,
    pub params_digest: String,
    pub params: ModelParams,
    pub checks: Vec<CheckReport>,
    pub pass: bool,
    pub runtime_ms: f64,
    pub version: String,
}

impl RunReport {
    pub fn new(suite: &str, params: &ModelParams, mut checks: Vec<CheckReport>, runtime_ms: f64) -> Self {
        checks.sort_by(|a, b| a.name.cmp(&b.name));
        let pass = checks.iter().all(|c| c.pass);
        Self {
            suite: suite.to_string(),
            params_digest: params.digest(),
            params: params.clone(),
            checks,
            pass,
            runtime_ms,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub const CSV_HEADER: &str = "value,check,lhs_re,lhs_im,rhs_re,rhs_im,abs_err,rel_err,pass";

/// CSV rows for a sweep: one row per (value, check).
pub fn sweep_csv(rows: &[(String, RunReport)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CSV_HEADER}");
    for (value, rep) in rows {
        for c in &rep.checks {
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                value, c.name, c.lhs.re, c.lhs.im, c.rhs.re, c.rhs.im, c.abs_err, c.rel_err, c.pass
            );
        }
    }
    s
}
