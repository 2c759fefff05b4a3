//! Model parameters and the plain-text `key = value` config format.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels;

/// Config keys, in the canonical order used for digests and serialization.
pub const CONFIG_KEYS: [&str; 11] = [
    "lambda",
    "n",
    "r_support",
    "xy_scale",
    "quad_xy_order",
    "quad_r_order",
    "basis_size",
    "tol_exact",
    "tol_quad",
    "tol_trunc",
    "seed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Deformation constant; 0 is the classical limit.
    pub lambda: f64,
    /// Half-dimension of H/Z, so x and y live in R^n.
    pub n: usize,
    /// Half-width R of the r-window [-R, R].
    pub r_support: f64,
    /// Gaussian width used for primitives and the Hermite basis.
    pub xy_scale: f64,
    pub quad_xy_order: usize,
    pub quad_r_order: usize,
    /// Truncation size L of the orthonormal basis.
    pub basis_size: usize,
    pub tol_exact: f64,
    pub tol_quad: f64,
    pub tol_trunc: f64,
    pub seed: u64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            lambda: 0.4,
            n: 1,
            r_support: 2.0,
            xy_scale: 0.5,
            quad_xy_order: 32,
            quad_r_order: 24,
            basis_size: 64,
            tol_exact: 1e-10,
            tol_quad: 1e-6,
            tol_trunc: 1e-2,
            seed: 7,
        }
    }
}

/// Largest supported n; point buffers are sized for three legs at this n.
pub const MAX_N: usize = 4;

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Params(msg));
        if !self.lambda.is_finite() {
            return bad(format!("lambda must be finite, got {}", self.lambda));
        }
        if self.n == 0 || self.n > MAX_N {
            return bad(format!("n must be in 1..={MAX_N}, got {}", self.n));
        }
        if !(self.r_support > 0.0 && self.r_support.is_finite()) {
            return bad(format!("r_support must be positive, got {}", self.r_support));
        }
        if !(self.xy_scale > 0.0 && self.xy_scale.is_finite()) {
            return bad(format!("xy_scale must be positive, got {}", self.xy_scale));
        }
        if self.quad_xy_order < 2 || self.quad_r_order < 2 {
            return bad("quadrature orders must be at least 2".into());
        }
        if self.quad_xy_order > crate::quadrature::MAX_ORDER
            || self.quad_r_order > crate::quadrature::MAX_ORDER
        {
            return bad(format!(
                "quadrature orders must not exceed {}",
                crate::quadrature::MAX_ORDER
            ));
        }
        if self.basis_size == 0 {
            return bad("basis_size must be positive".into());
        }
        // zero is allowed: it forces every check to fail, which exercises the failure path
        if [self.tol_exact, self.tol_quad, self.tol_trunc].iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return bad("tolerances must be finite and non-negative".into());
        }
        Ok(())
    }

    /// η_λ(r) for this λ.
    pub fn eta(&self, r: f64) -> f64 {
        kernels::eta(self.lambda, r)
    }

    /// Parses a `key = value` config. Blank lines and `#` comments are
    /// ignored; keys not present keep their default value.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut p = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            p.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_config_str(&text)
    }

    /// Sets one parameter from its textual value. Does not validate the
    /// combined parameter set.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
        }
        match key {
            "lambda" => self.lambda = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "r_support" => self.r_support = num(key, value)?,
            "xy_scale" => self.xy_scale = num(key, value)?,
            "quad_xy_order" => self.quad_xy_order = num(key, value)?,
            "quad_r_order" => self.quad_r_order = num(key, value)?,
            "basis_size" => self.basis_size = num(key, value)?,
            "tol_exact" => self.tol_exact = num(key, value)?,
            "tol_quad" => self.tol_quad = num(key, value)?,
            "tol_trunc" => self.tol_trunc = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Canonical config text; parsing it back yields an identical value.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lambda = {:?}", self.lambda);
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "r_support = {:?}", self.r_support);
        let _ = writeln!(s, "xy_scale = {:?}", self.xy_scale);
        let _ = writeln!(s, "quad_xy_order = {}", self.quad_xy_order);
        let _ = writeln!(s, "quad_r_order = {}", self.quad_r_order);
        let _ = writeln!(s, "basis_size = {}", self.basis_size);
        let _ = writeln!(s, "tol_exact = {:?}", self.tol_exact);
        let _ = writeln!(s, "tol_quad = {:?}", self.tol_quad);
        let _ = writeln!(s, "tol_trunc = {:?}", self.tol_trunc);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    /// First 16 hex digits of the SHA-256 of the canonical config text.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_config_string().as_bytes());
        hash.iter().take(8).fold(String::new(), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        })
    }

    /// Copy with λ replaced; used by the classical-limit suite and sweeps.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }
}
