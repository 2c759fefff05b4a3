//! The solvable group G with points (p, q, r).
//!
//! The multiplication law is reconstructed: it is the unique law of the form
//! (a.p + e^{λ a.r} b.p, a.q + e^{λ a.r} b.q, a.r + b.r) whose inverse is
//! (−e^{−λr} p, −e^{−λr} q, −r) and which becomes vector addition at λ = 0.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GPoint {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub r: f64,
}

impl GPoint {
    pub fn new(p: Vec<f64>, q: Vec<f64>, r: f64) -> Self {
        assert_eq!(p.len(), q.len(), "p and q must have the same dimension");
        Self { p, q, r }
    }

    pub fn identity(n: usize) -> Self {
        Self { p: vec![0.0; n], q: vec![0.0; n], r: 0.0 }
    }

    /// Largest coordinate difference to `other`.
    pub fn dist_sup(&self, other: &GPoint) -> f64 {
        let d = self
            .p
            .iter()
            .zip(&other.p)
            .chain(self.q.iter().zip(&other.q))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        d.max((self.r - other.r).abs())
    }
}

pub fn g_mul(lambda: f64, a: &GPoint, b: &GPoint) -> GPoint {
    let s = (lambda * a.r).exp();
    GPoint {
        p: a.p.iter().zip(&b.p).map(|(x, y)| x + s * y).collect(),
        q: a.q.iter().zip(&b.q).map(|(x, y)| x + s * y).collect(),
        r: a.r + b.r,
    }
}

pub fn g_inv(lambda: f64, a: &GPoint) -> GPoint {
    let s = (-lambda * a.r).exp();
    GPoint {
        p: a.p.iter().map(|x| -s * x).collect(),
        q: a.q.iter().map(|x| -s * x).collect(),
        r: -a.r,
    }
}
