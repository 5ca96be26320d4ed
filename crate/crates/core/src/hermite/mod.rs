//! Probabilists' Hermite polynomials, the degree-2 corrected variant and
//! evaluation of template polynomials on data.

mod eval;

pub use eval::{eval_psibar, eval_psibar_labeled, eval_psitilde, PolyValue, PsiEvaluator};

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

pub const MAX_HERMITE_ORDER: usize = 32;

/// `ψ_k(x)` with `ψ_{k+1} = x ψ_k − k ψ_{k−1}`, normalized so `E[ψ_k(z)²] = k!`.
pub fn hermite(k: usize, x: f64) -> Result<f64> {
    if k > MAX_HERMITE_ORDER {
        bail!(
            Capacity,
            "Hermite order {} exceeds {}",
            k,
            MAX_HERMITE_ORDER
        );
    }
    Ok(hermite_unchecked(k, x))
}

pub(crate) fn hermite_unchecked(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let next = x * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Fill `out[0..=maxk]` with `ψ_0(x), …, ψ_maxk(x)`.
pub(crate) fn hermite_values(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for k in 2..out.len() {
        out[k] = x * out[k - 1] - (k - 1) as f64 * out[k - 2];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermiteContext {
    pub delta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    /// `1 + Δ²/K`, subtracted from `x²` at interior degree-2 nodes.
    pub correction: f64,
}

impl HermiteContext {
    pub fn new(delta: f64, k: usize) -> Result<Self> {
        if k == 0 || !(delta >= 0.0) || !delta.is_finite() {
            bail!(InvalidParams, "need K ≥ 1 and finite Δ ≥ 0");
        }
        Ok(HermiteContext {
            delta,
            k,
            correction: 1.0 + delta * delta / k as f64,
        })
    }

    /// Context for one of `lambda` split batches, whose means shrink by `√Λ`.
    pub fn for_batches(&self, lambda: usize) -> Self {
        let delta = self.delta / (lambda as f64).sqrt();
        HermiteContext {
            delta,
            k: self.k,
            correction: 1.0 + delta * delta / self.k as f64,
        }
    }
}

/// `ψ̄_β(x)`: `ψ_β(x)` except `x² − (1 + Δ²/K)` for `β = 2` at an interior
/// node of degree 2.
pub fn hermite_bar(beta: usize, interior_deg2: bool, x: f64, ctx: &HermiteContext) -> f64 {
    if beta == 2 && interior_deg2 {
        x * x - ctx.correction
    } else {
        hermite_unchecked(beta, x)
    }
}
