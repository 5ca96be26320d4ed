//! Numerical audit of the normalized `Ψ̃` family: its Gram matrix, a
//! Gershgorin bracket on its spectrum and the contributions to the
//! correlation bound.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::hermite::{HermiteContext, PsiEvaluator};
use crate::linalg::Matrix;
use crate::model::{InstanceSampler, ModelParams};
use crate::moments::{mean_x_psitilde, null_cross_moment, variance_proxy};
use crate::multigraph::Template;
use crate::rng::sub_rng;
use crate::stats::RunningStats;

/// Running sums for the Monte Carlo Gram matrix of a template family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramAccumulator {
    pub dim: usize,
    /// Upper triangle, row-major, of the raw products `Ψ̃_a Ψ̃_b`.
    pub entries: Vec<RunningStats>,
}

impl GramAccumulator {
    pub fn new(dim: usize) -> Self {
        GramAccumulator {
            dim,
            entries: vec![RunningStats::new(); dim * (dim + 1) / 2],
        }
    }

    fn slot(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        a * self.dim - a * (a + 1) / 2 + b
    }

    pub fn push(&mut self, values: &[f64]) {
        for a in 0..self.dim {
            for b in a..self.dim {
                let s = self.slot(a, b);
                self.entries[s].push(values[a] * values[b]);
            }
        }
    }

    pub fn merge(&mut self, other: &GramAccumulator) {
        for (x, y) in self.entries.iter_mut().zip(&other.entries) {
            x.merge(y);
        }
    }

    pub fn trials(&self) -> u64 {
        self.entries.first().map_or(0, |s| s.count)
    }

    /// Normalize by `√(V(G_a) V(G_b))`.
    pub fn finish(&self, proxies: &[f64]) -> GramResult {
        let dim = self.dim;
        let mut gram = Matrix::zeros(dim, dim);
        let mut se = Matrix::zeros(dim, dim);
        for a in 0..dim {
            for b in 0..dim {
                let s = &self.entries[self.slot(a, b)];
                let norm = (proxies[a] * proxies[b]).sqrt();
                gram[(a, b)] = s.mean / norm;
                se[(a, b)] = s.se() / norm;
            }
        }
        GramResult {
            gram,
            se,
            trials: self.trials(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramResult {
    pub gram: Matrix,
    pub se: Matrix,
    pub trials: u64,
}

impl GramResult {
    /// Largest `|Γ_ab − 1{a=b}| / SE_ab` over the entries with positive SE.
    pub fn max_identity_z(&self) -> f64 {
        let n = self.gram.rows();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let target = if a == b { 1.0 } else { 0.0 };
                let dev = (self.gram[(a, b)] - target).abs();
                let se = self.se[(a, b)];
                if se > 0.0 {
                    worst = worst.max(dev / se);
                } else if dev > 0.0 {
                    worst = f64::INFINITY;
                }
            }
        }
        worst
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.gram.rows();
        let mut m: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    m = m.max(self.gram[(a, b)].abs());
                }
            }
        }
        m
    }

    pub fn max_diagonal_deviation(&self) -> f64 {
        (0..self.gram.rows())
            .map(|a| (self.gram[(a, a)] - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Evaluates the `Ψ̃` family on fresh instances.
#[derive(Debug, Clone)]
pub struct GramSampler {
    evals: Vec<PsiEvaluator>,
    centerings: Vec<Vec<f64>>,
    proxies: Vec<f64>,
    instances: InstanceSampler,
    values: Vec<f64>,
}

impl GramSampler {
    pub fn new(templates: &[Template], p: &ModelParams) -> Result<Self> {
        p.validate()?;
        if templates.is_empty() {
            bail!(InvalidParams, "empty template family");
        }
        let ctx = HermiteContext::new(p.delta, p.k)?;
        let mut evals = Vec::with_capacity(templates.len());
        let mut centerings = Vec::with_capacity(templates.len());
        let mut proxies = Vec::with_capacity(templates.len());
        for t in templates {
            let e = PsiEvaluator::new(t, p.d, ctx)?;
            centerings.push(e.exact_centering()?);
            evals.push(e);
            proxies.push(variance_proxy(t, p)?);
        }
        Ok(GramSampler {
            evals,
            centerings,
            proxies,
            instances: InstanceSampler::new(*p)?,
            values: vec![0.0; templates.len()],
        })
    }

    pub fn proxies(&self) -> &[f64] {
        &self.proxies
    }

    /// Run `trials` instances from the stream of chunk `chunk_idx`.
    pub fn run_chunk(&mut self, seed: u64, chunk_idx: u64, trials: u64) -> Result<GramAccumulator> {
        let mut rng = sub_rng(seed, &[0x4752, chunk_idx]);
        let mut acc = GramAccumulator::new(self.evals.len());
        for _ in 0..trials {
            let y = &self.instances.draw(&mut rng, None).y;
            for (t, e) in self.evals.iter_mut().enumerate() {
                self.values[t] = e.psitilde(y, &self.centerings[t])?.value;
            }
            acc.push(&self.values);
        }
        Ok(acc)
    }
}

/// Monte Carlo Gram matrix `E[Ψ̃_a Ψ̃_b] / √(V(G_a) V(G_b))` over shared
/// instances, run sequentially in chunks of `chunk` trials.
pub fn gram_matrix(
    templates: &[Template],
    p: &ModelParams,
    trials: u64,
    seed: u64,
) -> Result<GramResult> {
    const CHUNK: u64 = 10_000;
    let mut sampler = GramSampler::new(templates, p)?;
    let mut acc = GramAccumulator::new(templates.len());
    let mut idx = 0;
    while acc.trials() < trials {
        let n = CHUNK.min(trials - acc.trials());
        acc.merge(&sampler.run_chunk(seed, idx, n)?);
        idx += 1;
    }
    Ok(acc.finish(sampler.proxies()))
}

/// Exact Gram matrix at `Δ = 0`, where `Ψ̃ = Ψ̄` and the cross moments are
/// sums over full pairings.
pub fn null_gram_matrix(templates: &[Template], n: usize, d: usize) -> Result<Matrix> {
    let p = ModelParams::new(n, d, 1, 0.0)?;
    let proxies = templates
        .iter()
        .map(|t| variance_proxy(t, &p))
        .collect::<Result<Vec<_>>>()?;
    let dim = templates.len();
    let mut g = Matrix::zeros(dim, dim);
    for a in 0..dim {
        for b in a..dim {
            let v = null_cross_moment(&templates[a], &templates[b], n, d)?
                .to_f64()
                .unwrap_or(f64::NAN)
                / (proxies[a] * proxies[b]).sqrt();
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    Ok(g)
}

/// Gershgorin bracket `1 ∓ max_a Σ_b |Γ − I|_ab` on the spectrum of a Gram
/// matrix whose diagonal is near one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenBracket {
    pub min_eig_lb: f64,
    pub max_eig_ub: f64,
    /// The lower end is positive.
    pub dominant: bool,
}

pub fn eigen_bracket(gram: &Matrix) -> Result<EigenBracket> {
    let n = gram.rows();
    if n != gram.cols() {
        bail!(InvalidParams, "Gram matrix must be square");
    }
    if gram.as_slice().iter().any(|x| !x.is_finite()) {
        bail!(InvalidParams, "Gram matrix has non-finite entries");
    }
    let radius = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    let target = if a == b { 1.0 } else { 0.0 };
                    (gram[(a, b)] - target).abs()
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    Ok(EigenBracket {
        min_eig_lb: 1.0 - radius,
        max_eig_ub: 1.0 + radius,
        dominant: radius < 1.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub template: Template,
    pub mean_x_psitilde: f64,
    pub variance_proxy: f64,
    /// `E[x Ψ̃_G]² / V(G)`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionTable {
    pub rows: Vec<Contribution>,
    pub total: f64,
    /// `1/K²`, the edgeless contribution.
    pub reference: f64,
}

/// Closed-form `E[x Ψ̃_G]² / V(G)` for each template.
pub fn corr_contributions(templates: &[Template], p: &ModelParams) -> Result<ContributionTable> {
    let mut rows = Vec::with_capacity(templates.len());
    let mut total = 0.0;
    for t in templates {
        let m = mean_x_psitilde(t, p)?;
        let v = variance_proxy(t, p)?;
        let value = m * m / v;
        total += value;
        rows.push(Contribution {
            template: t.clone(),
            mean_x_psitilde: m,
            variance_proxy: v,
            value,
        });
    }
    Ok(ContributionTable {
        rows,
        total,
        reference: 1.0 / (p.k * p.k) as f64,
    })
}
