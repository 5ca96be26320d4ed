//! Pairwise test for `x = 1{k*(i) = k*(j)}` from `Ψ̄_{G*}` with sample
//! splitting and a median-of-means decision, plus partition assembly, sign
//! recovery and the alignment loss.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::hermite::{HermiteContext, PsiEvaluator};
use crate::linalg::{constant_first_column_orthogonal, dot, hungarian, Matrix};
use crate::multigraph::{build_gstar, Template, UnionFind};
use crate::rng::{derive_seed, rng_from, sub_rng};
use crate::stats::median;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub lambda: usize,
    pub delta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub override_threshold: Option<f64>,
    /// Drop same-group edges whose margin over the threshold is below 10%.
    pub robust: bool,
}

/// Smallest odd integer `≥ x` (and `≥ 1`).
pub fn smallest_odd_at_least(x: f64) -> usize {
    let c = if x.is_finite() && x > 1.0 {
        x.ceil() as usize
    } else {
        1
    };
    if c % 2 == 0 {
        c + 1
    } else {
        c
    }
}

impl EstimatorConfig {
    /// Defaults for sample size `n`: `M` the smallest odd integer at least
    /// `max(ln K, 24)`, `L = max(1, ⌊ln K⌋)`, `Λ = ⌈24 ln n⌉` made odd.
    pub fn defaults(n: usize, k: usize, delta: f64) -> Self {
        let ln_k = (k.max(1) as f64).ln();
        EstimatorConfig {
            l: (ln_k.floor() as usize).max(1),
            m: smallest_odd_at_least(ln_k.max(24.0)),
            lambda: smallest_odd_at_least((24.0 * (n.max(2) as f64).ln()).ceil()),
            delta,
            k,
            override_threshold: None,
            robust: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda == 0 || self.lambda % 2 == 0 {
            bail!(
                InvalidParams,
                "Λ must be a positive odd integer (got {})",
                self.lambda
            );
        }
        if self.l == 0 || self.m == 0 || self.m % 2 == 0 {
            bail!(
                InvalidParams,
                "need L ≥ 1 and M odd (got L={}, M={})",
                self.l,
                self.m
            );
        }
        if self.k == 0 || !(self.delta >= 0.0) || !self.delta.is_finite() {
            bail!(InvalidParams, "need K ≥ 1 and finite Δ ≥ 0");
        }
        if let Some(t) = self.override_threshold {
            if !t.is_finite() {
                bail!(InvalidParams, "threshold override must be finite");
            }
        }
        Ok(())
    }

    pub fn template(&self) -> Result<Template> {
        build_gstar(self.l, self.m)
    }

    /// Context for the split batches: `Δ/√Λ` in the degree-2 correction.
    pub fn batch_context(&self) -> Result<HermiteContext> {
        Ok(HermiteContext::new(self.delta, self.k)?.for_batches(self.lambda))
    }
}

/// Batches for one pair `(i, j)`. Every row is split into `Λ` copies with
/// mean shrunk by `√Λ`; batch `ℓ` uses copy `ℓ` of rows `i`, `j` and of the
/// rows in `J_ℓ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitData {
    pub lambda: usize,
    pub batch_size: usize,
    pub discarded: usize,
    /// Original row indices of each `J_ℓ`.
    pub batches: Vec<Vec<usize>>,
    /// Per batch, the `(2 + batch_size) × d` data: copy `ℓ` of rows `i`, `j`
    /// followed by copy `ℓ` of the rows in `J_ℓ`.
    pub data: Vec<Matrix>,
}

const SPLIT_STREAM: u64 = 0x5350;

/// Copy `ell` of row `r` under `O_Λ (Y_r, Z'_1, …, Z'_{Λ−1})ᵀ`, with the
/// auxiliary Gaussians drawn from a stream keyed by `(seed, r)`.
fn split_copy(y: &Matrix, r: usize, ell: usize, o: &Matrix, seed: u64, out: &mut [f64]) {
    let lambda = o.rows();
    let d = y.cols();
    let mut rng = sub_rng(seed, &[SPLIT_STREAM, r as u64]);
    for (dst, &v) in out.iter_mut().zip(y.row(r)) {
        *dst = o[(ell, 0)] * v;
    }
    let mut z = vec![0.0; d];
    for m in 1..lambda {
        for zj in z.iter_mut() {
            *zj = StandardNormal.sample(&mut rng);
        }
        let w = o[(ell, m)];
        for (dst, &zj) in out.iter_mut().zip(&z) {
            *dst += w * zj;
        }
    }
}

pub fn split_samples(
    y: &Matrix,
    i: usize,
    j: usize,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<SplitData> {
    cfg.validate()?;
    let n = y.rows();
    if i >= n || j >= n || i == j {
        bail!(
            InvalidParams,
            "rows ({}, {}) must be distinct and below n = {}",
            i,
            j,
            n
        );
    }
    let interior = cfg.template()?.num_nodes() - 2;
    let lambda = cfg.lambda;
    let rest: Vec<usize> = (0..n).filter(|&r| r != i && r != j).collect();
    let batch_size = rest.len() / lambda;
    if batch_size == 0 || batch_size < interior {
        bail!(
            InsufficientSamples,
            "{} rows besides the pair give batches of {} for Λ = {}, need {}",
            rest.len(),
            batch_size,
            lambda,
            interior.max(1)
        );
    }
    let o = constant_first_column_orthogonal(lambda);
    let d = y.cols();
    let mut batches = Vec::with_capacity(lambda);
    let mut data = Vec::with_capacity(lambda);
    for ell in 0..lambda {
        let rows = rest[ell * batch_size..(ell + 1) * batch_size].to_vec();
        let mut m = Matrix::zeros(2 + batch_size, d);
        split_copy(y, i, ell, &o, seed, m.row_mut(0));
        split_copy(y, j, ell, &o, seed, m.row_mut(1));
        for (t, &r) in rows.iter().enumerate() {
            split_copy(y, r, ell, &o, seed, m.row_mut(2 + t));
        }
        batches.push(rows);
        data.push(m);
    }
    Ok(SplitData {
        lambda,
        batch_size,
        discarded: rest.len() - lambda * batch_size,
        batches,
        data,
    })
}

/// `½ · ff(b, |V|−2) · Δ^{2|E|} / (Λ^{|E|} K^{|V|−2})` for batches of `b`
/// rows, or the configured override.
pub fn decision_threshold(cfg: &EstimatorConfig, batch_size: usize) -> Result<f64> {
    if let Some(t) = cfg.override_threshold {
        return Ok(t);
    }
    let g = cfg.template()?;
    let interior = g.num_nodes() - 2;
    let e = g.num_edges() as f64;
    if batch_size < interior {
        return Ok(0.0);
    }
    let ln_ff: f64 = (0..interior)
        .map(|t| (batch_size as f64 - t as f64).ln())
        .sum();
    let ln_t0 = ln_ff + 2.0 * e * cfg.delta.ln()
        - e * (cfg.lambda as f64).ln()
        - interior as f64 * (cfg.k as f64).ln();
    Ok(0.5 * ln_t0.exp())
}

/// Outcome of the median-of-means test for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub x_hat: u8,
    pub median_t: f64,
    pub threshold: f64,
    pub per_batch_t: Vec<f64>,
}

impl Decision {
    /// `(median − threshold) / |threshold|`, or the raw gap for a zero threshold.
    pub fn margin(&self) -> f64 {
        let gap = self.median_t - self.threshold;
        if self.threshold == 0.0 {
            gap
        } else {
            gap / self.threshold.abs()
        }
    }
}

/// `x̂ = 1{median(T) > threshold}`.
pub fn decide(per_batch_t: Vec<f64>, threshold: f64) -> Decision {
    let median_t = median(&per_batch_t);
    Decision {
        x_hat: u8::from(median_t > threshold),
        median_t,
        threshold,
        per_batch_t,
    }
}

/// Evaluates the pairwise test repeatedly with one prepared `Ψ̄_{G*}`
/// evaluator.
#[derive(Debug, Clone)]
pub struct PairTester {
    cfg: EstimatorConfig,
    eval: PsiEvaluator,
}

impl PairTester {
    pub fn new(cfg: &EstimatorConfig, d: usize) -> Result<Self> {
        cfg.validate()?;
        let eval = PsiEvaluator::new(&cfg.template()?, d, cfg.batch_context()?)?;
        Ok(PairTester { cfg: *cfg, eval })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    /// `T^{(ℓ)}`: `Ψ̄_{G*}` on batch `ℓ`.
    pub fn t_statistic(&mut self, split: &SplitData, ell: usize) -> Result<f64> {
        if ell >= split.data.len() {
            bail!(InvalidParams, "batch {} out of range", ell);
        }
        Ok(self.eval.psibar(&split.data[ell])?.value)
    }

    pub fn mom_decision(&mut self, split: &SplitData) -> Result<Decision> {
        let ts = (0..split.lambda)
            .map(|ell| self.t_statistic(split, ell))
            .collect::<Result<Vec<_>>>()?;
        Ok(decide(ts, decision_threshold(&self.cfg, split.batch_size)?))
    }

    pub fn test_pair(&mut self, y: &Matrix, i: usize, j: usize, seed: u64) -> Result<Decision> {
        let split = split_samples(y, i, j, &self.cfg, seed)?;
        self.mom_decision(&split)
    }
}

pub fn t_statistic(split: &SplitData, ell: usize, cfg: &EstimatorConfig) -> Result<f64> {
    let d = split.data.first().map_or(0, |m| m.cols());
    PairTester::new(cfg, d)?.t_statistic(split, ell)
}

pub fn mom_decision(split: &SplitData, cfg: &EstimatorConfig) -> Result<Decision> {
    let d = split.data.first().map_or(0, |m| m.cols());
    PairTester::new(cfg, d)?.mom_decision(split)
}

/// Test `x` for rows `(i, j)` of `y`.
pub fn estimate_pair(
    y: &Matrix,
    i: usize,
    j: usize,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<Decision> {
    PairTester::new(cfg, y.cols())?.test_pair(y, i, j, seed)
}

/// Seed used for the pair `(i, j)`, `i < j`.
pub fn pair_seed(seed: u64, i: usize, j: usize) -> u64 {
    derive_seed(seed, &[0x5041, i as u64, j as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    /// Group of each row, numbered by first appearance.
    pub labels: Vec<usize>,
    pub num_components: usize,
    /// Number of same-group edges kept.
    pub edges: usize,
    /// The component count differs from `K`.
    pub degenerate: bool,
}

/// Connected components of the same-group graph on `n` rows. `same(i, j)`
/// is queried for every `i < j`.
pub fn assemble_partition<F>(n: usize, k: usize, mut same: F) -> Result<PartitionResult>
where
    F: FnMut(usize, usize) -> Result<bool>,
{
    let mut uf = UnionFind::new(n);
    let mut edges = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if same(i, j)? {
                uf.union(i, j);
                edges += 1;
            }
        }
    }
    let labels = uf.labels();
    let next = labels.iter().max().map_or(0, |m| m + 1);
    Ok(PartitionResult {
        labels,
        num_components: next,
        edges,
        degenerate: next != k,
    })
}

/// Run the pairwise test on every pair and return the components of the
/// resulting same-group graph.
pub fn pairwise_partition(y: &Matrix, cfg: &EstimatorConfig, seed: u64) -> Result<PartitionResult> {
    let mut tester = PairTester::new(cfg, y.cols())?;
    let robust = cfg.robust;
    assemble_partition(y.rows(), cfg.k, |i, j| {
        let dec = tester.test_pair(y, i, j, pair_seed(seed, i, j))?;
        Ok(dec.x_hat == 1 && (!robust || dec.margin() >= 0.1))
    })
}

const POWER_STEPS: usize = 100;
const POWER_TOL: f64 = 1e-8;

/// Signs of the rows of one group from the dominant eigenvector of
/// `Σ_i Y_i Y_iᵀ`, flipped so that the first row gets `+1`.
pub fn sign_recovery(rows: &Matrix, seed: u64) -> Result<Vec<i8>> {
    let (n, d) = (rows.rows(), rows.cols());
    if n == 0 {
        bail!(InvalidParams, "sign recovery needs a nonempty group");
    }
    let a = rows.gram();
    let mut rng = rng_from(derive_seed(seed, &[0x5347]));
    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);
    for _ in 0..POWER_STEPS {
        let mut w: Vec<f64> = (0..d).map(|r| dot(a.row(r), &v)).collect();
        if !normalize(&mut w) {
            break;
        }
        let flip = if dot(&w, &v) < 0.0 { -1.0 } else { 1.0 };
        let change: f64 = w
            .iter()
            .zip(&v)
            .map(|(x, y)| (flip * x - y) * (flip * x - y))
            .sum::<f64>()
            .sqrt();
        v = w;
        if change < POWER_TOL {
            break;
        }
    }
    let mut signs: Vec<i8> = (0..n)
        .map(|i| if dot(rows.row(i), &v) < 0.0 { -1 } else { 1 })
        .collect();
    if signs[0] < 0 {
        signs.iter_mut().for_each(|s| *s = -*s);
    }
    Ok(signs)
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = dot(v, v).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Groups from the pairwise test, each split by sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub partition: PartitionResult,
    pub signs: Vec<i8>,
    /// `2 · group + [sign = −1]`.
    pub signed_labels: Vec<usize>,
}

pub fn recover(y: &Matrix, cfg: &EstimatorConfig, seed: u64) -> Result<Recovery> {
    let partition = pairwise_partition(y, cfg, seed)?;
    let n = y.rows();
    let mut signs = vec![1i8; n];
    for g in 0..partition.num_components {
        let members: Vec<usize> = (0..n).filter(|&i| partition.labels[i] == g).collect();
        let s = sign_recovery(
            &y.select_rows(&members),
            derive_seed(seed, &[0x5352, g as u64]),
        )?;
        for (&i, &si) in members.iter().zip(&s) {
            signs[i] = si;
        }
    }
    let signed_labels = partition
        .labels
        .iter()
        .zip(&signs)
        .map(|(&g, &s)| 2 * g + usize::from(s < 0))
        .collect();
    Ok(Recovery {
        partition,
        signs,
        signed_labels,
    })
}

/// Label vector from explicit groups; every element of `0..n` must appear
/// exactly once.
pub fn labels_from_groups(groups: &[Vec<usize>], n: usize) -> Result<Vec<usize>> {
    let mut labels = vec![usize::MAX; n];
    for (g, members) in groups.iter().enumerate() {
        for &i in members {
            if i >= n {
                bail!(InvalidPartition, "element {} outside 0..{}", i, n);
            }
            if labels[i] != usize::MAX {
                bail!(InvalidPartition, "element {} appears twice", i);
            }
            labels[i] = g;
        }
    }
    if let Some(i) = labels.iter().position(|&l| l == usize::MAX) {
        bail!(InvalidPartition, "element {} is missing", i);
    }
    Ok(labels)
}

/// Renumber labels `0..m` by first appearance; returns `(compact, m)`.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut seen: Vec<usize> = Vec::new();
    let out = labels
        .iter()
        .map(|l| match seen.iter().position(|s| s == l) {
            Some(p) => p,
            None => {
                seen.push(*l);
                seen.len() - 1
            }
        })
        .collect();
    (out, seen.len())
}

/// `|Ŝ_a Δ S*_b|` for every pair of groups, padded with empty groups to a
/// square matrix.
fn symmetric_difference_costs(est: &[usize], truth: &[usize]) -> Result<Matrix> {
    if est.len() != truth.len() {
        bail!(
            InvalidPartition,
            "partitions cover {} and {} elements",
            est.len(),
            truth.len()
        );
    }
    let (e, me) = compact(est);
    let (t, mt) = compact(truth);
    let m = me.max(mt);
    let mut size_e = vec![0usize; m];
    let mut size_t = vec![0usize; m];
    let mut inter = vec![0usize; m * m];
    for (&a, &b) in e.iter().zip(&t) {
        size_e[a] += 1;
        size_t[b] += 1;
        inter[a * m + b] += 1;
    }
    let mut cost = Matrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            cost[(a, b)] = (size_e[a] + size_t[b] - 2 * inter[a * m + b]) as f64;
        }
    }
    Ok(cost)
}

/// `(1/2n) · min_s Σ_k |Ŝ_{s(k)} Δ S*_k|` by optimal assignment.
pub fn cluster_error(est: &[usize], truth: &[usize]) -> Result<f64> {
    let cost = symmetric_difference_costs(est, truth)?;
    if est.is_empty() {
        return Ok(0.0);
    }
    let (_, total) = hungarian(&cost);
    Ok(total / (2.0 * est.len() as f64))
}

const BRUTE_FORCE_MAX_GROUPS: usize = 9;

/// Same loss by enumerating every permutation.
pub fn cluster_error_brute_force(est: &[usize], truth: &[usize]) -> Result<f64> {
    let cost = symmetric_difference_costs(est, truth)?;
    let m = cost.rows();
    if m > BRUTE_FORCE_MAX_GROUPS {
        bail!(Capacity, "{} groups is too many for permutation search", m);
    }
    if est.is_empty() {
        return Ok(0.0);
    }
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let c: f64 = (0..m).map(|a| cost[(a, p[a])]).sum();
        best = best.min(c);
    });
    Ok(best / (2.0 * est.len() as f64))
}

fn permute(p: &mut [usize], at: usize, f: &mut impl FnMut(&[usize])) {
    if at == p.len() {
        f(p);
        return;
    }
    for i in at..p.len() {
        p.swap(at, i);
        permute(p, at + 1, f);
        p.swap(at, i);
    }
}
