//! Monte Carlo oracles paired with the closed forms.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::hermite::{HermiteContext, PsiEvaluator};
use crate::model::{functional_x, InstanceSampler, ModelParams};
use crate::multigraph::{build_gstar, Template};
use crate::rng::{sub_rng, Rng};
use crate::stats::RunningStats;

/// A moment with both a closed form and a Monte Carlo estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MomentQuery {
    MeanPsibar {
        template: Template,
    },
    MeanXPsibar {
        template: Template,
    },
    MeanXPsitilde {
        template: Template,
    },
    CrossMomentLabeled {
        t1: Template,
        pi1: Vec<usize>,
        t2: Template,
        pi2: Vec<usize>,
    },
    SecondMomentPsibar {
        template: Template,
    },
    /// `Var(Ψ̄_{G*} | x)`; the Monte Carlo side averages `Ψ̄² − E[Ψ̄ | x]²`
    /// over draws conditioned on `x`.
    ConditionalVarianceGstar {
        l: usize,
        m: usize,
        x: bool,
    },
}

impl MomentQuery {
    pub fn name(&self) -> &'static str {
        match self {
            MomentQuery::MeanPsibar { .. } => "mean_psibar",
            MomentQuery::MeanXPsibar { .. } => "mean_x_psibar",
            MomentQuery::MeanXPsitilde { .. } => "mean_x_psitilde",
            MomentQuery::CrossMomentLabeled { .. } => "cross_moment_labeled",
            MomentQuery::SecondMomentPsibar { .. } => "second_moment_psibar",
            MomentQuery::ConditionalVarianceGstar { .. } => "conditional_variance_gstar",
        }
    }

    /// Short human-readable description of the query arguments.
    pub fn describe(&self) -> String {
        let edges = |t: &Template| format!("{}n{:?}", t.num_nodes(), t.edges());
        match self {
            MomentQuery::MeanPsibar { template }
            | MomentQuery::MeanXPsibar { template }
            | MomentQuery::MeanXPsitilde { template }
            | MomentQuery::SecondMomentPsibar { template } => edges(template),
            MomentQuery::CrossMomentLabeled { t1, pi1, t2, pi2 } => {
                format!("{} pi={:?} x {} pi={:?}", edges(t1), pi1, edges(t2), pi2)
            }
            MomentQuery::ConditionalVarianceGstar { l, m, x } => {
                format!("L={} M={} x={}", l, m, u8::from(*x))
            }
        }
    }

    pub fn closed_form(&self, p: &ModelParams) -> Result<f64> {
        match self {
            MomentQuery::MeanPsibar { template } => super::mean_psibar(template, p),
            MomentQuery::MeanXPsibar { template } => super::mean_x_psibar(template, p),
            MomentQuery::MeanXPsitilde { template } => super::mean_x_psitilde(template, p),
            MomentQuery::CrossMomentLabeled { t1, pi1, t2, pi2 } => {
                super::cross_moment_labeled(t1, pi1, t2, pi2, p)
            }
            MomentQuery::SecondMomentPsibar { template } => {
                super::second_moment_psibar(template, p)
            }
            MomentQuery::ConditionalVarianceGstar { l, m, x } => {
                let (v0, v1) = super::conditional_variances_gstar(*l, *m, p)?;
                Ok(if *x { v1 } else { v0 })
            }
        }
    }

    pub fn sampler(&self, p: &ModelParams) -> Result<TrialSampler> {
        TrialSampler::new(self.clone(), p)
    }
}

/// Produces one Monte Carlo sample of the query per call.
#[derive(Debug, Clone)]
pub struct TrialSampler {
    query: MomentQuery,
    instances: InstanceSampler,
    evals: Vec<PsiEvaluator>,
    centering: Vec<f64>,
    force_x: Option<bool>,
    /// Subtracted from `Ψ̄²` for conditional variances.
    mean_sq: f64,
}

impl TrialSampler {
    pub fn new(query: MomentQuery, p: &ModelParams) -> Result<Self> {
        p.validate()?;
        let ctx = HermiteContext::new(p.delta, p.k)?;
        let mut centering = Vec::new();
        let mut force_x = None;
        let mut mean_sq = 0.0;
        let evals = match &query {
            MomentQuery::MeanPsibar { template }
            | MomentQuery::MeanXPsibar { template }
            | MomentQuery::SecondMomentPsibar { template } => {
                alloc::vec![PsiEvaluator::new(template, p.d, ctx)?]
            }
            MomentQuery::MeanXPsitilde { template } => {
                let e = PsiEvaluator::new(template, p.d, ctx)?;
                centering = e.exact_centering()?;
                alloc::vec![e]
            }
            MomentQuery::CrossMomentLabeled { t1, t2, .. } => {
                alloc::vec![
                    PsiEvaluator::new(t1, p.d, ctx)?,
                    PsiEvaluator::new(t2, p.d, ctx)?
                ]
            }
            MomentQuery::ConditionalVarianceGstar { l, m, x } => {
                if !*x && p.k < 2 {
                    bail!(InvalidParams, "conditioning on x = 0 needs K ≥ 2");
                }
                force_x = Some(*x);
                if *x {
                    let mean = super::gstar_conditional_mean_poly(*l, *m, p)?.eval(p.delta);
                    mean_sq = mean * mean;
                }
                alloc::vec![PsiEvaluator::new(&build_gstar(*l, *m)?, p.d, ctx)?]
            }
        };
        Ok(TrialSampler {
            query,
            instances: InstanceSampler::new(*p)?,
            evals,
            centering,
            force_x,
            mean_sq,
        })
    }

    pub fn sample(&mut self, rng: &mut Rng) -> Result<f64> {
        let inst = self.instances.draw(rng, self.force_x);
        let y = &inst.y;
        match &self.query {
            MomentQuery::MeanPsibar { .. } => Ok(self.evals[0].psibar(y)?.value),
            MomentQuery::MeanXPsibar { .. } => {
                let x = functional_x(inst);
                if x == 0 {
                    return Ok(0.0);
                }
                Ok(self.evals[0].psibar(y)?.value)
            }
            MomentQuery::MeanXPsitilde { .. } => {
                let x = functional_x(inst);
                if x == 0 {
                    return Ok(0.0);
                }
                Ok(self.evals[0].psitilde(y, &self.centering)?.value)
            }
            MomentQuery::CrossMomentLabeled { pi1, pi2, .. } => {
                let a = self.evals[0].psibar_labeled(y, pi1)?;
                let b = self.evals[1].psibar_labeled(y, pi2)?;
                Ok(a * b)
            }
            MomentQuery::SecondMomentPsibar { .. } => {
                let v = self.evals[0].psibar(y)?.value;
                Ok(v * v)
            }
            MomentQuery::ConditionalVarianceGstar { .. } => {
                let v = self.evals[0].psibar(y)?.value;
                Ok(v * v - self.mean_sq)
            }
        }
    }
}

/// The default closed-form versus Monte Carlo suite: three parameter points
/// per operation. Signal strengths are large enough that the sample second
/// moments are not dominated by rare noise excursions.
pub fn reference_suite() -> Vec<(MomentQuery, ModelParams)> {
    let tpl =
        |r: usize, e: &[(usize, usize)]| Template::new(r, e.to_vec()).expect("fixed template");
    let de = tpl(2, &[(0, 1); 2]);
    let quad = tpl(2, &[(0, 1); 4]);
    let g = build_gstar(1, 1).expect("fixed template");
    let p = |n: usize, d: usize, k: usize, delta: f64| {
        ModelParams::new(n, d, k, delta).expect("fixed params")
    };
    let mean = |t: &Template| MomentQuery::MeanPsibar {
        template: t.clone(),
    };
    let mean_x = |t: &Template| MomentQuery::MeanXPsibar {
        template: t.clone(),
    };
    let mean_xt = |t: &Template| MomentQuery::MeanXPsitilde {
        template: t.clone(),
    };
    let second = |t: &Template| MomentQuery::SecondMomentPsibar {
        template: t.clone(),
    };
    let cross = |t1: &Template, pi1: &[usize], t2: &Template, pi2: &[usize]| {
        MomentQuery::CrossMomentLabeled {
            t1: t1.clone(),
            pi1: pi1.to_vec(),
            t2: t2.clone(),
            pi2: pi2.to_vec(),
        }
    };
    let var = |x: bool| MomentQuery::ConditionalVarianceGstar { l: 1, m: 1, x };
    alloc::vec![
        (mean(&de), p(6, 2, 2, 5.0)),
        (mean(&quad), p(5, 2, 2, 4.0)),
        (mean(&g), p(6, 3, 3, 5.0)),
        (mean_x(&g), p(6, 2, 2, 5.0)),
        (mean_x(&de), p(5, 3, 3, 5.0)),
        (mean_x(&quad), p(4, 2, 2, 5.0)),
        (mean_xt(&g), p(6, 2, 2, 6.0)),
        (mean_xt(&g), p(7, 3, 3, 6.0)),
        (mean_xt(&de), p(5, 2, 2, 5.0)),
        (cross(&de, &[0, 1], &de, &[0, 1]), p(6, 2, 2, 5.0)),
        (cross(&de, &[0, 1], &g, &[0, 1, 2]), p(6, 2, 2, 5.0)),
        (cross(&de, &[0, 1], &quad, &[0, 1]), p(5, 3, 3, 6.0)),
        (second(&quad), p(4, 2, 2, 6.0)),
        (second(&de), p(6, 2, 2, 5.0)),
        (second(&g), p(5, 2, 2, 6.0)),
        (var(false), p(5, 2, 2, 5.0)),
        (var(true), p(5, 2, 2, 5.0)),
        (var(false), p(6, 3, 3, 6.0)),
        (var(true), p(6, 3, 3, 6.0)),
        (var(false), p(4, 2, 2, 6.0)),
        (var(true), p(4, 2, 2, 6.0)),
    ]
}

/// Run `trials` samples from the chunk's own stream. Chunks with distinct
/// indices are independent; merging them in index order is deterministic.
pub fn mc_chunk(
    query: &MomentQuery,
    p: &ModelParams,
    seed: u64,
    chunk_idx: u64,
    trials: u64,
) -> Result<RunningStats> {
    let mut sampler = query.sampler(p)?;
    let mut rng = sub_rng(seed, &[0x4d43, chunk_idx]);
    let mut stats = RunningStats::new();
    for _ in 0..trials {
        stats.push(sampler.sample(&mut rng)?);
    }
    Ok(stats)
}

/// Whether `stats` already meets the precision target relative to `reference`.
pub fn precision_met(stats: &RunningStats, reference: f64) -> bool {
    stats.count >= 2 && stats.se() <= (SE_RELATIVE_TARGET * reference.abs()).max(SE_ABSOLUTE_FLOOR)
}

/// Trial budget for an adaptive Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McBudget {
    pub chunk_trials: u64,
    /// Trials always spent before the stopping rule is consulted; small
    /// samples of heavy-tailed products understate their own spread.
    pub min_trials: u64,
    pub max_trials: u64,
}

impl Default for McBudget {
    fn default() -> Self {
        McBudget {
            chunk_trials: 250_000,
            min_trials: 500_000,
            max_trials: 8_000_000,
        }
    }
}

impl McBudget {
    /// Exactly `trials` samples in one chunk.
    pub fn fixed(trials: u64) -> Self {
        McBudget {
            chunk_trials: trials.max(1),
            min_trials: trials,
            max_trials: trials,
        }
    }

    /// Whether another chunk should run given the stats so far.
    pub fn wants_more(&self, stats: &RunningStats, reference: f64) -> bool {
        stats.count < self.max_trials
            && (stats.count < self.min_trials || !precision_met(stats, reference))
    }

    /// Size of the next chunk.
    pub fn next_chunk(&self, done: u64) -> u64 {
        self.chunk_trials.min(self.max_trials.saturating_sub(done))
    }
}

/// Run chunks in index order until the budget's stopping rule is satisfied
/// against `reference`.
pub fn mc_until(
    query: &MomentQuery,
    p: &ModelParams,
    seed: u64,
    reference: f64,
    budget: &McBudget,
) -> Result<RunningStats> {
    if budget.chunk_trials == 0 {
        bail!(InvalidParams, "chunk size must be positive");
    }
    let mut stats = RunningStats::new();
    let mut idx = 0;
    while budget.wants_more(&stats, reference) {
        let n = budget.next_chunk(stats.count);
        stats.merge(&mc_chunk(query, p, seed, idx, n)?);
        idx += 1;
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Agreement within 3 SE but the standard error is above the precision
    /// target, so the comparison is not informative enough.
    Inconclusive,
}

/// Relative precision target for the Monte Carlo standard error.
pub const SE_RELATIVE_TARGET: f64 = 0.01;
/// Absolute precision floor for the Monte Carlo standard error.
pub const SE_ABSOLUTE_FLOOR: f64 = 1e-3;
/// Below this many trials the sample standard error of a heavy-tailed
/// integrand is itself unreliable, so a disagreement is not called a failure.
pub const MIN_DECISIVE_TRIALS: u64 = 1000;

pub fn verdict(closed_form: f64, mc_estimate: f64, mc_se: f64) -> Verdict {
    if !closed_form.is_finite()
        || !mc_estimate.is_finite()
        || (closed_form - mc_estimate).abs() > 3.0 * mc_se
    {
        return Verdict::Fail;
    }
    if mc_se <= (SE_RELATIVE_TARGET * closed_form.abs()).max(SE_ABSOLUTE_FLOOR) {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub operation: String,
    pub arguments: String,
    pub params: ModelParams,
    pub closed_form: f64,
    pub mc_estimate: f64,
    pub mc_se: f64,
    pub n_trials: u64,
    pub verdict: Verdict,
}

impl MomentReport {
    pub fn new(
        query: &MomentQuery,
        p: &ModelParams,
        closed_form: f64,
        stats: &RunningStats,
    ) -> Self {
        let mc_se = stats.se();
        let mut v = verdict(closed_form, stats.mean, mc_se);
        if v == Verdict::Fail
            && stats.count < MIN_DECISIVE_TRIALS
            && closed_form.is_finite()
            && stats.mean.is_finite()
        {
            v = Verdict::Inconclusive;
        }
        MomentReport {
            operation: query.name().into(),
            arguments: query.describe(),
            params: *p,
            closed_form,
            mc_estimate: stats.mean,
            mc_se,
            n_trials: stats.count,
            verdict: v,
        }
    }
}
