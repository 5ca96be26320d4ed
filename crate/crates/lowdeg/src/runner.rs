//! Parallel Monte Carlo drivers. Work is split into indexed units whose
//! random streams depend only on the index; results are collected in index
//! order, so outputs do not depend on the number of threads.

use anyhow::Result;
use lowdeg_core::audit::{GramAccumulator, GramResult, GramSampler};
use lowdeg_core::model::ModelParams;
use lowdeg_core::moments::{mc_until, McBudget, MomentQuery, MomentReport};
use lowdeg_core::multigraph::Template;
use lowdeg_core::rng::derive_seed;
use rayon::prelude::*;

/// Run `f` inside a pool of `threads` workers (rayon's default when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    Ok(builder.build()?.install(f))
}

/// `f(0), …, f(count − 1)` in parallel, returned in index order.
pub fn ordered_map<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

/// Closed form against adaptive Monte Carlo for each point; `scale`
/// multiplies the closed forms (1 in normal use).
pub fn run_moment_suite(
    suite: &[(MomentQuery, ModelParams)],
    seed: u64,
    budget: &McBudget,
    scale: f64,
) -> Result<Vec<MomentReport>> {
    ordered_map(suite.len(), |idx| {
        let (q, p) = &suite[idx];
        let cf = q.closed_form(p)? * scale;
        let stats = mc_until(q, p, derive_seed(seed, &[idx as u64]), cf, budget)?;
        Ok(MomentReport::new(q, p, cf, &stats))
    })
}

pub const GRAM_CHUNK: u64 = 10_000;

/// Monte Carlo Gram matrix with chunks run in parallel and merged in order;
/// equal to `lowdeg_core::audit::gram_matrix` for the same arguments.
pub fn parallel_gram(
    templates: &[Template],
    p: &ModelParams,
    trials: u64,
    seed: u64,
) -> Result<GramResult> {
    let sampler = GramSampler::new(templates, p)?;
    let chunks = trials.div_ceil(GRAM_CHUNK) as usize;
    let parts = ordered_map(chunks, |idx| {
        let done = idx as u64 * GRAM_CHUNK;
        let n = GRAM_CHUNK.min(trials - done);
        Ok(sampler.clone().run_chunk(seed, idx as u64, n)?)
    })?;
    let mut acc = GramAccumulator::new(templates.len());
    for part in &parts {
        acc.merge(part);
    }
    Ok(acc.finish(sampler.proxies()))
}
