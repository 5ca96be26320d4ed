//! Command-line surface. Exit codes: 0 success, 1 a verdict or assertion
//! failed, 2 usage or input error.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use clap::{Parser, Subcommand};
use lowdeg_core::audit::{corr_contributions, eigen_bracket, null_gram_matrix};
use lowdeg_core::baselines::{
    gram_identity_gap, hierarchical_clustering_with, path_polynomial_diagnostic, spectral_project,
    Linkage,
};
use lowdeg_core::estimator::{cluster_error, estimate_pair, pair_seed, EstimatorConfig};
use lowdeg_core::model::{functional_x, sample_instance, ModelParams};
use lowdeg_core::moments::{reference_suite, McBudget, MomentReport, Verdict};
use lowdeg_core::multigraph::enumerate_templates;
use lowdeg_core::rng::derive_seed;
use serde::Serialize;
use serde_json::json;

use crate::config::Config;
use crate::formats;
use crate::runner::{ordered_map, parallel_gram, run_moment_suite, with_threads};
use crate::sweep::{run_sweep, SweepPlan};

#[derive(Debug, Parser)]
#[command(name = "lowdeg", version, about = "Low-degree clustering experiments")]
pub struct Cli {
    /// key = value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Trial count; overrides `trials` in the config.
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Output path; standard output when omitted (gen defaults to instance.csv).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Refuse to run more than this many Monte Carlo trials.
    #[arg(long, global = true)]
    pub budget: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample an instance and write its data CSV and truth sidecar.
    Gen,
    /// Compare every closed-form moment with Monte Carlo.
    MomentsCheck,
    /// Test whether observations i and j share a mean direction.
    Estimate {
        /// Data CSV to use instead of sampling.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Grid sweep, one CSV row per trial; resumes a partial output file.
    Sweep {
        /// Record wall-clock time per row (otherwise 0).
        #[arg(long)]
        timing: bool,
    },
    /// Gram matrix, dominance bracket and correlation contributions.
    Audit,
    /// Distance and spectral baselines.
    Baseline,
}

#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(e) => write!(f, "error: {e:#}"),
            CliError::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Usage(e)
    }
}

impl From<lowdeg_core::Error> for CliError {
    fn from(e: lowdeg_core::Error) -> Self {
        CliError::Usage(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

struct Ctx {
    config: Config,
    seed: u64,
    trials: Option<u64>,
    out: Option<PathBuf>,
    budget: Option<u64>,
}

impl Ctx {
    fn trials_or(&self, default: u64) -> Result<u64> {
        match self.trials {
            Some(t) => Ok(t),
            None => self.config.get_or("trials", default),
        }
    }

    fn params(&self) -> Result<ModelParams> {
        let c = &self.config;
        let k: usize = c.require("K")?;
        Ok(ModelParams::new(
            c.require("n")?,
            c.get_or("d", k)?,
            k,
            c.require("delta")?,
        )?)
    }

    /// Print the work estimate and enforce `--budget`.
    fn capacity(&self, what: &str, trials: u64) -> Result<()> {
        eprintln!("{what}: about {trials} trials");
        if let Some(b) = self.budget {
            if trials > b {
                bail!("{what} needs {trials} trials, over the budget of {b}");
            }
        }
        Ok(())
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => std::fs::write(p, text)?,
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())?;
                out.flush()?;
            }
        }
        Ok(())
    }

    fn emit_json<T: Serialize>(&self, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.emit(&text)
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => config.get_or("seed", 0u64)?,
    };
    config.set("seed", seed);
    let ctx = Ctx {
        config,
        seed,
        trials: cli.trials,
        out: cli.out,
        budget: cli.budget,
    };
    let threads = cli.threads;
    let command = cli.command;
    with_threads(threads, move || match command {
        Command::Gen => cmd_gen(&ctx),
        Command::MomentsCheck => cmd_moments_check(&ctx),
        Command::Estimate { data } => cmd_estimate(&ctx, data.as_deref()),
        Command::Sweep { timing } => cmd_sweep(&ctx, timing),
        Command::Audit => cmd_audit(&ctx),
        Command::Baseline => cmd_baseline(&ctx),
    })?
}

fn cmd_gen(ctx: &Ctx) -> CliResult<()> {
    let p = ctx.params()?;
    let inst = sample_instance(&p, ctx.seed)?;
    let out = ctx
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("instance.csv"));
    formats::write_instance(&out, &inst, &p, ctx.seed)?;
    Ok(())
}

#[derive(Serialize)]
struct MomentsOutput {
    seed: u64,
    budget: McBudget,
    pass: usize,
    fail: usize,
    inconclusive: usize,
    reports: Vec<MomentReport>,
}

fn cmd_moments_check(ctx: &Ctx) -> CliResult<()> {
    let suite = reference_suite();
    let points = suite.len() as u64;
    let mut budget = match ctx.trials {
        Some(t) => McBudget::fixed(t),
        None => McBudget::default(),
    };
    if let Some(b) = ctx.budget {
        let cap = (b / points).max(1);
        budget.max_trials = budget.max_trials.min(cap);
        budget.min_trials = budget.min_trials.min(cap);
        budget.chunk_trials = budget.chunk_trials.min(cap);
    }
    ctx.capacity("moments-check", points * budget.max_trials)?;
    let scale: f64 = ctx.config.get_or("perturb", 1.0)?;
    let reports = run_moment_suite(&suite, ctx.seed, &budget, scale)?;
    let count = |v: Verdict| reports.iter().filter(|r| r.verdict == v).count();
    let out = MomentsOutput {
        seed: ctx.seed,
        budget,
        pass: count(Verdict::Pass),
        fail: count(Verdict::Fail),
        inconclusive: count(Verdict::Inconclusive),
        reports,
    };
    ctx.emit_json(&out)?;
    if out.fail > 0 {
        return Err(CliError::Failed(format!(
            "{} of {} moment checks failed",
            out.fail, points
        )));
    }
    Ok(())
}

fn estimator_config(c: &Config, n: usize, k: usize, delta: f64) -> Result<EstimatorConfig> {
    let mut est = EstimatorConfig::defaults(n, k, delta);
    est.l = c.get_or("L", est.l)?;
    est.m = c.get_or("M", est.m)?;
    est.lambda = c.get_or("lambda", est.lambda)?;
    est.robust = c.get_or("robust", false)?;
    est.override_threshold = c.get("threshold")?;
    est.validate()?;
    Ok(est)
}

fn cmd_estimate(ctx: &Ctx, data: Option<&Path>) -> CliResult<()> {
    let c = &ctx.config;
    let delta: f64 = c.require("delta")?;
    let k: usize = c.require("K")?;
    let (y, x) = match data {
        Some(path) => {
            let y = formats::read_matrix_csv(path)?;
            let x = formats::read_sidecar(path)?
                .map(|s| u8::from(s.kstar.first() == s.kstar.get(1)));
            (y, x)
        }
        None => {
            let inst = sample_instance(&ctx.params()?, ctx.seed)?;
            let x = functional_x(&inst);
            (inst.y, Some(x))
        }
    };
    if k > y.cols() {
        return Err(anyhow!("K = {} exceeds the data dimension {}", k, y.cols()).into());
    }
    let i: usize = c.get_or("i", 1)?;
    let j: usize = c.get_or("j", 2)?;
    if i == 0 || j == 0 || i == j || i.max(j) > y.rows() {
        return Err(anyhow!("rows i, j must be distinct and within 1..={}", y.rows()).into());
    }
    let est = estimator_config(c, y.rows(), k, delta)?;
    let (a, b) = (i.min(j) - 1, i.max(j) - 1);
    let dec = estimate_pair(&y, i - 1, j - 1, &est, pair_seed(ctx.seed, a, b))?;
    ctx.emit_json(&json!({
        "x_hat": dec.x_hat,
        "median_T": dec.median_t,
        "threshold": dec.threshold,
        "per_batch_T": dec.per_batch_t,
        "config": est,
        "seed": ctx.seed,
        "pair": [i, j],
        "x": x,
    }))?;
    Ok(())
}

fn cmd_sweep(ctx: &Ctx, timing: bool) -> CliResult<()> {
    let trials = ctx.trials_or(50)? as usize;
    let plan = SweepPlan::from_config(&ctx.config, trials, ctx.seed, timing)?;
    ctx.capacity("sweep", plan.rows() as u64)?;
    let out = ctx
        .out
        .clone()
        .ok_or_else(|| anyhow!("sweep needs --out for its CSV"))?;
    let fresh = run_sweep(&plan, &out)?;
    eprintln!("sweep: {fresh} new rows, {} total", plan.rows());
    Ok(())
}

fn cmd_audit(ctx: &Ctx) -> CliResult<()> {
    let c = &ctx.config;
    let p = ctx.params()?;
    let max_edges: usize = c.get_or("max_edges", 2)?;
    let even_only: bool = c.get_or("even_only", true)?;
    let trials = ctx.trials_or(20_000)?;
    let fam = enumerate_templates(max_edges, even_only)?;
    ctx.capacity("audit", trials)?;
    let gram = parallel_gram(&fam, &p, trials, ctx.seed)?;
    let bracket = eigen_bracket(&gram.gram)?;
    let contributions = corr_contributions(&fam, &p);
    let exact_null = if p.delta == 0.0 {
        Some(null_gram_matrix(&fam, p.n, p.d)?)
    } else {
        None
    };
    let rows = |m: &lowdeg_core::linalg::Matrix| -> Vec<Vec<f64>> {
        (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
    };
    ctx.emit_json(&json!({
        "params": p,
        "seed": ctx.seed,
        "templates": fam.iter().map(|t| t.to_text()).collect::<Vec<_>>(),
        "trials": gram.trials,
        "gram": rows(&gram.gram),
        "se": rows(&gram.se),
        "max_identity_z": gram.max_identity_z(),
        "max_off_diagonal": gram.max_off_diagonal(),
        "max_diagonal_deviation": gram.max_diagonal_deviation(),
        "bracket": bracket,
        "exact_null_gram": exact_null.as_ref().map(rows),
        "contributions": contributions.as_ref().ok(),
        "contributions_note": contributions.as_ref().err().map(|e| e.to_string()),
    }))?;
    Ok(())
}

#[derive(Serialize)]
struct BaselineRow {
    trial: u64,
    seed: u64,
    x: u8,
    hc_err: f64,
    spectral_err: f64,
    gram_gap: Option<f64>,
    path_value: f64,
}

fn cmd_baseline(ctx: &Ctx) -> CliResult<()> {
    let c = &ctx.config;
    let p = ctx.params()?;
    let trials = ctx.trials_or(20)?;
    let length: usize = c.get_or("path_length", 2)?;
    let linkage = match c.get::<String>("linkage")?.as_deref() {
        None | Some("single") => Linkage::Single,
        Some("complete") => Linkage::Complete,
        Some("average") => Linkage::Average,
        Some(other) => return Err(anyhow!("unknown linkage `{other}`").into()),
    };
    ctx.capacity("baseline", trials)?;
    let rows = ordered_map(trials as usize, |t| {
        let seed = derive_seed(ctx.seed, &[0x424c, t as u64]);
        let inst = sample_instance(&p, seed)?;
        let truth = inst.signed_labels();
        let groups = (2 * p.k).min(p.n);
        let hc = hierarchical_clustering_with(&inst.y, groups, linkage)?;
        let proj = spectral_project(&inst.y, p.k)?;
        let sp = hierarchical_clustering_with(&proj.projected, groups, linkage)?;
        Ok(BaselineRow {
            trial: t as u64,
            seed,
            x: functional_x(&inst),
            hc_err: cluster_error(&hc, &truth)?,
            spectral_err: cluster_error(&sp, &truth)?,
            gram_gap: if p.d == p.k {
                Some(gram_identity_gap(&inst.y, &p)?)
            } else {
                None
            },
            path_value: path_polynomial_diagnostic(&inst.y, length)?,
        })
    })?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(anyhow::Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("{e}"))?;
    ctx.emit(&String::from_utf8(bytes).map_err(anyhow::Error::from)?)?;
    Ok(())
}
