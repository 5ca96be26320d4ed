//! Grid sweeps over `(n, d, K, Δ, L, M, Λ)`: one CSV row per trial.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use lowdeg_core::baselines::{hierarchical_clustering, spectral_project};
use lowdeg_core::estimator::{cluster_error, estimate_pair, pair_seed, recover, EstimatorConfig};
use lowdeg_core::model::{functional_x, sample_instance, ModelParams};
use lowdeg_core::rng::derive_seed;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::runner::ordered_map;

pub const SWEEP_HEADER: &str = "n,d,K,delta,L,M,lambda,seed,x,x_hat,median_T,threshold,cluster_err,hc_err,spectral_err,runtime_ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub n: usize,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub delta: f64,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub lambda: usize,
    pub seed: u64,
    pub x: u8,
    pub x_hat: u8,
    #[serde(rename = "median_T")]
    pub median_t: f64,
    pub threshold: f64,
    pub cluster_err: f64,
    pub hc_err: f64,
    pub spectral_err: f64,
    pub runtime_ms: u64,
}

impl SweepRecord {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.d,
            self.k,
            self.delta,
            self.l,
            self.m,
            self.lambda,
            self.seed,
            self.x,
            self.x_hat,
            self.median_t,
            self.threshold,
            self.cluster_err,
            self.hc_err,
            self.spectral_err,
            self.runtime_ms
        )
    }

    /// Identifying prefix `n,…,seed`, used to check resumed files.
    fn key(&self) -> String {
        self.to_csv_line()
            .split(',')
            .take(8)
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// One grid point with its estimator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub params: ModelParams,
    pub estimator: EstimatorConfig,
}

impl SweepPoint {
    pub fn from_config(c: &Config) -> Result<SweepPoint> {
        let n: usize = c.require("n")?;
        let k: usize = c.require("K")?;
        let d: usize = c.get_or("d", k)?;
        let delta: f64 = c.require("delta")?;
        let params = ModelParams::new(n, d, k, delta)?;
        let mut est = EstimatorConfig::defaults(n, k, delta);
        est.l = c.get_or("L", est.l)?;
        est.m = c.get_or("M", est.m)?;
        est.lambda = c.get_or("lambda", est.lambda)?;
        est.robust = c.get_or("robust", false)?;
        est.override_threshold = c.get("threshold")?;
        est.validate()?;
        Ok(SweepPoint {
            params,
            estimator: est,
        })
    }
}

pub struct SweepPlan {
    pub points: Vec<SweepPoint>,
    pub trials: usize,
    pub seed: u64,
    pub timing: bool,
}

impl SweepPlan {
    pub fn from_config(c: &Config, trials: usize, seed: u64, timing: bool) -> Result<SweepPlan> {
        let points = c
            .grid_points()
            .iter()
            .map(SweepPoint::from_config)
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepPlan {
            points,
            trials,
            seed,
            timing,
        })
    }

    pub fn rows(&self) -> usize {
        self.points.len() * self.trials
    }

    /// Trial seeds are shared across grid points, so neighboring points see
    /// the same noise.
    pub fn row_seed(&self, row: usize) -> u64 {
        derive_seed(self.seed, &[0x5357, (row % self.trials) as u64])
    }

    pub fn run_row(&self, row: usize) -> Result<SweepRecord> {
        let pt = &self.points[row / self.trials];
        let seed = self.row_seed(row);
        let start = Instant::now();
        let inst = sample_instance(&pt.params, seed)?;
        let y = &inst.y;
        let est = &pt.estimator;
        let dec = estimate_pair(y, 0, 1, est, pair_seed(seed, 0, 1))?;
        let truth = inst.signed_labels();
        let rec = recover(y, est, seed)?;
        let groups = 2 * pt.params.k;
        let hc = hierarchical_clustering(y, groups.min(pt.params.n))?;
        let proj = spectral_project(y, pt.params.k)?;
        let spectral = hierarchical_clustering(&proj.projected, groups.min(pt.params.n))?;
        let runtime_ms = if self.timing {
            start.elapsed().as_millis() as u64
        } else {
            0
        };
        Ok(SweepRecord {
            n: pt.params.n,
            d: pt.params.d,
            k: pt.params.k,
            delta: pt.params.delta,
            l: est.l,
            m: est.m,
            lambda: est.lambda,
            seed,
            x: functional_x(&inst),
            x_hat: dec.x_hat,
            median_t: dec.median_t,
            threshold: dec.threshold,
            cluster_err: cluster_error(&rec.signed_labels, &truth)?,
            hc_err: cluster_error(&hc, &truth)?,
            spectral_err: cluster_error(&spectral, &truth)?,
            runtime_ms,
        })
    }

    /// Expected key of each row, for validating a partial file.
    fn row_key(&self, row: usize) -> String {
        let pt = &self.points[row / self.trials];
        format!(
            "{},{},{},{},{},{},{},{}",
            pt.params.n,
            pt.params.d,
            pt.params.k,
            pt.params.delta,
            pt.estimator.l,
            pt.estimator.m,
            pt.estimator.lambda,
            self.row_seed(row)
        )
    }
}

/// Complete rows already present in `path`. A trailing line without a
/// newline is treated as torn and dropped.
fn existing_rows(path: &Path, plan: &SweepPlan) -> Result<(usize, u64)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut complete_bytes: u64 = 0;
    let mut rows = 0usize;
    let mut first = true;
    loop {
        line.clear();
        let read = reader.read_line(&mut line)?;
        if read == 0 || !line.ends_with('\n') {
            break;
        }
        let body = line.trim_end_matches(['\n', '\r']);
        if first {
            if body != SWEEP_HEADER {
                bail!("{}: header does not match the sweep format", path.display());
            }
            first = false;
        } else {
            if rows >= plan.rows() {
                bail!("{}: more rows than the sweep defines", path.display());
            }
            let fields: Vec<&str> = body.split(',').collect();
            if fields.len() != 16 || fields[..8].join(",") != plan.row_key(rows) {
                bail!(
                    "{}: row {} does not belong to this sweep",
                    path.display(),
                    rows + 1
                );
            }
            rows += 1;
        }
        complete_bytes += read as u64;
    }
    Ok((rows, complete_bytes))
}

/// Run the sweep into `path`, resuming after any complete rows already
/// written by an identical plan. Returns the number of rows computed now.
pub fn run_sweep(plan: &SweepPlan, path: &Path) -> Result<usize> {
    let (done, keep_bytes) = if path.exists() {
        existing_rows(path, plan)?
    } else {
        (0, 0)
    };
    let mut file = if keep_bytes == 0 {
        let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        writeln!(f, "{SWEEP_HEADER}")?;
        f
    } else {
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(keep_bytes)?;
        let mut f = OpenOptions::new().append(true).open(path)?;
        f.flush()?;
        f
    };
    const BLOCK: usize = 64;
    let mut row = done;
    while row < plan.rows() {
        let end = (row + BLOCK).min(plan.rows());
        let records = ordered_map(end - row, |k| plan.run_row(row + k))?;
        for r in &records {
            debug_assert_eq!(r.key(), plan.row_key(row));
            writeln!(file, "{}", r.to_csv_line())?;
            row += 1;
        }
        file.flush()?;
    }
    Ok(plan.rows() - done)
}
