//! Orthogonal-means Gaussian mixture: `Y_i = b_i μ_{k*(i)} + Z_i` with
//! pairwise orthogonal means of norm Δ, uniform labels and Rademacher signs.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::linalg::{orthonormalize_columns, Matrix};
use crate::rng::{derive_seed, rng_from, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub delta: f64,
}

impl ModelParams {
    pub fn new(n: usize, d: usize, k: usize, delta: f64) -> Result<Self> {
        let p = ModelParams { n, d, k, delta };
        p.validate()?;
        Ok(p)
    }

    /// Δ = 0 is accepted (pure noise); every count must be positive.
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            bail!(InvalidParams, "n must be at least 3 (got {})", self.n);
        }
        if self.d == 0 || self.k == 0 {
            bail!(InvalidParams, "d and K must be positive");
        }
        if self.k > self.d {
            bail!(InvalidParams, "K = {} exceeds d = {}", self.k, self.d);
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            bail!(
                InvalidParams,
                "delta must be finite and non-negative (got {})",
                self.delta
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub y: Matrix,
    pub mu: Matrix,
    /// Hidden group of each row, 0-based.
    pub kstar: Vec<usize>,
    /// Hidden sign of each row.
    pub b: Vec<i8>,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.y.rows()
    }

    pub fn d(&self) -> usize {
        self.y.cols()
    }

    /// Signal part `X_i = b_i μ_{k*(i)}`.
    pub fn signal(&self) -> Matrix {
        let mut x = Matrix::zeros(self.n(), self.d());
        for i in 0..self.n() {
            let s = self.b[i] as f64;
            let mu = self.mu.row(self.kstar[i]);
            for (dst, &m) in x.row_mut(i).iter_mut().zip(mu) {
                *dst = s * m;
            }
        }
        x
    }

    /// Labels of the 2K signed groups: `2·k* + [b = −1]`.
    pub fn signed_labels(&self) -> Vec<usize> {
        self.kstar
            .iter()
            .zip(&self.b)
            .map(|(&k, &s)| 2 * k + usize::from(s < 0))
            .collect()
    }
}

/// `x = 1{k*(1) = k*(2)}`.
pub fn functional_x(inst: &Instance) -> u8 {
    u8::from(inst.kstar[0] == inst.kstar[1])
}

fn fill_means(params: &ModelParams, rng: &mut Rng, out: &mut Matrix) -> Result<()> {
    let mut g = Matrix::zeros(params.d, params.k);
    for v in g.as_mut_slice() {
        *v = rng.sample(StandardNormal);
    }
    let q = orthonormalize_columns(&g)?;
    for k in 0..params.k {
        for j in 0..params.d {
            out[(k, j)] = params.delta * q[(j, k)];
        }
    }
    Ok(())
}

/// K×d matrix of pairwise orthogonal means of norm Δ, rotation invariant in law.
pub fn sample_means(params: &ModelParams, seed: u64) -> Result<Matrix> {
    params.validate()?;
    let mut rng = rng_from(seed);
    let mut mu = Matrix::zeros(params.k, params.d);
    fill_means(params, &mut rng, &mut mu)?;
    Ok(mu)
}

const MEANS_STREAM: u64 = 1;
const DATA_STREAM: u64 = 2;

pub fn sample_instance(params: &ModelParams, seed: u64) -> Result<Instance> {
    params.validate()?;
    let mu = sample_means(params, derive_seed(seed, &[MEANS_STREAM]))?;
    let mut rng = rng_from(derive_seed(seed, &[DATA_STREAM]));
    let mut inst = Instance {
        y: Matrix::zeros(params.n, params.d),
        mu,
        kstar: vec![0; params.n],
        b: vec![1; params.n],
    };
    fill_labels_and_data(params, &mut rng, &mut inst, None);
    Ok(inst)
}

fn fill_labels_and_data(
    params: &ModelParams,
    rng: &mut Rng,
    inst: &mut Instance,
    force_x: Option<bool>,
) {
    for i in 0..params.n {
        inst.kstar[i] = rng.random_range(0..params.k);
        inst.b[i] = if rng.random::<bool>() { 1 } else { -1 };
    }
    match force_x {
        Some(true) => inst.kstar[1] = inst.kstar[0],
        Some(false) if params.k > 1 => {
            let other = rng.random_range(0..params.k - 1);
            inst.kstar[1] = if other >= inst.kstar[0] {
                other + 1
            } else {
                other
            };
        }
        _ => {}
    }
    for i in 0..params.n {
        let s = inst.b[i] as f64;
        let k = inst.kstar[i];
        for j in 0..params.d {
            let z: f64 = rng.sample(StandardNormal);
            inst.y[(i, j)] = s * inst.mu[(k, j)] + z;
        }
    }
}

/// Reusable sampler for Monte Carlo loops: one instance buffer, fresh draws
/// of means, labels, signs and noise on each call.
#[derive(Debug, Clone)]
pub struct InstanceSampler {
    params: ModelParams,
    inst: Instance,
}

impl InstanceSampler {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(InstanceSampler {
            params,
            inst: Instance {
                y: Matrix::zeros(params.n, params.d),
                mu: Matrix::zeros(params.k, params.d),
                kstar: vec![0; params.n],
                b: vec![1; params.n],
            },
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Draw a fresh instance. With `force_x = Some(a)` the label of row 2 is
    /// drawn from the conditional law given `x = a` (requires K ≥ 2 for a = 0).
    pub fn draw(&mut self, rng: &mut Rng, force_x: Option<bool>) -> &Instance {
        fill_means(&self.params, rng, &mut self.inst.mu)
            .expect("Gaussian matrix is full rank almost surely");
        fill_labels_and_data(&self.params, rng, &mut self.inst, force_x);
        &self.inst
    }
}
