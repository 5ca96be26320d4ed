//! Distance and spectral baselines, and diagnostics showing that the
//! spectrum of the Gram matrix carries no information under this prior.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::model::ModelParams;
use crate::multigraph::UnionFind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Single,
    Complete,
    Average,
}

fn squared_distances(y: &Matrix) -> Vec<f64> {
    let n = y.rows();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = y
                .row(i)
                .iter()
                .zip(y.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    out
}

/// Agglomerative clustering on squared Euclidean distances, stopped at
/// `num_clusters` clusters. Labels are numbered by first appearance; ties
/// merge the lowest-index pair first.
pub fn hierarchical_clustering(y: &Matrix, num_clusters: usize) -> Result<Vec<usize>> {
    hierarchical_clustering_with(y, num_clusters, Linkage::Single)
}

pub fn hierarchical_clustering_with(
    y: &Matrix,
    num_clusters: usize,
    linkage: Linkage,
) -> Result<Vec<usize>> {
    let n = y.rows();
    if num_clusters == 0 || num_clusters > n {
        bail!(
            InvalidParams,
            "cannot cut {} rows into {} clusters",
            n,
            num_clusters
        );
    }
    let dist = squared_distances(y);
    match linkage {
        Linkage::Single => Ok(single_linkage(n, &dist, num_clusters)),
        _ => Ok(generic_linkage(n, dist, num_clusters, linkage)),
    }
}

/// Single linkage via the minimum spanning tree (Prim): removing the
/// heaviest `c − 1` tree edges leaves the single-linkage clusters.
fn single_linkage(n: usize, dist: &[f64], c: usize) -> Vec<usize> {
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(n.saturating_sub(1));
    best[0] = 0.0;
    for _ in 0..n {
        let mut u = usize::MAX;
        for v in 0..n {
            if !in_tree[v] && (u == usize::MAX || best[v] < best[u]) {
                u = v;
            }
        }
        in_tree[u] = true;
        if parent[u] != usize::MAX {
            let (a, b) = (parent[u].min(u), parent[u].max(u));
            edges.push((best[u], a, b));
        }
        for v in 0..n {
            if !in_tree[v] && dist[u * n + v] < best[v] {
                best[v] = dist[u * n + v];
                parent[v] = u;
            }
        }
    }
    edges.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then((x.1, x.2).cmp(&(y.1, y.2)))
    });
    let mut uf = UnionFind::new(n);
    for &(_, a, b) in edges.iter().take(n - c) {
        uf.union(a, b);
    }
    uf.labels()
}

/// Naive O(n³) agglomeration with Lance-Williams updates.
fn generic_linkage(n: usize, mut dist: Vec<f64>, c: usize, linkage: Linkage) -> Vec<usize> {
    let mut active: Vec<bool> = vec![true; n];
    let mut size = vec![1usize; n];
    let mut uf = UnionFind::new(n);
    for _ in 0..(n - c) {
        let mut pick = (f64::INFINITY, 0, 0);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if active[j] && dist[i * n + j] < pick.0 {
                    pick = (dist[i * n + j], i, j);
                }
            }
        }
        let (_, a, b) = pick;
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let (da, db) = (dist[a * n + k], dist[b * n + k]);
            let merged = match linkage {
                Linkage::Complete => da.max(db),
                Linkage::Average => {
                    (size[a] as f64 * da + size[b] as f64 * db) / (size[a] + size[b]) as f64
                }
                Linkage::Single => da.min(db),
            };
            dist[a * n + k] = merged;
            dist[k * n + a] = merged;
        }
        size[a] += size[b];
        active[b] = false;
        uf.union(a, b);
    }
    uf.labels()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralProjection {
    /// `n × K` coordinates `Y V`.
    pub projected: Matrix,
    /// `d × K` orthonormal directions `V`.
    pub directions: Matrix,
    /// Eigenvalues of `YᵀY` for the kept directions.
    pub eigenvalues: Vec<f64>,
    /// Some kept direction has a numerically zero eigenvalue and is an
    /// arbitrary orthonormal completion.
    pub rank_deficient: bool,
}

/// Projection onto the top-`K` right singular directions of `Y`.
pub fn spectral_project(y: &Matrix, k: usize) -> Result<SpectralProjection> {
    let d = y.cols();
    if k == 0 || k > d {
        bail!(InvalidParams, "need 1 ≤ K ≤ d (K={}, d={})", k, d);
    }
    let (vals, vecs) = symmetric_eigen(&y.gram());
    let mut directions = Matrix::zeros(d, k);
    for j in 0..k {
        for r in 0..d {
            directions[(r, j)] = vecs[(r, j)];
        }
    }
    let top = vals.first().copied().unwrap_or(0.0).abs();
    let rank_deficient = vals[..k]
        .iter()
        .any(|&v| v <= 1e-12 * top.max(f64::MIN_POSITIVE));
    Ok(SpectralProjection {
        projected: y.matmul(&directions),
        directions,
        eigenvalues: vals[..k].to_vec(),
        rank_deficient,
    })
}

/// `‖(1/n) YᵀY − (1 + Δ²/K) I_K‖_F`; defined for `d = K`, where the
/// expected Gram matrix is a multiple of the identity.
pub fn gram_identity_gap(y: &Matrix, p: &ModelParams) -> Result<f64> {
    if y.cols() != p.k || p.d != p.k {
        bail!(
            Unsupported,
            "the identity gap needs d = K (d={}, K={})",
            y.cols(),
            p.k
        );
    }
    let n = y.rows() as f64;
    let scale = 1.0 + p.delta * p.delta / p.k as f64;
    let mut g = y.gram();
    for a in 0..p.k {
        for b in 0..p.k {
            g[(a, b)] /= n;
        }
        g[(a, a)] -= scale;
    }
    Ok(g.frobenius())
}

pub const MAX_PATH_LENGTH: usize = 6;

/// `((Y Yᵀ)^D)_{1,2}`, the sum over all walks of length `D` from row 1 to
/// row 2. Its pure-noise calibration is exactly zero: flipping the sign of
/// row 1 preserves the law and negates the entry.
pub fn path_polynomial_diagnostic(y: &Matrix, length: usize) -> Result<f64> {
    if length == 0 || length > MAX_PATH_LENGTH {
        bail!(
            InvalidParams,
            "path length must lie in 1..={} (got {})",
            MAX_PATH_LENGTH,
            length
        );
    }
    if y.rows() < 2 {
        bail!(InsufficientSamples, "need at least two rows");
    }
    let (n, d) = (y.rows(), y.cols());
    let mut v = vec![0.0; n];
    v[1] = 1.0;
    for _ in 0..length {
        let mut w = vec![0.0; d];
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                for (wj, &yij) in w.iter_mut().zip(y.row(i)) {
                    *wj += vi * yij;
                }
            }
        }
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = y.row(i).iter().zip(&w).map(|(a, b)| a * b).sum();
        }
    }
    Ok(v[0])
}
