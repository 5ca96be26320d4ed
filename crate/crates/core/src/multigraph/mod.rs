//! Templates: multigraphs with two distinguished nodes `v1` (index 0) and
//! `v2` (index 1), stored as an edge list. Half-edge `h` belongs to edge
//! `h / 2`; side 0 sits at the first endpoint, side 1 at the second.

mod canonical;
mod pairing;
mod text;

pub use canonical::{automorphism_count, enumerate_templates, CanonicalKey};
pub(crate) use pairing::PruneContext;
pub use pairing::{
    enumerate_matchings, enumerate_pairings, for_each_pairing, local_pairing_count,
    matchings_within_budget, pairing_count, prune, shadow_of, MatchPair, Matching, Pairing,
    PruneSummary, Shadow, PAIRING_VISIT_GUARD,
};

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

pub const V1: usize = 0;
pub const V2: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Template {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl Template {
    /// Edges are unordered; each is stored with its smaller endpoint first.
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if num_nodes < 2 {
            bail!(
                InvalidParams,
                "a template has at least the two nodes v1, v2"
            );
        }
        let mut deg = vec![0usize; num_nodes];
        let mut norm = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                bail!(
                    InvalidParams,
                    "edge ({}, {}) out of range for {} nodes",
                    u,
                    v,
                    num_nodes
                );
            }
            deg[u] += 1;
            deg[v] += 1;
            norm.push(if u <= v { (u, v) } else { (v, u) });
        }
        if let Some(v) = (2..num_nodes).find(|&v| deg[v] == 0) {
            bail!(InvalidParams, "interior node {} is isolated", v);
        }
        Ok(Template {
            num_nodes,
            edges: norm,
        })
    }

    pub fn edgeless() -> Self {
        Template {
            num_nodes: 2,
            edges: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_halfedges(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn halfedge_node(&self, h: usize) -> usize {
        let (u, v) = self.edges[h / 2];
        if h % 2 == 0 {
            u
        } else {
            v
        }
    }

    /// Half-edges incident to `v`, in increasing id order.
    pub fn halfedges_at(&self, v: usize) -> Vec<usize> {
        (0..self.num_halfedges())
            .filter(|&h| self.halfedge_node(h) == v)
            .collect()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges
            .iter()
            .map(|&(a, b)| usize::from(a == v) + usize::from(b == v))
            .sum()
    }

    pub fn is_interior(&self, v: usize) -> bool {
        v >= 2
    }

    /// Flags of interior nodes of degree exactly 2.
    pub fn interior_deg2_flags(&self) -> Vec<bool> {
        self.degrees()
            .iter()
            .enumerate()
            .map(|(v, &d)| v >= 2 && d == 2)
            .collect()
    }

    pub fn has_interior_deg2(&self) -> bool {
        self.interior_deg2_flags().iter().any(|&f| f)
    }

    pub fn has_odd_degree(&self) -> bool {
        self.degrees().iter().any(|d| d % 2 == 1)
    }

    pub fn is_even(&self) -> bool {
        !self.has_odd_degree()
    }

    /// Connected-component label of each node; isolated `v1`/`v2` form their
    /// own components. Labels are numbered in order of first appearance.
    pub fn node_components(&self) -> Vec<usize> {
        let mut uf = UnionFind::new(self.num_nodes);
        for &(u, v) in &self.edges {
            uf.union(u, v);
        }
        uf.labels()
    }

    pub fn num_node_components(&self) -> usize {
        self.node_components()
            .iter()
            .copied()
            .max()
            .map_or(0, |m| m + 1)
    }

    pub fn is_connected(&self) -> bool {
        self.num_node_components() == 1
    }

    /// Edge indices of each connected component that has at least one edge,
    /// ordered by smallest edge index.
    pub fn edge_components(&self) -> Vec<Vec<usize>> {
        let labels = self.node_components();
        let mut out: Vec<(usize, Vec<usize>)> = Vec::new();
        for (e, &(u, _)) in self.edges.iter().enumerate() {
            let c = labels[u];
            match out.iter_mut().find(|(l, _)| *l == c) {
                Some((_, es)) => es.push(e),
                None => out.push((c, vec![e])),
            }
        }
        out.into_iter().map(|(_, es)| es).collect()
    }

    /// Template with the extra edge `(u, v)`.
    pub fn with_edge(&self, u: usize, v: usize) -> Template {
        let mut edges = self.edges.clone();
        edges.push(if u <= v { (u, v) } else { (v, u) });
        Template {
            num_nodes: self.num_nodes,
            edges,
        }
    }

    /// The sub-template spanned by `edge_ids` with `v1`, `v2` always kept.
    /// Returns it with the map from new node index to old node index.
    pub fn subtemplate(&self, edge_ids: &[usize]) -> (Template, Vec<usize>) {
        let mut old_of_new = vec![V1, V2];
        let mut new_of_old = vec![usize::MAX; self.num_nodes];
        new_of_old[V1] = 0;
        new_of_old[V2] = 1;
        let mut edges = Vec::with_capacity(edge_ids.len());
        for &e in edge_ids {
            let (u, v) = self.edges[e];
            for w in [u, v] {
                if new_of_old[w] == usize::MAX {
                    new_of_old[w] = old_of_new.len();
                    old_of_new.push(w);
                }
            }
            edges.push((new_of_old[u], new_of_old[v]));
        }
        let t = Template::new(old_of_new.len(), edges)
            .expect("subtemplate of a valid template is valid");
        (t, old_of_new)
    }

    /// Number of injective labelings with `v1 → 1`, `v2 → 2` into `n` rows,
    /// i.e. `(n−2)!/(n−|V|)!`.
    pub fn labeling_count(&self, n: usize) -> u128 {
        falling_factorial_u128(n.saturating_sub(2), self.num_nodes - 2)
    }
}

pub(crate) fn falling_factorial_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128);
    }
    acc
}

/// The "double chain with fastener" template for chain length `l` and `m`
/// chains (`m` odd). Node `v_k` of the construction is index `k − 1`.
pub fn build_gstar(l: usize, m: usize) -> Result<Template> {
    if l == 0 {
        bail!(InvalidParams, "L must be at least 1");
    }
    if m == 0 || m % 2 == 0 {
        bail!(
            InvalidParams,
            "M must be a positive odd integer (got {})",
            m
        );
    }
    let node = |k: usize| k - 1;
    let last = l * m + 2;
    let mut edges = Vec::with_capacity(2 * l * m + m + 1);
    edges.push((node(1), node(3)));
    edges.push((node(1), node(3)));
    edges.push((node(2), node(last)));
    edges.push((node(2), node(last)));
    for mm in 0..m {
        for ll in 1..l {
            let a = node(ll + mm * l + 2);
            let b = node(ll + mm * l + 3);
            edges.push((a, b));
            edges.push((a, b));
        }
    }
    for mm in 1..m {
        let a = node(mm * l + 2);
        let b = node(mm * l + 3);
        edges.push((a, b));
        edges.push((node(1), a));
        edges.push((node(2), b));
    }
    Template::new(last, edges)
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    /// Dense labels numbered by first appearance.
    pub(crate) fn labels(&mut self) -> Vec<usize> {
        let n = self.parent.len();
        let mut map = vec![usize::MAX; n];
        let mut next = 0;
        let mut out = vec![0; n];
        for x in 0..n {
            let r = self.find(x);
            if map[r] == usize::MAX {
                map[r] = next;
                next += 1;
            }
            out[x] = map[r];
        }
        out
    }
}
