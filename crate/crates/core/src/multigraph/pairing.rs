//! Node matchings and half-edge pairings between two templates, and the
//! pruned merged multigraph they induce.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{Template, UnionFind, V1, V2};
use crate::error::{bail, Result};

/// Matched node pairs `(node of t1, node of t2)`, sorted; always starts with
/// `(v1, v1)` and `(v2, v2)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
}

impl Matching {
    /// The matching `{(v1, v1), (v2, v2)}`.
    pub fn base() -> Self {
        Matching {
            pairs: vec![(V1, V1), (V2, V2)],
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn partner_of_first(&self, u: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == u).map(|p| p.1)
    }

    pub fn partner_of_second(&self, w: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.1 == w).map(|p| p.0)
    }

    /// Matching induced by two labelings: nodes sharing a row are matched.
    pub fn from_labelings(pi1: &[usize], pi2: &[usize]) -> Self {
        let mut pairs = Vec::new();
        for (u, &r) in pi1.iter().enumerate() {
            if let Some(w) = pi2.iter().position(|&s| s == r) {
                pairs.push((u, w));
            }
        }
        pairs.sort_unstable();
        Matching { pairs }
    }
}

/// Paired half-edges `(half-edge of t1, half-edge of t2)`, sorted.
pub type Pairing = Vec<(usize, usize)>;

const MATCHING_STATE_GUARD: u64 = 1_000_000;
const NODE_PRODUCT_GUARD: usize = 10_000;

/// All node matchings satisfying the matching rules: `v1`, `v2` matched to
/// themselves, injective, and every interior degree-2 node matched. With
/// `star_only`, also every connected component of either template has a
/// matched node.
pub fn enumerate_matchings(t1: &Template, t2: &Template, star_only: bool) -> Result<Vec<Matching>> {
    if t1.num_nodes() * t2.num_nodes() > NODE_PRODUCT_GUARD {
        bail!(
            Capacity,
            "node product {} exceeds {}",
            t1.num_nodes() * t2.num_nodes(),
            NODE_PRODUCT_GUARD
        );
    }
    let need1 = t1.interior_deg2_flags();
    let need2 = t2.interior_deg2_flags();
    let comp1 = t1.node_components();
    let comp2 = t2.node_components();
    let mut out = Vec::new();
    let mut used2 = vec![false; t2.num_nodes()];
    let mut cur = vec![(V1, V1), (V2, V2)];
    let mut states: u64 = 0;

    struct Ctx<'a> {
        t1: &'a Template,
        t2: &'a Template,
        need1: &'a [bool],
        need2: &'a [bool],
        comp1: &'a [usize],
        comp2: &'a [usize],
        star_only: bool,
    }

    fn accept(ctx: &Ctx, cur: &[(usize, usize)], used2: &[bool]) -> bool {
        let matched1 = |u: usize| cur.iter().any(|p| p.0 == u);
        if (2..ctx.t1.num_nodes()).any(|u| ctx.need1[u] && !matched1(u)) {
            return false;
        }
        if (2..ctx.t2.num_nodes()).any(|w| ctx.need2[w] && !used2[w]) {
            return false;
        }
        if ctx.star_only {
            let nc1 = ctx.comp1.iter().copied().max().map_or(0, |m| m + 1);
            let nc2 = ctx.comp2.iter().copied().max().map_or(0, |m| m + 1);
            let mut hit1 = vec![false; nc1];
            let mut hit2 = vec![false; nc2];
            for &(u, w) in cur {
                hit1[ctx.comp1[u]] = true;
                hit2[ctx.comp2[w]] = true;
            }
            if hit1.iter().any(|h| !h) || hit2.iter().any(|h| !h) {
                return false;
            }
        }
        true
    }

    fn rec(
        ctx: &Ctx,
        u: usize,
        cur: &mut Vec<(usize, usize)>,
        used2: &mut Vec<bool>,
        out: &mut Vec<Matching>,
        states: &mut u64,
    ) -> Result<()> {
        *states += 1;
        if *states > MATCHING_STATE_GUARD {
            bail!(
                Capacity,
                "matching enumeration exceeds {} states",
                MATCHING_STATE_GUARD
            );
        }
        if u == ctx.t1.num_nodes() {
            if accept(ctx, cur, used2) {
                let mut pairs = cur.clone();
                pairs.sort_unstable();
                out.push(Matching { pairs });
            }
            return Ok(());
        }
        rec(ctx, u + 1, cur, used2, out, states)?;
        for w in 2..ctx.t2.num_nodes() {
            if !used2[w] {
                used2[w] = true;
                cur.push((u, w));
                rec(ctx, u + 1, cur, used2, out, states)?;
                cur.pop();
                used2[w] = false;
            }
        }
        Ok(())
    }

    let ctx = Ctx {
        t1,
        t2,
        need1: &need1,
        need2: &need2,
        comp1: &comp1,
        comp2: &comp2,
        star_only,
    };
    rec(&ctx, 2, &mut cur, &mut used2, &mut out, &mut states)?;
    Ok(out)
}

/// Number of partial injections between an `a`-set and a `b`-set:
/// `Σ_k C(a,k) C(b,k) k!`.
pub fn local_pairing_count(a: usize, b: usize) -> u128 {
    let mut total: u128 = 0;
    let mut term: u128 = 1;
    for k in 0..=a.min(b) {
        if k > 0 {
            term = term * ((a - k + 1) as u128) * ((b - k + 1) as u128) / (k as u128);
        }
        total += term;
    }
    total
}

pub fn pairing_count(t1: &Template, t2: &Template, m: &Matching) -> u128 {
    m.pairs
        .iter()
        .map(|&(a, b)| local_pairing_count(t1.degree(a), t2.degree(b)))
        .fold(1u128, |acc, c| acc.saturating_mul(c))
}

/// Largest number of pairings a single enumeration may visit.
pub const PAIRING_VISIT_GUARD: u128 = 20_000_000;
const PAIRING_LIST_GUARD: u128 = 1_000_000;

/// Visit every pairing compatible with `m` (including the empty one).
pub fn for_each_pairing(
    t1: &Template,
    t2: &Template,
    m: &Matching,
    mut f: impl FnMut(&[(usize, usize)]),
) -> Result<()> {
    let count = pairing_count(t1, t2, m);
    if count > PAIRING_VISIT_GUARD {
        bail!(
            Capacity,
            "{} pairings exceed the enumeration guard of {}",
            count,
            PAIRING_VISIT_GUARD
        );
    }
    let sites: Vec<(Vec<usize>, Vec<usize>)> = m
        .pairs
        .iter()
        .map(|&(a, b)| (t1.halfedges_at(a), t2.halfedges_at(b)))
        .collect();
    let mut cur: Vec<(usize, usize)> = Vec::new();
    let mut sorted: Vec<(usize, usize)> = Vec::new();

    fn rec(
        sites: &[(Vec<usize>, Vec<usize>)],
        site: usize,
        i: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        sorted: &mut Vec<(usize, usize)>,
        f: &mut dyn FnMut(&[(usize, usize)]),
    ) {
        if site == sites.len() {
            sorted.clear();
            sorted.extend_from_slice(cur);
            sorted.sort_unstable();
            f(sorted);
            return;
        }
        let (a, b) = &sites[site];
        if i == a.len() {
            let next = sites.get(site + 1).map_or(0, |s| s.1.len());
            let mut fresh = vec![false; next];
            rec(sites, site + 1, 0, &mut fresh, cur, sorted, f);
            return;
        }
        rec(sites, site, i + 1, used, cur, sorted, f);
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                cur.push((a[i], b[j]));
                rec(sites, site, i + 1, used, cur, sorted, f);
                cur.pop();
                used[j] = false;
            }
        }
    }

    if sites.is_empty() {
        f(&[]);
        return Ok(());
    }
    let mut used = vec![false; sites[0].1.len()];
    rec(&sites, 0, 0, &mut used, &mut cur, &mut sorted, &mut f);
    Ok(())
}

/// Matchings of `(t1, t2)` whose pairings together stay within the visit
/// guard.
pub fn matchings_within_budget(
    t1: &Template,
    t2: &Template,
    star_only: bool,
) -> Result<Vec<Matching>> {
    let ms = enumerate_matchings(t1, t2, star_only)?;
    let total = ms
        .iter()
        .fold(0u128, |acc, m| acc.saturating_add(pairing_count(t1, t2, m)));
    if total > PAIRING_VISIT_GUARD {
        bail!(
            Capacity,
            "{} (matching, pairing) pairs exceed the enumeration guard of {}",
            total,
            PAIRING_VISIT_GUARD
        );
    }
    Ok(ms)
}

pub fn enumerate_pairings(t1: &Template, t2: &Template, m: &Matching) -> Result<Vec<Pairing>> {
    let count = pairing_count(t1, t2, m);
    if count > PAIRING_LIST_GUARD {
        bail!(
            Capacity,
            "{} pairings exceed the listing guard of {}",
            count,
            PAIRING_LIST_GUARD
        );
    }
    let mut out = Vec::with_capacity(count as usize);
    for_each_pairing(t1, t2, m, |p| out.push(p.to_vec()))?;
    Ok(out)
}

/// Counts describing the pruned merged multigraph `G_Δ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneSummary {
    pub v_delta: usize,
    pub e_delta: usize,
    pub n_cyc: usize,
    pub n_op_even: usize,
    pub n_op_odd: usize,
    pub n_cc: usize,
    pub n_m_full: usize,
    pub v1_isolated: bool,
    pub v2_isolated: bool,
    pub v1_sim_v2: bool,
    pub all_degrees_even: bool,
    /// Edges of `G_Δ` over merged node ids (t1 nodes keep their index,
    /// unmatched t2 nodes follow).
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPair {
    pub matching: Matching,
    pub pairing: Pairing,
    pub summary: PruneSummary,
}

/// Precomputed merge layout for a fixed matching; summarizes many pairings.
pub(crate) struct PruneContext<'a> {
    t1: &'a Template,
    t2: &'a Template,
    matching: &'a Matching,
    /// Merged node of each global half-edge (t1 halves first).
    node_of: Vec<usize>,
    v_delta: usize,
    off: usize,
}

impl<'a> PruneContext<'a> {
    pub(crate) fn new(t1: &'a Template, t2: &'a Template, matching: &'a Matching) -> Self {
        let r1 = t1.num_nodes();
        let mut merged2 = vec![usize::MAX; t2.num_nodes()];
        for &(a, b) in &matching.pairs {
            merged2[b] = a;
        }
        let mut next = r1;
        for w in merged2.iter_mut() {
            if *w == usize::MAX {
                *w = next;
                next += 1;
            }
        }
        let off = t1.num_halfedges();
        let mut node_of = Vec::with_capacity(off + t2.num_halfedges());
        for h in 0..off {
            node_of.push(t1.halfedge_node(h));
        }
        for h in 0..t2.num_halfedges() {
            node_of.push(merged2[t2.halfedge_node(h)]);
        }
        PruneContext {
            t1,
            t2,
            matching,
            node_of,
            v_delta: next,
            off,
        }
    }

    pub(crate) fn summary(&self, pairing: &[(usize, usize)]) -> PruneSummary {
        const NONE: usize = usize::MAX;
        let total = self.node_of.len();
        let mut pp = vec![NONE; total];
        for &(h1, h2) in pairing {
            pp[h1] = self.off + h2;
            pp[self.off + h2] = h1;
        }
        let mut visited = vec![false; total];
        let mut edges = Vec::new();
        let (mut n_op_even, mut n_op_odd, mut n_cyc) = (0, 0, 0);
        for g in 0..total {
            if visited[g] || pp[g] != NONE {
                continue;
            }
            visited[g] = true;
            let mut cur = g;
            let mut len = 0;
            let end = loop {
                let e = cur ^ 1;
                visited[e] = true;
                if pp[e] == NONE {
                    break e;
                }
                len += 1;
                cur = pp[e];
                visited[cur] = true;
            };
            edges.push((self.node_of[g], self.node_of[end]));
            if len > 0 {
                if len % 2 == 0 {
                    n_op_even += 1;
                } else {
                    n_op_odd += 1;
                }
            }
        }
        for g in 0..total {
            if visited[g] {
                continue;
            }
            let mut cur = g;
            loop {
                visited[cur] = true;
                let e = cur ^ 1;
                visited[e] = true;
                cur = pp[e];
                if cur == g {
                    break;
                }
            }
            n_cyc += 1;
        }
        let mut deg = vec![0usize; self.v_delta];
        let mut uf = UnionFind::new(self.v_delta);
        for &(u, v) in &edges {
            deg[u] += 1;
            deg[v] += 1;
            uf.union(u, v);
        }
        let labels = uf.labels();
        let n_cc = labels.iter().copied().max().map_or(0, |m| m + 1);
        let n_m_full = self
            .matching
            .pairs
            .iter()
            .filter(|&&(a, b)| {
                self.t1.halfedges_at(a).iter().all(|&h| pp[h] != NONE)
                    && self
                        .t2
                        .halfedges_at(b)
                        .iter()
                        .all(|&h| pp[self.off + h] != NONE)
            })
            .count();
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        PruneSummary {
            v_delta: self.v_delta,
            e_delta: edges.len(),
            n_cyc,
            n_op_even,
            n_op_odd,
            n_cc,
            n_m_full,
            v1_isolated: deg[V1] == 0,
            v2_isolated: deg[V2] == 0,
            v1_sim_v2: labels[V1] == labels[V2],
            all_degrees_even: deg.iter().all(|d| d % 2 == 0),
            edges,
        }
    }
}

fn validate_pair(t1: &Template, t2: &Template, m: &Matching, p: &[(usize, usize)]) -> Result<()> {
    let mut seen1 = vec![false; t1.num_nodes()];
    let mut seen2 = vec![false; t2.num_nodes()];
    for &(a, b) in &m.pairs {
        if a >= t1.num_nodes() || b >= t2.num_nodes() || seen1[a] || seen2[b] {
            bail!(
                InvalidParams,
                "matching is not an injective node correspondence"
            );
        }
        seen1[a] = true;
        seen2[b] = true;
    }
    if m.partner_of_first(V1) != Some(V1) || m.partner_of_first(V2) != Some(V2) {
        bail!(InvalidParams, "matching must contain (v1, v1) and (v2, v2)");
    }
    let mut h1 = vec![false; t1.num_halfedges()];
    let mut h2 = vec![false; t2.num_halfedges()];
    for &(a, b) in p {
        if a >= h1.len() || b >= h2.len() || h1[a] || h2[b] {
            bail!(
                InvalidParams,
                "pairing uses a half-edge twice or out of range"
            );
        }
        h1[a] = true;
        h2[b] = true;
        if m.partner_of_first(t1.halfedge_node(a)) != Some(t2.halfedge_node(b)) {
            bail!(InvalidParams, "paired half-edges must sit at matched nodes");
        }
    }
    Ok(())
}

/// Build the pruned merged multigraph of `(m, p)` and its summary.
pub fn prune(
    t1: &Template,
    t2: &Template,
    m: &Matching,
    p: &[(usize, usize)],
) -> Result<MatchPair> {
    validate_pair(t1, t2, m, p)?;
    let mut pairing = p.to_vec();
    pairing.sort_unstable();
    let summary = PruneContext::new(t1, t2, m).summary(&pairing);
    Ok(MatchPair {
        matching: m.clone(),
        pairing,
        summary,
    })
}

/// What remains after deleting perfectly paired edges and perfectly matched
/// nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shadow {
    pub unpaired1: Vec<usize>,
    pub unpaired2: Vec<usize>,
    pub residual_matching: Vec<(usize, usize)>,
    pub residual_pairing: Vec<(usize, usize)>,
    /// Number of half-edges (both templates) not in perfectly paired edges.
    pub m: usize,
}

pub fn shadow_of(
    t1: &Template,
    t2: &Template,
    m: &Matching,
    p: &[(usize, usize)],
) -> Result<Shadow> {
    validate_pair(t1, t2, m, p)?;
    let partner = |h1: usize| p.iter().find(|q| q.0 == h1).map(|q| q.1);
    let mut perfect1 = vec![false; t1.num_edges()];
    let mut perfect2 = vec![false; t2.num_edges()];
    for e in 0..t1.num_edges() {
        if let (Some(a), Some(b)) = (partner(2 * e), partner(2 * e + 1)) {
            if a / 2 == b / 2 {
                perfect1[e] = true;
                perfect2[a / 2] = true;
            }
        }
    }
    let unpaired1 = (0..t1.num_halfedges())
        .filter(|&h| !p.iter().any(|q| q.0 == h))
        .collect();
    let unpaired2 = (0..t2.num_halfedges())
        .filter(|&h| !p.iter().any(|q| q.1 == h))
        .collect();
    let residual_matching = m
        .pairs
        .iter()
        .copied()
        .filter(|&(a, b)| {
            let perf_a = t1.halfedges_at(a).iter().all(|&h| perfect1[h / 2]);
            let perf_b = t2.halfedges_at(b).iter().all(|&h| perfect2[h / 2]);
            !(perf_a && perf_b)
        })
        .collect();
    let residual_pairing = p
        .iter()
        .copied()
        .filter(|&(a, _)| !perfect1[a / 2])
        .collect();
    let m_count =
        2 * perfect1.iter().filter(|&&x| !x).count() + 2 * perfect2.iter().filter(|&&x| !x).count();
    Ok(Shadow {
        unpaired1,
        unpaired2,
        residual_matching,
        residual_pairing,
        m: m_count,
    })
}
