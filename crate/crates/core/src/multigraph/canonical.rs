//! Canonical keys, automorphism counts and exhaustive template enumeration.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::Template;
use crate::error::{bail, Result};

/// Isomorphism-invariant key of a template (isomorphisms fix `v1` and `v2`).
/// Orders by edge count, then node count, then the canonical edge list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CanonicalKey {
    pub num_edges: usize,
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

const RELABEL_GUARD: u64 = 1_000_000;

/// Interior nodes grouped by a relabeling-invariant signature, classes in
/// signature order.
fn interior_classes(t: &Template) -> Vec<Vec<usize>> {
    let r = t.num_nodes();
    let deg = t.degrees();
    let mut sig: Vec<(usize, usize, usize, usize)> = vec![(0, 0, 0, 0); r];
    for &(u, v) in t.edges() {
        if u == v {
            sig[u].1 += 1;
        }
        if u == 0 && v >= 2 {
            sig[v].2 += 1;
        }
        if u == 1 && v >= 2 {
            sig[v].3 += 1;
        }
    }
    let mut classes: BTreeMap<(usize, usize, usize, usize), Vec<usize>> = BTreeMap::new();
    for v in 2..r {
        let s = (deg[v], sig[v].1, sig[v].2, sig[v].3);
        classes.entry(s).or_default().push(v);
    }
    classes.into_values().collect()
}

/// Visit every relabeling that permutes nodes within their class. The
/// callback receives `new_of_old`.
fn for_each_class_relabeling(t: &Template, mut f: impl FnMut(&[usize])) -> Result<()> {
    let classes = interior_classes(t);
    let mut total: u64 = 1;
    for c in &classes {
        for k in 1..=c.len() as u64 {
            total = total.saturating_mul(k);
        }
    }
    if total > RELABEL_GUARD {
        bail!(
            Capacity,
            "{} candidate relabelings exceed the guard of {}",
            total,
            RELABEL_GUARD
        );
    }
    let mut slots: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut next = 2;
    for c in &classes {
        slots.push((next, c.clone()));
        next += c.len();
    }
    let mut new_of_old: Vec<usize> = (0..t.num_nodes()).collect();
    fn rec(
        slots: &mut [(usize, Vec<usize>)],
        idx: usize,
        new_of_old: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
    ) {
        if idx == slots.len() {
            f(new_of_old);
            return;
        }
        let start = slots[idx].0;
        let members = slots[idx].1.clone();
        permute(
            &members,
            0,
            &mut members.clone(),
            &mut |perm: &[usize]| {
                for (k, &old) in perm.iter().enumerate() {
                    new_of_old[old] = start + k;
                }
                rec(slots, idx + 1, new_of_old, f);
            },
        );
    }
    rec(&mut slots, 0, &mut new_of_old, &mut f);
    Ok(())
}

fn permute(orig: &[usize], k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if k == cur.len() {
        f(cur);
        return;
    }
    for i in k..cur.len() {
        cur.swap(k, i);
        permute(orig, k + 1, cur, f);
        cur.swap(k, i);
    }
}

fn relabeled_edges(t: &Template, new_of_old: &[usize]) -> Vec<(usize, usize)> {
    let mut es: Vec<(usize, usize)> = t
        .edges()
        .iter()
        .map(|&(u, v)| {
            let (a, b) = (new_of_old[u], new_of_old[v]);
            if a <= b {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect();
    es.sort_unstable();
    es
}

impl Template {
    pub fn canonical_key(&self) -> Result<CanonicalKey> {
        let mut best: Option<Vec<(usize, usize)>> = None;
        for_each_class_relabeling(self, |map| {
            let es = relabeled_edges(self, map);
            if best.as_ref().map_or(true, |b| es < *b) {
                best = Some(es);
            }
        })?;
        Ok(CanonicalKey {
            num_edges: self.num_edges(),
            num_nodes: self.num_nodes(),
            edges: best.unwrap_or_default(),
        })
    }

    /// The representative whose edge list is the canonical key.
    pub fn canonical_form(&self) -> Result<Template> {
        let key = self.canonical_key()?;
        Template::new(key.num_nodes, key.edges)
    }

    pub fn is_isomorphic(&self, other: &Template) -> Result<bool> {
        Ok(self.canonical_key()? == other.canonical_key()?)
    }
}

const AUT_HALFEDGE_GUARD: usize = 24;

/// Number of half-edge bijections preserving edge partners and incidence and
/// fixing `v1`, `v2`.
pub fn automorphism_count(t: &Template) -> Result<u64> {
    if t.num_halfedges() > AUT_HALFEDGE_GUARD {
        bail!(
            Capacity,
            "{} half-edges exceed the automorphism guard of {}",
            t.num_halfedges(),
            AUT_HALFEDGE_GUARD
        );
    }
    // The class relabelings form a coset of the class-preserving group, so
    // the number of them reaching the canonical edge list is the stabilizer size.
    let target = t.canonical_key()?.edges;
    let mut node_auts: u64 = 0;
    for_each_class_relabeling(t, |map| {
        if relabeled_edges(t, map) == target {
            node_auts += 1;
        }
    })?;
    // Each node automorphism lifts to mult! orderings per parallel class and
    // two orientations per self-loop.
    let mut weight: u64 = 1;
    let mut i = 0;
    while i < target.len() {
        let mut j = i;
        while j < target.len() && target[j] == target[i] {
            j += 1;
        }
        let mult = (j - i) as u64;
        for k in 1..=mult {
            weight *= k;
        }
        if target[i].0 == target[i].1 {
            weight *= 1 << mult;
        }
        i = j;
    }
    Ok(node_auts * weight)
}

const ENUM_MAX_EDGES: usize = 4;

/// One representative per isomorphism class of templates with at most
/// `max_edges` edges, sorted by canonical key. Representatives are in
/// canonical form.
pub fn enumerate_templates(max_edges: usize, even_only: bool) -> Result<Vec<Template>> {
    if max_edges > ENUM_MAX_EDGES {
        bail!(
            Capacity,
            "template enumeration is limited to {} edges (asked {})",
            ENUM_MAX_EDGES,
            max_edges
        );
    }
    let mut found: BTreeMap<CanonicalKey, Template> = BTreeMap::new();
    let seed = Template::edgeless();
    found.insert(seed.canonical_key()?, seed.clone());
    let mut frontier = vec![seed];
    for _ in 0..max_edges {
        let mut next = Vec::new();
        for t in &frontier {
            let r = t.num_nodes();
            // New edge between existing nodes, to one fresh node, a loop at a
            // fresh node, or between two fresh nodes.
            let mut cands: Vec<(usize, usize, usize)> = Vec::new();
            for u in 0..r {
                for v in u..r {
                    cands.push((u, v, r));
                }
                cands.push((u, r, r + 1));
            }
            cands.push((r, r, r + 1));
            cands.push((r, r + 1, r + 2));
            for (u, v, nodes) in cands {
                let mut edges = t.edges().to_vec();
                edges.push((u, v));
                let cand = Template::new(nodes, edges)?;
                let key = cand.canonical_key()?;
                if !found.contains_key(&key) {
                    let canon = Template::new(key.num_nodes, key.edges.clone())?;
                    found.insert(key, canon.clone());
                    next.push(canon);
                }
            }
        }
        frontier = next;
    }
    Ok(found
        .into_values()
        .filter(|t| !even_only || t.is_even())
        .collect())
}
