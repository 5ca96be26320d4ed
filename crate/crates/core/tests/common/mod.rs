//! Exact expectation oracle independent of the matching/pairing calculus.
//!
//! Template polynomials are O(d)-invariant, so the random orthonormal means
//! can be rotated onto `Δ e_1, …, Δ e_K`. Given labels and signs the noise is
//! independent across (row, coordinate), and each factor reduces to a
//! univariate Gaussian expectation of a product of polynomials.

#![allow(dead_code)]

use std::collections::BTreeMap;

use lowdeg_core::multigraph::Template;

pub type Poly = Vec<f64>;

pub fn hermite_poly(k: usize) -> Poly {
    let mut prev: Poly = vec![1.0];
    if k == 0 {
        return prev;
    }
    let mut cur: Poly = vec![0.0, 1.0];
    for j in 1..k {
        let mut next = vec![0.0; cur.len() + 1];
        for (i, &c) in cur.iter().enumerate() {
            next[i + 1] += c;
        }
        for (i, &c) in prev.iter().enumerate() {
            next[i] -= j as f64 * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

fn mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn gauss_moment(k: usize) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        (1..k).step_by(2).fold(1.0, |acc, i| acc * i as f64)
    }
}

/// Which draws of the labels to keep.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Condition {
    None,
    X0,
    X1,
}

/// One factor of a product: a template and its labeling.
pub struct Factor<'a> {
    pub template: &'a Template,
    pub pi: Vec<usize>,
}

/// `E[Π_t Ψ̄_{G_t, π_t}]`, optionally restricted to `x = 0` or `x = 1`
/// (returning the conditional expectation).
pub fn exact_product(factors: &[Factor], d: usize, k: usize, delta: f64, cond: Condition) -> f64 {
    let correction = 1.0 + delta * delta / k as f64;
    let mut rows: Vec<usize> = factors.iter().flat_map(|f| f.pi.iter().copied()).collect();
    rows.sort_unstable();
    rows.dedup();
    let nr = rows.len();
    // With Δ = 0 the labels do not enter unless a condition is imposed.
    let label_range = if delta == 0.0 && cond == Condition::None {
        1
    } else {
        k
    };
    let slot = |r: usize| rows.iter().position(|&x| x == r).unwrap();
    // Flattened (factor, node) entries with their row slot and flags.
    let mut node_slot = Vec::new();
    let mut node_deg2 = Vec::new();
    let mut base = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for f in factors {
        let off = node_slot.len();
        base.push(off);
        let flags = f.template.interior_deg2_flags();
        for (v, &r) in f.pi.iter().enumerate() {
            node_slot.push(slot(r));
            node_deg2.push(flags[v]);
        }
        for &(u, v) in f.template.edges() {
            edges.push((off + u, off + v));
        }
    }
    let nn = node_slot.len();
    let ne = edges.len();
    let max_deg = 2 * ne + 2;
    // E[(x + Z)^m] at x = 0 and averaged over x = ±Δ.
    let moments = |x: f64| -> Vec<f64> {
        (0..=max_deg)
            .map(|m| {
                (0..=m)
                    .map(|j| binom(m, j) * x.powi((m - j) as i32) * gauss_moment(j))
                    .sum()
            })
            .collect()
    };
    let null_m = moments(0.0);
    let sig_m: Vec<f64> = moments(delta)
        .iter()
        .zip(moments(-delta))
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let herm: Vec<Poly> = (0..=max_deg).map(hermite_poly).collect();
    let deg2_poly: Poly = vec![-correction, 0.0, 1.0];

    let mut total = 0.0;
    let mut weight_sum = 0.0;
    let mut labels = vec![0usize; nr];
    let mut beta = vec![0usize; nn * d];
    let mut coords = vec![0usize; ne];
    let (s0, s1) = (slot(0), slot(1));
    loop {
        let x = labels[s0] == labels[s1];
        let keep = match cond {
            Condition::None => true,
            Condition::X0 => !x,
            Condition::X1 => x,
        };
        if keep {
            weight_sum += 1.0;
            coords.iter_mut().for_each(|c| *c = 0);
            loop {
                beta.iter_mut().for_each(|b| *b = 0);
                for (i, &(u, v)) in edges.iter().enumerate() {
                    beta[u * d + coords[i]] += 1;
                    beta[v * d + coords[i]] += 1;
                }
                let mut prod = 1.0;
                'outer: for s in 0..nr {
                    for j in 0..d {
                        let mut p: Poly = vec![1.0];
                        for a in 0..nn {
                            if node_slot[a] == s {
                                let b = beta[a * d + j];
                                let q = if b == 2 && node_deg2[a] {
                                    &deg2_poly
                                } else {
                                    &herm[b]
                                };
                                p = mul(&p, q);
                            }
                        }
                        let table = if j == labels[s] { &sig_m } else { &null_m };
                        prod *= p.iter().zip(table).map(|(c, m)| c * m).sum::<f64>();
                        if prod == 0.0 {
                            break 'outer;
                        }
                    }
                }
                total += prod;
                let mut i = 0;
                while i < ne {
                    coords[i] += 1;
                    if coords[i] < d {
                        break;
                    }
                    coords[i] = 0;
                    i += 1;
                }
                if i == ne {
                    break;
                }
            }
        }
        let mut i = 0;
        while i < nr {
            labels[i] += 1;
            if labels[i] < label_range {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == nr {
            break;
        }
    }
    total / weight_sum
}

/// Injective labelings with `v1 → 0`, `v2 → 1`, interior nodes into `2..n`.
pub fn labelings(r: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0, 1];
    fn rec(r: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for row in 2..n {
            if !cur.contains(&row) {
                cur.push(row);
                rec(r, n, cur, out);
                cur.pop();
            }
        }
    }
    rec(r, n, &mut cur, &mut out);
    out
}

/// Rename rows so that 0 and 1 stay fixed and the rest are numbered by
/// first appearance. Rows are exchangeable, so the expectation only depends
/// on this pattern.
fn row_pattern(pis: &[&[usize]]) -> Vec<Vec<usize>> {
    let mut seen = vec![0usize, 1];
    pis.iter()
        .map(|pi| {
            pi.iter()
                .map(|&r| match seen.iter().position(|&x| x == r) {
                    Some(i) => i,
                    None => {
                        seen.push(r);
                        seen.len() - 1
                    }
                })
                .collect()
        })
        .collect()
}

/// `E[Ψ̄_G]` (conditioned as requested). All labelings share one value.
pub fn exact_mean(t: &Template, n: usize, d: usize, k: usize, delta: f64, cond: Condition) -> f64 {
    let all = labelings(t.num_nodes(), n);
    if all.is_empty() {
        return 0.0;
    }
    let pi: Vec<usize> = (0..t.num_nodes()).collect();
    all.len() as f64 * exact_product(&[Factor { template: t, pi }], d, k, delta, cond)
}

/// `E[Ψ̄_{G1} Ψ̄_{G2}]` by summing over pairs of labelings, grouped by
/// overlap pattern.
pub fn exact_cross(
    t1: &Template,
    t2: &Template,
    n: usize,
    d: usize,
    k: usize,
    delta: f64,
    cond: Condition,
) -> f64 {
    let l1 = labelings(t1.num_nodes(), n);
    let l2 = labelings(t2.num_nodes(), n);
    let mut counts: BTreeMap<Vec<Vec<usize>>, usize> = BTreeMap::new();
    for a in &l1 {
        for b in &l2 {
            *counts.entry(row_pattern(&[a, b])).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|(pat, c)| {
            let fs = [
                Factor {
                    template: t1,
                    pi: pat[0].clone(),
                },
                Factor {
                    template: t2,
                    pi: pat[1].clone(),
                },
            ];
            c as f64 * exact_product(&fs, d, k, delta, cond)
        })
        .sum()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
