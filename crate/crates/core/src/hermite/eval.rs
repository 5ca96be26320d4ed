//! Exact evaluation of `Ψ̄_{G,π}`, `Ψ̄_G` and `Ψ̃_G` by variable elimination.
//!
//! Each edge carries a feature index in `[d]`. A node contributes a factor
//! over its distinct incident edges: the product over coordinates of
//! `ψ̄_β(Y_{row, j})`, where `β` counts incident half-edges set to `j`.
//! Edge variables are summed out one at a time; each connected component of
//! the template collapses to a scalar.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{hermite_values, HermiteContext};
use crate::error::{bail, Result};
use crate::linalg::Matrix;
use crate::moments::labeled_mean;
use crate::multigraph::Template;
use crate::stats::CompensatedSum;

/// Largest intermediate table (entries) a plan may allocate.
const TABLE_GUARD: usize = 1 << 24;
/// Largest number of injective labelings summed by `eval_psibar`.
pub const LABELING_GUARD: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyValue {
    pub value: f64,
    pub labelings: u128,
    /// `d^{|E|}` feature tuples per labeling, times the labelings covered.
    pub n_terms_evaluated: u128,
}

#[derive(Debug, Clone, Copy)]
enum Src {
    Node(usize),
    Temp(usize),
}

#[derive(Debug, Clone)]
struct Step {
    inputs: Vec<Src>,
    /// Per input: strides of the output positions followed by the
    /// eliminated variable (0 where the input lacks the variable).
    strides: Vec<Vec<usize>>,
    out_rank: usize,
    out_len: usize,
    out: usize,
}

#[derive(Debug, Clone)]
struct ComponentPlan {
    steps: Vec<Step>,
    finals: Vec<Src>,
}

/// Per-node factor shape. Nodes with equal `(mults, deg2)` share tables.
#[derive(Debug, Clone, PartialEq)]
struct Pattern {
    mults: Vec<usize>,
    deg2: bool,
    len: usize,
}

#[derive(Debug, Clone)]
struct Compiled {
    num_nodes: usize,
    num_edges: usize,
    d: usize,
    /// Pattern index per node (`None` for isolated `v1`/`v2`).
    node_pattern: Vec<Option<usize>>,
    patterns: Vec<Pattern>,
    components: Vec<ComponentPlan>,
    /// Edge indices of each component (used for sub-templates).
    component_edges: Vec<Vec<usize>>,
    temp_offsets: Vec<usize>,
    temp_lens: Vec<usize>,
    /// Patterns used by some interior node (needed on every row).
    pattern_interior: Vec<bool>,
    arena_len: usize,
    prod_len: usize,
    max_degree: usize,
}

fn pow_usize(d: usize, k: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..k {
        acc = acc.checked_mul(d)?;
    }
    Some(acc)
}

fn table_len(d: usize, rank: usize) -> Result<usize> {
    match pow_usize(d, rank) {
        Some(n) if n <= TABLE_GUARD => Ok(n),
        _ => bail!(
            Capacity,
            "factor table d^{} with d = {} exceeds {} entries",
            rank,
            d,
            TABLE_GUARD
        ),
    }
}

fn compile(t: &Template, d: usize) -> Result<Compiled> {
    if d == 0 {
        bail!(InvalidParams, "dimension must be positive");
    }
    let r = t.num_nodes();
    let deg = t.degrees();
    let deg2 = t.interior_deg2_flags();
    let mut node_vars: Vec<Vec<(usize, usize)>> = vec![Vec::new(); r];
    for (e, &(u, v)) in t.edges().iter().enumerate() {
        if u == v {
            node_vars[u].push((e, 2));
        } else {
            node_vars[u].push((e, 1));
            node_vars[v].push((e, 1));
        }
    }
    let mut patterns: Vec<Pattern> = Vec::new();
    let mut node_pattern = vec![None; r];
    for u in 0..r {
        if node_vars[u].is_empty() {
            continue;
        }
        let mults: Vec<usize> = node_vars[u].iter().map(|&(_, m)| m).collect();
        let len = table_len(d, mults.len())?;
        let pat = Pattern {
            mults,
            deg2: deg2[u],
            len,
        };
        let idx = match patterns.iter().position(|p| *p == pat) {
            Some(i) => i,
            None => {
                patterns.push(pat);
                patterns.len() - 1
            }
        };
        node_pattern[u] = Some(idx);
    }

    let mut pattern_interior = vec![false; patterns.len()];
    for u in 2..r {
        if let Some(p) = node_pattern[u] {
            pattern_interior[p] = true;
        }
    }
    let component_edges = t.edge_components();
    let mut components = Vec::new();
    let mut temp_lens: Vec<usize> = Vec::new();
    let mut prod_len = 0;
    let labels = t.node_components();
    for comp in &component_edges {
        let label = labels[t.edges()[comp[0]].0];
        // Factors alive: (scope, src).
        let mut alive: Vec<(Vec<usize>, Src)> = (0..r)
            .filter(|&u| labels[u] == label && !node_vars[u].is_empty())
            .map(|u| (node_vars[u].iter().map(|&(e, _)| e).collect(), Src::Node(u)))
            .collect();
        let mut remaining: Vec<usize> = comp.clone();
        let mut steps = Vec::new();
        while !remaining.is_empty() {
            // Greedy: eliminate the variable whose result has the smallest scope.
            let mut best: Option<(usize, usize, Vec<usize>)> = None;
            for (pos, &v) in remaining.iter().enumerate() {
                let mut scope: Vec<usize> = Vec::new();
                for (s, _) in alive.iter().filter(|(s, _)| s.contains(&v)) {
                    for &w in s {
                        if w != v && !scope.contains(&w) {
                            scope.push(w);
                        }
                    }
                }
                if best.as_ref().map_or(true, |b| scope.len() < b.2.len()) {
                    best = Some((pos, v, scope));
                }
            }
            let (pos, v, mut out_scope) = best.expect("remaining is non-empty");
            remaining.swap_remove(pos);
            out_scope.sort_unstable();
            let out_rank = out_scope.len();
            let out_len = table_len(d, out_rank)?;
            prod_len = prod_len.max(out_len.checked_mul(d).unwrap_or(usize::MAX));
            table_len(d, out_rank + 1)?;
            let mut combined = out_scope.clone();
            combined.push(v);
            let mut inputs = Vec::new();
            let mut strides = Vec::new();
            let mut keep = Vec::new();
            for (scope, src) in alive.drain(..) {
                if scope.contains(&v) {
                    let q = scope.len();
                    let st = combined
                        .iter()
                        .map(|w| match scope.iter().position(|x| x == w) {
                            Some(i) => pow_usize(d, q - 1 - i).expect("checked by table_len"),
                            None => 0,
                        })
                        .collect();
                    inputs.push(src);
                    strides.push(st);
                } else {
                    keep.push((scope, src));
                }
            }
            alive = keep;
            let out = temp_lens.len();
            temp_lens.push(out_len);
            alive.push((out_scope, Src::Temp(out)));
            steps.push(Step {
                inputs,
                strides,
                out_rank,
                out_len,
                out,
            });
        }
        let finals = alive.into_iter().map(|(_, src)| src).collect();
        components.push(ComponentPlan { steps, finals });
    }
    let mut temp_offsets = Vec::with_capacity(temp_lens.len());
    let mut acc = 0;
    for &l in &temp_lens {
        temp_offsets.push(acc);
        acc += l;
    }
    Ok(Compiled {
        num_nodes: r,
        num_edges: t.num_edges(),
        d,
        node_pattern,
        patterns,
        components,
        component_edges,
        temp_offsets,
        temp_lens,
        pattern_interior,
        arena_len: acc,
        prod_len,
        max_degree: deg.iter().copied().max().unwrap_or(0),
    })
}

/// Reusable evaluator for one template and dimension. Buffers are kept
/// between calls so Monte Carlo loops do not allocate.
#[derive(Debug, Clone)]
pub struct PsiEvaluator {
    template: Template,
    ctx: HermiteContext,
    plan: Compiled,
    /// Hermite values per (row, coordinate, order).
    herm: Vec<f64>,
    /// Node tables per (pattern, row).
    tables: Vec<Vec<f64>>,
    table_rows: usize,
    arena: Vec<f64>,
    prod: Vec<f64>,
    digits: Vec<usize>,
    beta: Vec<usize>,
    comp_values: Vec<f64>,
    pi: Vec<usize>,
}

impl PsiEvaluator {
    pub fn new(t: &Template, d: usize, ctx: HermiteContext) -> Result<Self> {
        let plan = compile(t, d)?;
        let max_rank = plan
            .components
            .iter()
            .flat_map(|c| c.steps.iter())
            .map(|s| s.out_rank)
            .max()
            .unwrap_or(0);
        let ncomp = plan.components.len();
        Ok(PsiEvaluator {
            template: t.clone(),
            ctx,
            tables: vec![Vec::new(); plan.patterns.len()],
            table_rows: 0,
            herm: Vec::new(),
            arena: vec![0.0; plan.arena_len],
            prod: vec![0.0; plan.prod_len],
            digits: vec![0; max_rank + 1],
            beta: vec![0; d],
            comp_values: vec![0.0; ncomp],
            pi: vec![0; t.num_nodes()],
            plan,
        })
    }

    pub fn template(&self) -> &Template {
        &self.template
    }

    pub fn context(&self) -> &HermiteContext {
        &self.ctx
    }

    pub fn set_context(&mut self, ctx: HermiteContext) {
        self.ctx = ctx;
    }

    pub fn num_components(&self) -> usize {
        self.plan.components.len()
    }

    /// The templates `G*_l`: each edge component with `v1`, `v2` added.
    pub fn component_templates(&self) -> Vec<Template> {
        self.plan
            .component_edges
            .iter()
            .map(|es| self.template.subtemplate(es).0)
            .collect()
    }

    /// Exact per-labeling means of the component polynomials.
    pub fn exact_centering(&self) -> Result<Vec<f64>> {
        self.component_templates()
            .iter()
            .map(|g| labeled_mean(g, self.plan.d, self.ctx.k, self.ctx.delta))
            .collect::<Result<Vec<_>>>()
    }

    fn check_data(&self, y: &Matrix) -> Result<()> {
        if y.cols() != self.plan.d {
            bail!(
                InvalidParams,
                "data has {} columns, evaluator built for d = {}",
                y.cols(),
                self.plan.d
            );
        }
        if y.rows() < self.plan.num_nodes {
            bail!(
                InvalidParams,
                "{} rows cannot host a template with {} nodes",
                y.rows(),
                self.plan.num_nodes
            );
        }
        Ok(())
    }

    /// Fill Hermite values and node tables for the listed rows.
    fn prepare_rows(&mut self, y: &Matrix, rows: impl Iterator<Item = usize> + Clone) {
        let d = self.plan.d;
        let n = y.rows();
        let hw = self.plan.max_degree + 1;
        self.herm.resize(n * d * hw, 0.0);
        self.table_rows = n;
        for (p, pat) in self.plan.patterns.iter().enumerate() {
            self.tables[p].resize(n * pat.len, 0.0);
        }
        for r in rows.clone() {
            let yr = y.row(r);
            for j in 0..d {
                let base = (r * d + j) * hw;
                hermite_values(yr[j], &mut self.herm[base..base + hw]);
            }
        }
        for (p, pat) in self.plan.patterns.iter().enumerate() {
            for r in rows.clone() {
                if r >= 2 && !self.plan.pattern_interior[p] {
                    continue;
                }
                fill_node_table(
                    pat,
                    &self.herm[r * d * hw..(r + 1) * d * hw],
                    hw,
                    d,
                    self.ctx.correction,
                    &mut self.beta,
                    &mut self.tables[p][r * pat.len..(r + 1) * pat.len],
                );
            }
        }
    }

    fn node_table(&self, u: usize, row: usize) -> &[f64] {
        let p = self.plan.node_pattern[u].expect("only nodes with edges enter plans");
        let len = self.plan.patterns[p].len;
        &self.tables[p][row * len..(row + 1) * len]
    }

    /// Component values for the labeling in `self.pi`; tables must be ready.
    fn run_components(&mut self) {
        let d = self.plan.d;
        for c in 0..self.plan.components.len() {
            for s in 0..self.plan.components[c].steps.len() {
                let step = &self.plan.components[c].steps[s];
                let prod = &mut self.prod[..step.out_len * d];
                for (k, (src, strides)) in step.inputs.iter().zip(&step.strides).enumerate() {
                    let table: &[f64] = match *src {
                        Src::Node(u) => {
                            let p = self.plan.node_pattern[u].expect("plan nodes have edges");
                            let len = self.plan.patterns[p].len;
                            let row = self.pi[u];
                            &self.tables[p][row * len..(row + 1) * len]
                        }
                        Src::Temp(t) => {
                            let off = self.plan.temp_offsets[t];
                            &self.arena[off..off + self.plan.temp_lens[t]]
                        }
                    };
                    accumulate_input(
                        table,
                        strides,
                        step.out_rank,
                        d,
                        k == 0,
                        prod,
                        &mut self.digits,
                    );
                }
                let off = self.plan.temp_offsets[step.out];
                let out = &mut self.arena[off..off + step.out_len];
                for (o, chunk) in out.iter_mut().zip(prod.chunks_exact(d)) {
                    *o = chunk.iter().sum();
                }
            }
            let mut v = 1.0;
            for src in &self.plan.components[c].finals {
                v *= match *src {
                    Src::Temp(t) => self.arena[self.plan.temp_offsets[t]],
                    Src::Node(u) => self.node_table(u, self.pi[u])[0],
                };
            }
            self.comp_values[c] = v;
        }
    }

    fn check_labeling(&self, y: &Matrix, pi: &[usize]) -> Result<()> {
        if pi.len() != self.plan.num_nodes {
            bail!(
                InvalidLabeling,
                "labeling has {} entries for {} nodes",
                pi.len(),
                self.plan.num_nodes
            );
        }
        if pi[0] != 0 || pi[1] != 1 {
            bail!(InvalidLabeling, "v1 and v2 must map to rows 1 and 2");
        }
        for (a, &ra) in pi.iter().enumerate() {
            if ra >= y.rows() {
                bail!(InvalidLabeling, "row {} out of range", ra + 1);
            }
            if pi[..a].contains(&ra) {
                bail!(
                    InvalidLabeling,
                    "labeling is not injective (row {} repeated)",
                    ra + 1
                );
            }
        }
        Ok(())
    }

    /// `Ψ̄_{G,π}(Y)` for a single labeling (`pi[v]` is a 0-based row).
    pub fn psibar_labeled(&mut self, y: &Matrix, pi: &[usize]) -> Result<f64> {
        self.check_data(y)?;
        self.check_labeling(y, pi)?;
        let rows: Vec<usize> = pi.to_vec();
        self.prepare_rows(y, rows.iter().copied());
        self.pi.copy_from_slice(pi);
        self.run_components();
        Ok(self.comp_values.iter().product())
    }

    fn labeling_count(&self, y: &Matrix) -> Result<u128> {
        let count = self.template.labeling_count(y.rows());
        if count > LABELING_GUARD {
            bail!(
                Capacity,
                "{} labelings exceed the guard of {}",
                count,
                LABELING_GUARD
            );
        }
        Ok(count)
    }

    fn sum_over_labelings(
        &mut self,
        y: &Matrix,
        mut term: impl FnMut(&[f64]) -> f64,
    ) -> Result<PolyValue> {
        self.check_data(y)?;
        let count = self.labeling_count(y)?;
        self.prepare_rows(y, 0..y.rows());
        let n = y.rows();
        let r = self.plan.num_nodes;
        let mut used = vec![false; n];
        used[0] = true;
        used[1] = true;
        self.pi[0] = 0;
        self.pi[1] = 1;
        let mut sum = CompensatedSum::new();
        // Depth-first enumeration of injective maps of nodes 2..r into rows 2..n.
        if r == 2 {
            self.run_components();
            sum.add(term(&self.comp_values));
        } else {
            let mut cursor = vec![1usize; r];
            let mut level = 2;
            while level >= 2 {
                if cursor[level] >= 2 {
                    used[cursor[level]] = false;
                }
                let mut c = cursor[level] + 1;
                while c < n && used[c] {
                    c += 1;
                }
                if c >= n {
                    cursor[level] = 1;
                    level -= 1;
                    continue;
                }
                cursor[level] = c;
                used[c] = true;
                self.pi[level] = c;
                if level + 1 == r {
                    self.run_components();
                    sum.add(term(&self.comp_values));
                } else {
                    level += 1;
                    cursor[level] = 1;
                }
            }
        }
        let terms = pow_u128(self.plan.d, self.plan.num_edges).saturating_mul(count);
        Ok(PolyValue {
            value: sum.value(),
            labelings: count,
            n_terms_evaluated: terms,
        })
    }

    /// `Ψ̄_G(Y)`: sum over injective labelings with `v1 → 1`, `v2 → 2`.
    pub fn psibar(&mut self, y: &Matrix) -> Result<PolyValue> {
        self.sum_over_labelings(y, |vals| vals.iter().product())
    }

    /// `Ψ̃_G(Y)` with the given per-component centering constants.
    pub fn psitilde(&mut self, y: &Matrix, centering: &[f64]) -> Result<PolyValue> {
        if centering.len() != self.plan.components.len() {
            bail!(
                MissingCentering,
                "{} centering constants for {} components",
                centering.len(),
                self.plan.components.len()
            );
        }
        let c = centering.to_vec();
        self.sum_over_labelings(y, |vals| vals.iter().zip(&c).map(|(v, m)| v - m).product())
    }
}

fn pow_u128(d: usize, k: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..k {
        acc = acc.saturating_mul(d as u128);
    }
    acc
}

/// Multiply one input factor into `prod[out_idx * d + x]` (or overwrite it
/// when `first`).
fn accumulate_input(
    table: &[f64],
    strides: &[usize],
    out_rank: usize,
    d: usize,
    first: bool,
    prod: &mut [f64],
    digits: &mut [usize],
) {
    let last = strides[out_rank];
    let digits = &mut digits[..out_rank];
    digits.iter_mut().for_each(|x| *x = 0);
    let mut base = 0usize;
    for chunk in prod.chunks_exact_mut(d) {
        if first {
            for (x, p) in chunk.iter_mut().enumerate() {
                *p = table[base + x * last];
            }
        } else {
            for (x, p) in chunk.iter_mut().enumerate() {
                *p *= table[base + x * last];
            }
        }
        let mut k = out_rank;
        while k > 0 {
            k -= 1;
            digits[k] += 1;
            base += strides[k];
            if digits[k] < d {
                break;
            }
            digits[k] = 0;
            base -= d * strides[k];
        }
    }
}

/// Node factor for one row: entry for the feature assignment `c` of the
/// node's distinct edges is `Π_j ψ̄_{β_j}(Y_j)` with `β_j = Σ_{i: c_i = j} mult_i`.
fn fill_node_table(
    pat: &Pattern,
    herm_row: &[f64],
    hw: usize,
    d: usize,
    correction: f64,
    beta: &mut [usize],
    out: &mut [f64],
) {
    let q = pat.mults.len();
    let mut assign = vec![0usize; q];
    for slot in out.iter_mut() {
        for (&c, &m) in assign.iter().zip(&pat.mults) {
            beta[c] += m;
        }
        let mut v = 1.0;
        for &c in &assign {
            let b = beta[c];
            if b == 0 {
                continue;
            }
            let h = if b == 2 && pat.deg2 {
                let x = herm_row[c * hw + 1];
                x * x - correction
            } else {
                herm_row[c * hw + b]
            };
            v *= h;
            beta[c] = 0;
        }
        *slot = v;
        let mut k = q;
        while k > 0 {
            k -= 1;
            assign[k] += 1;
            if assign[k] < d {
                break;
            }
            assign[k] = 0;
        }
    }
}

/// `Ψ̄_{G,π}(Y)` for one labeling (`pi[v]` is a 0-based row index).
pub fn eval_psibar_labeled(
    t: &Template,
    pi: &[usize],
    y: &Matrix,
    ctx: &HermiteContext,
) -> Result<f64> {
    PsiEvaluator::new(t, y.cols(), *ctx)?.psibar_labeled(y, pi)
}

/// `Ψ̄_G(Y)` summed over all injective labelings.
pub fn eval_psibar(t: &Template, y: &Matrix, ctx: &HermiteContext) -> Result<PolyValue> {
    PsiEvaluator::new(t, y.cols(), *ctx)?.psibar(y)
}

/// `Ψ̃_G(Y)` with exact centering constants; errors when a component's mean
/// is not available in closed form.
pub fn eval_psitilde(t: &Template, y: &Matrix, ctx: &HermiteContext) -> Result<PolyValue> {
    let mut ev = PsiEvaluator::new(t, y.cols(), *ctx)?;
    let c = ev.exact_centering()?;
    ev.psitilde(y, &c)
}
