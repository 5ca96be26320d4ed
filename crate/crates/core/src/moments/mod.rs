//! Closed-form moments of template polynomials under the mixture prior.
//!
//! Values are assembled as polynomials in `Δ²` with exact rational
//! coefficients and only converted to floating point at the end.

mod bounds;
mod mc;

pub use bounds::{
    check_combinatorial_inequalities, exponent_terms_for, variance_ratio_bound, ExponentTerms,
    InequalityReport, InequalityWitness, VarianceRatioBound,
};
pub use mc::{
    mc_chunk, mc_until, precision_met, reference_suite, verdict, McBudget, MomentQuery,
    MomentReport, TrialSampler, Verdict, SE_ABSOLUTE_FLOOR, SE_RELATIVE_TARGET,
};

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::multigraph::{
    automorphism_count, for_each_pairing, matchings_within_budget, Matching, PruneContext,
    PruneSummary, Template, V1, V2,
};

pub use crate::model::ModelParams as MomentParams;

/// Polynomial in `Δ²`: `Σ_p c_p Δ^{2p}` with exact rational coefficients.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeltaPoly {
    terms: BTreeMap<usize, BigRational>,
}

impl DeltaPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut p = Self::zero();
        p.add_term(0, c);
        p
    }

    pub fn monomial(power: usize, c: BigRational) -> Self {
        let mut p = Self::zero();
        p.add_term(power, c);
        p
    }

    pub fn add_term(&mut self, power: usize, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(power).or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&power);
        }
    }

    pub fn add(&mut self, other: &DeltaPoly) {
        for (&p, c) in &other.terms {
            self.add_term(p, c.clone());
        }
    }

    pub fn scale(&self, s: &BigRational) -> DeltaPoly {
        let mut out = DeltaPoly::zero();
        for (&p, c) in &self.terms {
            out.add_term(p, c * s);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient of `Δ^{2·power}`.
    pub fn coefficient(&self, power: usize) -> BigRational {
        self.terms
            .get(&power)
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &BigRational)> {
        self.terms.iter().map(|(&p, c)| (p, c))
    }

    pub fn eval(&self, delta: f64) -> f64 {
        let d2 = delta * delta;
        self.terms
            .iter()
            .map(|(&p, c)| c.to_f64().unwrap_or(f64::NAN) * powi(d2, p))
            .sum()
    }
}

fn powi(x: f64, p: usize) -> f64 {
    let mut acc = 1.0;
    for _ in 0..p {
        acc *= x;
    }
    acc
}

fn big(n: usize) -> BigInt {
    BigInt::from(n)
}

fn rat(n: BigInt) -> BigRational {
    BigRational::from_integer(n)
}

/// `n (n−1) ⋯ (n−k+1)` (zero when `k > n`).
pub fn falling_factorial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    (0..k).fold(BigInt::one(), |acc, i| acc * big(n - i))
}

fn k_power(k: usize, exp: i64) -> BigRational {
    let base = num_traits::pow(big(k), exp.unsigned_abs() as usize);
    if exp >= 0 {
        rat(base)
    } else {
        BigRational::new(BigInt::one(), base)
    }
}

/// Accumulates counts of pruned-graph shapes, keyed by the quantities the
/// moment formulas depend on.
#[derive(Debug, Default)]
struct Tally {
    /// (|E_Δ|, |Cyc|, K-exponent, |V_Δ|) → count
    counts: BTreeMap<(usize, usize, i64, usize), u64>,
}

impl Tally {
    fn add(&mut self, e_delta: usize, cyc: usize, k_exp: i64, v_delta: usize) {
        *self
            .counts
            .entry((e_delta, cyc, k_exp, v_delta))
            .or_insert(0) += 1;
    }

    /// `Σ count · w(|V_Δ|) · d^{|Cyc|} K^{k_exp} Δ^{2|E_Δ|}`.
    fn to_poly(&self, d: usize, k: usize, weight: impl Fn(usize) -> BigInt) -> DeltaPoly {
        let mut p = DeltaPoly::zero();
        for (&(e, cyc, kexp, v), &count) in &self.counts {
            let c = rat(BigInt::from(count) * weight(v) * num_traits::pow(big(d), cyc))
                * k_power(k, kexp);
            p.add_term(e, c);
        }
        p
    }
}

/// Component count of a template where isolated `v1`/`v2` count as
/// components.
fn components(t: &Template) -> usize {
    t.num_node_components()
}

fn require_d_eq_k(p: &MomentParams, what: &str) -> Result<()> {
    if p.d != p.k {
        bail!(
            Unsupported,
            "{} requires d = K (got d = {}, K = {})",
            what,
            p.d,
            p.k
        );
    }
    Ok(())
}

/// Per-labeling mean `E[Ψ̄_{G,π}]` as a polynomial in `Δ²`.
fn labeled_mean_poly(t: &Template, d: usize, k: usize) -> Result<DeltaPoly> {
    if t.has_odd_degree() {
        return Ok(DeltaPoly::zero());
    }
    if t.has_interior_deg2() {
        if d != k {
            bail!(
                Unsupported,
                "mean of a template with an interior degree-2 node requires d = K"
            );
        }
        return Ok(DeltaPoly::zero());
    }
    let exp = t.num_nodes() as i64 - components(t) as i64;
    Ok(DeltaPoly::monomial(t.num_edges(), k_power(k, -exp)))
}

/// Per-labeling mean `E[Ψ̄_{G,π}]` at the given `Δ`.
pub fn labeled_mean(t: &Template, d: usize, k: usize, delta: f64) -> Result<f64> {
    Ok(labeled_mean_poly(t, d, k)?.eval(delta))
}

fn labeling_count(t: &Template, n: usize) -> BigRational {
    rat(falling_factorial(n - 2, t.num_nodes() - 2))
}

/// `E[Ψ̄_G]`.
pub fn mean_psibar_poly(t: &Template, p: &MomentParams) -> Result<DeltaPoly> {
    p.validate()?;
    Ok(labeled_mean_poly(t, p.d, p.k)?.scale(&labeling_count(t, p.n)))
}

pub fn mean_psibar(t: &Template, p: &MomentParams) -> Result<f64> {
    Ok(mean_psibar_poly(t, p)?.eval(p.delta))
}

/// `E[x Ψ̄_G]`: the component count is taken in `G` plus the edge `(v1, v2)`.
pub fn mean_x_psibar_poly(t: &Template, p: &MomentParams) -> Result<DeltaPoly> {
    p.validate()?;
    if t.has_odd_degree() {
        return Ok(DeltaPoly::zero());
    }
    if t.has_interior_deg2() {
        require_d_eq_k(p, "E[xΨ̄] with an interior degree-2 node")?;
        return Ok(DeltaPoly::zero());
    }
    let bar = t.with_edge(V1, V2);
    let exp = t.num_nodes() as i64 - components(&bar) as i64;
    Ok(DeltaPoly::monomial(
        t.num_edges(),
        labeling_count(t, p.n) * k_power(p.k, -exp),
    ))
}

pub fn mean_x_psibar(t: &Template, p: &MomentParams) -> Result<f64> {
    Ok(mean_x_psibar_poly(t, p)?.eval(p.delta))
}

/// `E[x Ψ̃_G]`: `1/K` for the edgeless template; the connected formula when
/// `G` is connected with even degrees and no interior degree-2 node; else 0.
pub fn mean_x_psitilde_poly(t: &Template, p: &MomentParams) -> Result<DeltaPoly> {
    p.validate()?;
    if t.num_edges() == 0 {
        return Ok(DeltaPoly::constant(BigRational::new(
            BigInt::one(),
            big(p.k),
        )));
    }
    if t.has_odd_degree() {
        return Ok(DeltaPoly::zero());
    }
    if t.has_interior_deg2() {
        require_d_eq_k(p, "E[xΨ̃] with an interior degree-2 node")?;
        return Ok(DeltaPoly::zero());
    }
    if !t.is_connected() {
        return Ok(DeltaPoly::zero());
    }
    let exp = t.num_nodes() as i64 - 1;
    let one_minus = BigRational::new(big(p.k - 1), big(p.k));
    Ok(DeltaPoly::monomial(
        t.num_edges(),
        labeling_count(t, p.n) * k_power(p.k, -exp) * one_minus,
    ))
}

pub fn mean_x_psitilde(t: &Template, p: &MomentParams) -> Result<f64> {
    Ok(mean_x_psitilde_poly(t, p)?.eval(p.delta))
}

fn check_labeling(t: &Template, pi: &[usize], n: usize) -> Result<()> {
    if pi.len() != t.num_nodes() {
        bail!(
            InvalidLabeling,
            "labeling has {} entries for {} nodes",
            pi.len(),
            t.num_nodes()
        );
    }
    if pi[V1] != 0 || pi[V2] != 1 {
        bail!(InvalidLabeling, "v1 and v2 must map to rows 1 and 2");
    }
    for (a, &r) in pi.iter().enumerate() {
        if r >= n || pi[..a].contains(&r) {
            bail!(
                InvalidLabeling,
                "labeling must be injective into the {} rows",
                n
            );
        }
    }
    Ok(())
}

/// Sum of `Δ^{2|E_Δ|} d^{|Cyc|} K^{−(|V_Δ|−|CC|)}` over pairings of one
/// matching, keeping only pruned graphs with all degrees even.
fn tally_matching(t1: &Template, t2: &Template, m: &Matching, tally: &mut Tally) -> Result<()> {
    let ctx = PruneContext::new(t1, t2, m);
    for_each_pairing(t1, t2, m, |pairing| {
        let s = ctx.summary(pairing);
        if s.all_degrees_even {
            tally.add(
                s.e_delta,
                s.n_cyc,
                -((s.v_delta - s.n_cc) as i64),
                s.v_delta,
            );
        }
    })
}

/// `E[Ψ̄_{G1,π1} Ψ̄_{G2,π2}]` for templates without interior degree-2 nodes.
pub fn cross_moment_labeled_poly(
    t1: &Template,
    pi1: &[usize],
    t2: &Template,
    pi2: &[usize],
    p: &MomentParams,
) -> Result<DeltaPoly> {
    p.validate()?;
    check_labeling(t1, pi1, p.n)?;
    check_labeling(t2, pi2, p.n)?;
    if t1.has_interior_deg2() || t2.has_interior_deg2() {
        bail!(
            Unsupported,
            "exact cross moments need templates without interior degree-2 nodes; use cross_moment_envelope"
        );
    }
    let m = Matching::from_labelings(pi1, pi2);
    let mut tally = Tally::default();
    tally_matching(t1, t2, &m, &mut tally)?;
    Ok(tally.to_poly(p.d, p.k, |_| BigInt::one()))
}

pub fn cross_moment_labeled(
    t1: &Template,
    pi1: &[usize],
    t2: &Template,
    pi2: &[usize],
    p: &MomentParams,
) -> Result<f64> {
    Ok(cross_moment_labeled_poly(t1, pi1, t2, pi2, p)?.eval(p.delta))
}

/// `E[Ψ̄_{G1} Ψ̄_{G2}]` summed over all labelings, for templates without
/// interior degree-2 nodes.
pub fn cross_moment_poly(t1: &Template, t2: &Template, p: &MomentParams) -> Result<DeltaPoly> {
    p.validate()?;
    if t1.has_interior_deg2() || t2.has_interior_deg2() {
        bail!(
            Unsupported,
            "exact second moments need templates without interior degree-2 nodes"
        );
    }
    let mut tally = Tally::default();
    for m in matchings_within_budget(t1, t2, false)? {
        tally_matching(t1, t2, &m, &mut tally)?;
    }
    let n = p.n;
    Ok(tally.to_poly(p.d, p.k, |v| falling_factorial(n - 2, v - 2)))
}

/// `E[Ψ̄_G²]`.
pub fn second_moment_psibar_poly(t: &Template, p: &MomentParams) -> Result<DeltaPoly> {
    cross_moment_poly(t, t, p)
}

pub fn second_moment_psibar(t: &Template, p: &MomentParams) -> Result<f64> {
    Ok(second_moment_psibar_poly(t, p)?.eval(p.delta))
}

/// Exact `E[Ψ̄_{G1} Ψ̄_{G2}]` under pure noise (`Δ = 0`): only pairings that
/// consume every half-edge contribute `d^{|Cyc|}`. Interior degree-2 nodes
/// are allowed since the correction vanishes at `Δ = 0`.
pub fn null_cross_moment(t1: &Template, t2: &Template, n: usize, d: usize) -> Result<BigRational> {
    let mut total = BigInt::zero();
    for m in matchings_within_budget(t1, t2, false)? {
        let ctx = PruneContext::new(t1, t2, &m);
        let mut acc = BigInt::zero();
        let full = t1.num_halfedges() == t2.num_halfedges();
        if full {
            for_each_pairing(t1, t2, &m, |pairing| {
                if pairing.len() == t1.num_halfedges() {
                    let s = ctx.summary(pairing);
                    acc +=
                        falling_factorial(n - 2, s.v_delta - 2) * num_traits::pow(big(d), s.n_cyc);
                }
            })?;
        }
        total += acc;
    }
    Ok(rat(total))
}

/// Bracket `center ± radius` around a moment that is only bounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub center: f64,
    pub radius: f64,
}

impl Envelope {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.center).abs() <= self.radius * (1.0 + 1e-12) + 1e-12
    }
}

/// Envelope for `E[Ψ̄_{G1,π1} Ψ̄_{G2,π2}]` when interior degree-2 nodes are
/// present: full pairings give the center, the rest weighted by
/// `2^{#degree-2 nodes with no paired half-edge}` give the radius.
pub fn cross_moment_envelope(
    t1: &Template,
    pi1: &[usize],
    t2: &Template,
    pi2: &[usize],
    p: &MomentParams,
) -> Result<Envelope> {
    p.validate()?;
    check_labeling(t1, pi1, p.n)?;
    check_labeling(t2, pi2, p.n)?;
    require_d_eq_k(p, "the degree-2 cross-moment envelope")?;
    let m = Matching::from_labelings(pi1, pi2);
    let deg2_1 = t1.interior_deg2_flags();
    let deg2_2 = t2.interior_deg2_flags();
    let all_matched = (0..t1.num_nodes()).all(|u| !deg2_1[u] || m.partner_of_first(u).is_some())
        && (0..t2.num_nodes()).all(|w| !deg2_2[w] || m.partner_of_second(w).is_some());
    if !all_matched {
        return Ok(Envelope {
            center: 0.0,
            radius: 0.0,
        });
    }
    let ctx = PruneContext::new(t1, t2, &m);
    let off = t1.num_halfedges();
    let total = t1.num_halfedges() + t2.num_halfedges();
    let (mut center, mut radius) = (Tally::default(), Tally::default());
    let halves1: Vec<Vec<usize>> = (0..t1.num_nodes()).map(|u| t1.halfedges_at(u)).collect();
    let halves2: Vec<Vec<usize>> = (0..t2.num_nodes()).map(|w| t2.halfedges_at(w)).collect();
    for_each_pairing(t1, t2, &m, |pairing| {
        let s = ctx.summary(pairing);
        let kexp = -((s.v_delta - s.n_cc) as i64);
        if 2 * pairing.len() == total {
            center.add(s.e_delta, s.n_cyc, kexp, s.v_delta);
        } else {
            let mut paired = alloc::vec![false; total];
            for &(a, b) in pairing {
                paired[a] = true;
                paired[off + b] = true;
            }
            let np1 = (0..t1.num_nodes())
                .filter(|&u| deg2_1[u] && halves1[u].iter().all(|&h| !paired[h]))
                .count();
            let np2 = (0..t2.num_nodes())
                .filter(|&w| deg2_2[w] && halves2[w].iter().all(|&h| !paired[off + h]))
                .count();
            for _ in 0..(1usize << (np1 + np2)) {
                radius.add(s.e_delta, s.n_cyc, kexp, s.v_delta);
            }
        }
    })?;
    let one = |_| BigInt::one();
    Ok(Envelope {
        center: center.to_poly(p.d, p.k, one).eval(p.delta),
        radius: radius.to_poly(p.d, p.k, one).eval(p.delta),
    })
}

fn in_star(t1: &Template, t2: &Template, m: &Matching) -> bool {
    let c1 = t1.node_components();
    let c2 = t2.node_components();
    let hit1 = (0..t1.num_node_components()).all(|c| m.pairs.iter().any(|&(a, _)| c1[a] == c));
    let hit2 = (0..t2.num_node_components()).all(|c| m.pairs.iter().any(|&(_, b)| c2[b] == c));
    hit1 && hit2
}

/// Envelope for `E[Ψ̃_{G1} Ψ̃_{G2}]`: exact `1{G1 ≃ G2}` when either template
/// is edgeless, otherwise the full-pairing sum over star matchings with the
/// remaining pairings weighted by `2^{4(|M| − |M_full|)}` as radius.
pub fn psitilde_cross_envelope(t1: &Template, t2: &Template, p: &MomentParams) -> Result<Envelope> {
    p.validate()?;
    if t1.num_edges() == 0 || t2.num_edges() == 0 {
        let same = t1.num_edges() == 0 && t2.num_edges() == 0;
        return Ok(Envelope {
            center: if same { 1.0 } else { 0.0 },
            radius: 0.0,
        });
    }
    let (mut center, mut radius) = (Tally::default(), Tally::default());
    let total = t1.num_halfedges() + t2.num_halfedges();
    for m in matchings_within_budget(t1, t2, true)? {
        debug_assert!(in_star(t1, t2, &m));
        let ctx = PruneContext::new(t1, t2, &m);
        let mlen = m.len();
        for_each_pairing(t1, t2, &m, |pairing| {
            let s = ctx.summary(pairing);
            let kexp = -((s.v_delta - s.n_cc) as i64);
            if 2 * pairing.len() == total {
                center.add(s.e_delta, s.n_cyc, kexp, s.v_delta);
            } else {
                for _ in 0..(1usize << (4 * (mlen - s.n_m_full))) {
                    radius.add(s.e_delta, s.n_cyc, kexp, s.v_delta);
                }
            }
        })?;
    }
    let n = p.n;
    Ok(Envelope {
        center: center
            .to_poly(p.d, p.k, |v| falling_factorial(n - 2, v - 2))
            .eval(p.delta),
        radius: radius
            .to_poly(p.d, p.k, |v| falling_factorial(n - 2, v - 2))
            .eval(p.delta),
    })
}

/// `V(G) = |Aut(G)| d^{|E|} (n−2)!/(n−|V|)!`.
pub fn variance_proxy(t: &Template, p: &MomentParams) -> Result<f64> {
    p.validate()?;
    let aut = automorphism_count(t)?;
    let v = BigInt::from(aut)
        * num_traits::pow(big(p.d), t.num_edges())
        * falling_factorial(p.n - 2, t.num_nodes() - 2);
    Ok(v.to_f64().unwrap_or(f64::INFINITY))
}

const GSTAR_VARIANCE_NODE_GUARD: usize = 5;

/// `E[Ψ̄_{G*} | x = 1]`; the conditional mean given `x = 0` is zero.
pub fn gstar_conditional_mean_poly(l: usize, m: usize, p: &MomentParams) -> Result<DeltaPoly> {
    p.validate()?;
    let g = crate::multigraph::build_gstar(l, m)?;
    let exp = g.num_nodes() as i64 - 2;
    Ok(DeltaPoly::monomial(
        g.num_edges(),
        labeling_count(&g, p.n) * k_power(p.k, -exp),
    ))
}

/// Conditional variances of `Ψ̄_{G*}` given `x = 0` and `x = 1`.
pub fn conditional_variances_gstar_poly(
    l: usize,
    m: usize,
    p: &MomentParams,
) -> Result<(DeltaPoly, DeltaPoly)> {
    p.validate()?;
    require_d_eq_k(p, "conditional variances of G*")?;
    let g = crate::multigraph::build_gstar(l, m)?;
    if g.num_nodes() > GSTAR_VARIANCE_NODE_GUARD {
        bail!(
            Capacity,
            "G* with {} nodes exceeds the variance guard of {}",
            g.num_nodes(),
            GSTAR_VARIANCE_NODE_GUARD
        );
    }
    let n = p.n;
    let v = g.num_nodes();
    let mut var0 = Tally::default();
    let mut var1 = Tally::default();
    // Σ_M ff(M) (K^{|M|−2} − 1), for the squared-mean correction at x = 1.
    let mut c_sum = BigRational::zero();
    for mt in matchings_within_budget(&g, &g, false)? {
        let ctx = PruneContext::new(&g, &g, &mt);
        let vd = 2 * v - mt.len();
        c_sum += rat(falling_factorial(n - 2, vd - 2))
            * (k_power(p.k, mt.len() as i64 - 2) - BigRational::one());
        for_each_pairing(&g, &g, &mt, |pairing| {
            if pairing.is_empty() {
                return;
            }
            let s: PruneSummary = ctx.summary(pairing);
            let base = (s.v_delta - s.n_cc) as i64;
            if !s.v1_sim_v2 {
                var0.add(s.e_delta, s.n_cyc, -base, s.v_delta);
            }
            var1.add(
                s.e_delta,
                s.n_cyc,
                -(base - i64::from(s.v1_sim_v2)),
                s.v_delta,
            );
        })?;
    }
    let w = |vd: usize| falling_factorial(n - 2, vd - 2);
    let p0 = var0.to_poly(p.d, p.k, w);
    let mut p1 = var1.to_poly(p.d, p.k, w);
    let mean1 = gstar_conditional_mean_poly(l, m, p)?;
    let pi_count = labeling_count(&g, n);
    let mean_sq_over_pi2 =
        DeltaPoly::monomial(2 * g.num_edges(), k_power(p.k, -2 * (v as i64 - 2)));
    if !pi_count.is_zero() {
        p1.add(&mean_sq_over_pi2.scale(&c_sum));
    }
    let _ = mean1;
    Ok((p0, p1))
}

pub fn conditional_variances_gstar(l: usize, m: usize, p: &MomentParams) -> Result<(f64, f64)> {
    let (a, b) = conditional_variances_gstar_poly(l, m, p)?;
    Ok((a.eval(p.delta), b.eval(p.delta)))
}
