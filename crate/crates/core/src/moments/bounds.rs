use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ModelParams;
use crate::multigraph::{for_each_pairing, matchings_within_budget, PruneContext, Template};

/// Value of the variance-ratio bound for `G*` together with its
/// precondition flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRatioBound {
    pub value: f64,
    /// `M ≥ 24`.
    pub m_condition: bool,
    /// `n ≥ 64 · max(4M²L², 10⁴(M+2)⁴) · K`.
    pub n_condition: bool,
    /// Lower bound on `Δ²` in terms of `(n, K, L, M)`.
    pub delta_condition: bool,
    pub min_delta_sq: f64,
    pub flag: bool,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Upper bound on `Var(Ψ̄_{G*} | x) / E[Ψ̄_{G*} | x = 1]²`, evaluated in
/// log space so that very large `n` and `M` stay finite.
pub fn variance_ratio_bound(l: usize, m: usize, p: &ModelParams) -> VarianceRatioBound {
    let (lf, mf) = (l as f64, m as f64);
    let (kf, nf) = (p.k as f64, p.n as f64);
    let ln_k = kf.ln();
    let ln_n = nf.ln();
    let ln_d2 = (p.delta * p.delta).ln();
    let m1 = mf + 1.0;
    let ln_c = 1e4f64.ln() + 4.0 * (mf + 2.0).ln();

    let first_a = (4.0 + 2.0 / m1 + 4.0 / lf) * ln_k - ln_n - 4.0 * (1.0 - 1.0 / m1) * ln_d2;
    let first_b = ln_k - ln_n;
    let t1 = ln_c + first_a.max(first_b);
    let t2 = ln_k + 2.0 * m1 * m1.ln() - 2.0 * m1 * ln_d2;
    let t3 = 2.0f64.ln() + 5.0 * m1.ln() - ln_d2;
    let t4 = 4.0f64.ln() + 2.0 * mf.ln() + 2.0 * lf.ln() + ln_k - ln_n;
    let value = log_sum_exp(&[t1, t2, t3, t4]).exp();

    let n_min = 64.0 * (4.0 * mf * mf * lf * lf).max(1e4 * (mf + 2.0).powi(4)) * kf;
    let n_condition = nf >= n_min;

    let ln_inner =
        (40.0 * (mf + 2.0)).ln() + (1.0 + 1.0 / (2.0 * m1) + 1.0 / lf) * ln_k - ln_n / 4.0;
    let cand_a = if m == 0 {
        f64::INFINITY
    } else {
        (ln_inner * m1 / mf).exp()
    };
    let cand_b = 8.0 * m1.powi(6) * (6.0 / m1 * ln_k).exp();
    let cand_c = 128.0 * m1.powi(12);
    let min_delta_sq = cand_a.max(cand_b).max(cand_c);
    let delta_condition = p.delta * p.delta >= min_delta_sq;
    let m_condition = m >= 24;

    VarianceRatioBound {
        value,
        m_condition,
        n_condition,
        delta_condition,
        min_delta_sq,
        flag: m_condition && n_condition && delta_condition,
    }
}

/// First offending `(matching, pairing)` for a check, kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InequalityWitness {
    pub check: String,
    pub matching: Vec<(usize, usize)>,
    pub pairing: Vec<(usize, usize)>,
    pub value: i64,
}

/// Outcome of the combinatorial checks over every `(M, P)` of a template pair.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub pairs_checked: u64,
    /// `B < 0`.
    pub b_violations: u64,
    /// `C < 0`.
    pub c_violations: u64,
    /// `2|CC| > 2|Op_even| + |Op_odd| + 2|M|`, star matchings only.
    pub cc_violations: u64,
    /// `b1 ≠ (|M| − |M_full|) + C`.
    pub b1_identity_violations: u64,
    /// `b1 ≠ 3(|M| − |M_full|) + C`, the form with a factor 3.
    pub b1_tripled_mismatches: u64,
    /// `b2 ≠ 2|M| + |P| − 2|Cyc| − 2|CC|`, or `b2 < B` on a star matching.
    pub b2_violations: u64,
    /// `b0 < 0`.
    pub b0_violations: u64,
    pub witnesses: Vec<InequalityWitness>,
}

impl InequalityReport {
    /// Violations of the inequalities themselves (the tripled-form
    /// mismatch is informational).
    pub fn violations(&self) -> u64 {
        self.b_violations
            + self.c_violations
            + self.cc_violations
            + self.b1_identity_violations
            + self.b2_violations
            + self.b0_violations
    }

    pub fn merge(&mut self, other: &InequalityReport) {
        self.pairs_checked += other.pairs_checked;
        self.b_violations += other.b_violations;
        self.c_violations += other.c_violations;
        self.cc_violations += other.cc_violations;
        self.b1_identity_violations += other.b1_identity_violations;
        self.b1_tripled_mismatches += other.b1_tripled_mismatches;
        self.b2_violations += other.b2_violations;
        self.b0_violations += other.b0_violations;
        for w in &other.witnesses {
            if self.witnesses.len() < MAX_WITNESSES {
                self.witnesses.push(w.clone());
            }
        }
    }
}

const MAX_WITNESSES: usize = 8;

/// The quantities entering the second-moment exponent bookkeeping for a
/// single `(M, P)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExponentTerms {
    pub b: i64,
    pub c: i64,
    pub b0: i64,
    pub b1: i64,
    pub b2: i64,
}

fn exponent_terms(
    t1: &Template,
    t2: &Template,
    m_len: usize,
    p_len: usize,
    s: &crate::multigraph::PruneSummary,
) -> ExponentTerms {
    let (e1, e2) = (t1.num_edges() as i64, t2.num_edges() as i64);
    let (v1, v2) = (t1.num_nodes() as i64, t2.num_nodes() as i64);
    let m = m_len as i64;
    let p = p_len as i64;
    let cyc = s.n_cyc as i64;
    let b = p - 2 * cyc - 2 * s.n_op_even as i64 - s.n_op_odd as i64;
    let c = e1 + e2 - (2 * v1 + 2 * v2 - 3 * m - s.n_m_full as i64) - p;
    let b0 = v1 + v2 - 2 * m;
    let b1 = -2 * b0 + s.e_delta as i64;
    let b2 =
        (e1 + e2 - 2 * cyc) - s.e_delta as i64 - 2 * s.n_cc as i64 + 2 * s.v_delta as i64 - 2 * b0;
    ExponentTerms { b, c, b0, b1, b2 }
}

/// Evaluate `B`, `C`, `b0`, `b1`, `b2` and the component bound for every
/// matching and pairing of `(t1, t2)` and count violations.
pub fn check_combinatorial_inequalities(t1: &Template, t2: &Template) -> Result<InequalityReport> {
    let mut rep = InequalityReport::default();
    let star: Vec<_> = matchings_within_budget(t1, t2, true)?;
    for m in matchings_within_budget(t1, t2, false)? {
        let in_star = star.contains(&m);
        let ctx = PruneContext::new(t1, t2, &m);
        let m_len = m.len();
        let mut local = InequalityReport::default();
        for_each_pairing(t1, t2, &m, |pairing| {
            let s = ctx.summary(pairing);
            let x = exponent_terms(t1, t2, m_len, pairing.len(), &s);
            local.pairs_checked += 1;
            let flag = |name: &'static str,
                        value: i64,
                        counter: &mut u64,
                        w: &mut Vec<InequalityWitness>| {
                *counter += 1;
                if w.len() < MAX_WITNESSES {
                    w.push(InequalityWitness {
                        check: name.into(),
                        matching: m.pairs.clone(),
                        pairing: pairing.to_vec(),
                        value,
                    });
                }
            };
            let unfull = (m_len - s.n_m_full) as i64;
            if x.b < 0 {
                flag("B", x.b, &mut local.b_violations, &mut local.witnesses);
            }
            if x.c < 0 {
                flag("C", x.c, &mut local.c_violations, &mut local.witnesses);
            }
            if x.b0 < 0 {
                flag("b0", x.b0, &mut local.b0_violations, &mut local.witnesses);
            }
            if x.b1 != unfull + x.c {
                flag(
                    "b1",
                    x.b1,
                    &mut local.b1_identity_violations,
                    &mut local.witnesses,
                );
            }
            if x.b1 != 3 * unfull + x.c {
                local.b1_tripled_mismatches += 1;
            }
            let b2_alt =
                2 * m_len as i64 + pairing.len() as i64 - 2 * s.n_cyc as i64 - 2 * s.n_cc as i64;
            if x.b2 != b2_alt || (in_star && x.b2 < x.b) {
                flag("b2", x.b2, &mut local.b2_violations, &mut local.witnesses);
            }
            if in_star {
                let lhs = 2 * s.n_cc as i64;
                let rhs = 2 * s.n_op_even as i64 + s.n_op_odd as i64 + 2 * m_len as i64;
                if lhs > rhs {
                    flag(
                        "CC",
                        lhs - rhs,
                        &mut local.cc_violations,
                        &mut local.witnesses,
                    );
                }
            }
        })?;
        rep.merge(&local);
    }
    Ok(rep)
}

/// Exponent terms for one `(M, P)`; exposed for the audit diagnostics.
pub fn exponent_terms_for(
    t1: &Template,
    t2: &Template,
    m: &crate::multigraph::Matching,
    pairing: &[(usize, usize)],
) -> Result<ExponentTerms> {
    let mp = crate::multigraph::prune(t1, t2, m, pairing)?;
    Ok(exponent_terms(t1, t2, m.len(), pairing.len(), &mp.summary))
}
