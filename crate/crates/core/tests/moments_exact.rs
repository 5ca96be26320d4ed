mod common;

use common::{exact_cross, exact_mean, exact_product, labelings, rel_close, Condition, Factor};
use lowdeg_core::model::ModelParams;
use lowdeg_core::moments::*;
use lowdeg_core::multigraph::{build_gstar, enumerate_templates, Template};
use lowdeg_core::Error;
use proptest::prelude::*;

fn t(nodes: usize, edges: &[(usize, usize)]) -> Template {
    Template::new(nodes, edges.to_vec()).unwrap()
}

fn double_edge() -> Template {
    t(2, &[(0, 1), (0, 1)])
}

fn params(n: usize, d: usize, k: usize, delta: f64) -> ModelParams {
    ModelParams::new(n, d, k, delta).unwrap()
}

#[test]
fn first_moment_examples() {
    let p = params(6, 2, 2, 1.0);
    assert_eq!(mean_psibar(&double_edge(), &p).unwrap(), 0.5);
    assert_eq!(mean_psibar(&t(3, &[(0, 2), (1, 2)]), &p).unwrap(), 0.0);
    assert_eq!(mean_psibar(&t(2, &[(0, 1)]), &p).unwrap(), 0.0);
    assert_eq!(mean_x_psibar(&double_edge(), &p).unwrap(), 0.5);
    let g = build_gstar(1, 1).unwrap();
    assert_eq!(mean_x_psibar(&g, &p).unwrap(), 1.0);
    assert_eq!(mean_x_psitilde(&Template::edgeless(), &p).unwrap(), 0.5);
    assert_eq!(mean_x_psitilde(&g, &p).unwrap(), 0.5);
    let disconnected = t(2, &[(0, 0), (1, 1)]);
    assert_eq!(mean_x_psitilde(&disconnected, &p).unwrap(), 0.0);
    assert_eq!(
        mean_x_psibar(&t(3, &[(0, 1), (0, 2), (1, 2)]), &p).unwrap(),
        0.0
    );
}

#[test]
fn degree_two_mean_needs_d_equal_k() {
    let triangle = t(3, &[(0, 1), (0, 2), (1, 2)]);
    let err = mean_psibar(&triangle, &params(6, 3, 2, 1.0)).unwrap_err();
    assert!(matches!(err, Error::Unsupported(_)));
}

#[test]
fn cross_moment_examples() {
    let p = params(6, 2, 2, 1.0);
    let de = double_edge();
    let v = cross_moment_labeled(&de, &[0, 1], &de, &[0, 1], &p).unwrap();
    assert!((v - 56.5).abs() < 1e-12);
    let single = t(2, &[(0, 1)]);
    assert_eq!(
        cross_moment_labeled(&single, &[0, 1], &de, &[0, 1], &p).unwrap(),
        0.0
    );
    let tri = t(3, &[(0, 2), (0, 2), (1, 2), (1, 2), (2, 2)]);
    let err = cross_moment_labeled(&tri, &[0, 1, 2], &tri, &[0, 1, 2], &p);
    assert!(err.is_ok());
    let path = t(3, &[(0, 2), (1, 2)]);
    let err = cross_moment_labeled(&path, &[0, 1, 2], &path, &[0, 1, 2], &p).unwrap_err();
    assert!(matches!(err, Error::Unsupported(_)));
}

#[test]
fn single_edges_do_not_cancel() {
    // Two single-edge templates: degrees are odd in each factor, but the
    // product is even, so the cross moment is d + 2Δ² + Δ⁴/K.
    let p = params(5, 3, 2, 1.5);
    let single = t(2, &[(0, 1)]);
    let v = cross_moment_labeled(&single, &[0, 1], &single, &[0, 1], &p).unwrap();
    let want = 3.0 + 2.0 * 1.5f64.powi(2) + 1.5f64.powi(4) / 2.0;
    assert!((v - want).abs() < 1e-12, "{v} vs {want}");
}

#[test]
fn second_moment_examples() {
    let quad = t(2, &[(0, 1); 4]);
    let v = second_moment_psibar(&quad, &params(6, 2, 2, 1.0)).unwrap();
    assert!((v - 102257.0 / 2.0).abs() < 1e-9);
    let err =
        second_moment_psibar(&build_gstar(2, 3).unwrap(), &params(12, 2, 2, 1.0)).unwrap_err();
    assert!(matches!(err, Error::Capacity(_)), "{err:?}");
}

#[test]
fn variance_proxy_examples() {
    assert_eq!(
        variance_proxy(&double_edge(), &params(6, 2, 2, 1.0)).unwrap(),
        8.0
    );
    assert_eq!(
        variance_proxy(&Template::edgeless(), &params(6, 2, 2, 1.0)).unwrap(),
        1.0
    );
    assert_eq!(
        variance_proxy(&t(2, &[(0, 0)]), &params(5, 3, 3, 1.0)).unwrap(),
        6.0
    );
}

fn small_family(max_edges: usize) -> Vec<Template> {
    enumerate_templates(max_edges, false).unwrap()
}

#[test]
fn first_moments_match_exact_oracle() {
    for tpl in small_family(3) {
        let n = tpl.num_nodes() + 1;
        for &(d, k, delta) in &[
            (2usize, 2usize, 1.0f64),
            (3, 3, 0.7),
            (3, 2, 1.3),
            (1, 1, 0.9),
        ] {
            let p = params(n, d, k, delta);
            let m = exact_mean(&tpl, n, d, k, delta, Condition::None);
            let mx = exact_mean(&tpl, n, d, k, delta, Condition::X1) / k as f64;
            match mean_psibar(&tpl, &p) {
                Ok(v) => assert!(rel_close(v, m, 1e-9), "{tpl:?} {d} {k}: {v} vs {m}"),
                Err(Error::Unsupported(_)) => assert!(tpl.has_interior_deg2() && d != k),
                Err(e) => panic!("{e}"),
            }
            match mean_x_psibar(&tpl, &p) {
                Ok(v) => assert!(rel_close(v, mx, 1e-9), "{tpl:?} {d} {k}: {v} vs {mx}"),
                Err(Error::Unsupported(_)) => assert!(tpl.has_interior_deg2() && d != k),
                Err(e) => panic!("{e}"),
            }
        }
    }
}

/// `E[x Ψ̃_G]` expanded over subsets of edge components.
fn exact_x_psitilde(tpl: &Template, n: usize, d: usize, k: usize, delta: f64) -> f64 {
    let comps = tpl.edge_components();
    let subs: Vec<(Template, Vec<usize>)> = comps.iter().map(|es| tpl.subtemplate(es)).collect();
    let centers: Vec<f64> = subs
        .iter()
        .map(|(s, _)| {
            let pi: Vec<usize> = (0..s.num_nodes()).collect();
            exact_product(&[Factor { template: s, pi }], d, k, delta, Condition::None)
        })
        .collect();
    // Rows are exchangeable, so one labeling stands for all of them.
    let count = labelings(tpl.num_nodes(), n).len() as f64;
    let pi: Vec<usize> = (0..tpl.num_nodes()).collect();
    let mut total = 0.0;
    {
        for mask in 0..(1usize << comps.len()) {
            let mut coef = 1.0;
            let mut edges = Vec::new();
            for (l, es) in comps.iter().enumerate() {
                if mask >> l & 1 == 1 {
                    edges.extend_from_slice(es);
                } else {
                    coef *= -centers[l];
                }
            }
            if coef == 0.0 {
                continue;
            }
            let (sub, old) = tpl.subtemplate(&edges);
            let spi: Vec<usize> = old.iter().map(|&v| pi[v]).collect();
            total +=
                coef * exact_product(
                    &[Factor {
                        template: &sub,
                        pi: spi,
                    }],
                    d,
                    k,
                    delta,
                    Condition::X1,
                ) / k as f64;
        }
    }
    count * total
}

#[test]
fn psitilde_means_match_exact_oracle() {
    for tpl in small_family(3) {
        let n = tpl.num_nodes() + 1;
        for &(d, k, delta) in &[(2usize, 2usize, 1.0f64), (3, 3, 0.8), (3, 2, 1.1)] {
            let p = params(n, d, k, delta);
            let want = if tpl.num_edges() == 0 {
                1.0 / k as f64
            } else {
                exact_x_psitilde(&tpl, n, d, k, delta)
            };
            match mean_x_psitilde(&tpl, &p) {
                Ok(v) => assert!(
                    rel_close(v, want, 1e-9),
                    "{tpl:?} d={d} K={k}: {v} vs {want}"
                ),
                Err(Error::Unsupported(_)) => assert!(tpl.has_interior_deg2() && d != k),
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn labeled_cross_moments_match_exact_oracle() {
    let fam: Vec<Template> = small_family(2)
        .into_iter()
        .filter(|t| !t.has_interior_deg2())
        .collect();
    for a in &fam {
        for b in &fam {
            let n = a.num_nodes() + b.num_nodes();
            let pi1: Vec<usize> = (0..a.num_nodes()).collect();
            let shared: Vec<usize> = (0..b.num_nodes()).collect();
            let disjoint: Vec<usize> = (0..b.num_nodes())
                .map(|v| if v < 2 { v } else { v + a.num_nodes() - 2 })
                .collect();
            for pi2 in [shared, disjoint] {
                for &(d, k, delta) in &[(2usize, 2usize, 1.0f64), (3, 2, 0.6)] {
                    let p = params(n, d, k, delta);
                    let got = cross_moment_labeled(a, &pi1, b, &pi2, &p).unwrap();
                    let want = exact_product(
                        &[
                            Factor {
                                template: a,
                                pi: pi1.clone(),
                            },
                            Factor {
                                template: b,
                                pi: pi2.clone(),
                            },
                        ],
                        d,
                        k,
                        delta,
                        Condition::None,
                    );
                    assert!(
                        rel_close(got, want, 1e-9),
                        "{a:?} {b:?} {pi2:?} d={d}: {got} vs {want}"
                    );
                }
            }
        }
    }
}

#[test]
fn second_moments_match_exact_oracle() {
    let mut fam: Vec<Template> = small_family(3)
        .into_iter()
        .filter(|t| !t.has_interior_deg2() && t.num_nodes() <= 6)
        .collect();
    fam.push(build_gstar(1, 1).unwrap());
    fam.push(t(2, &[(0, 1); 4]));
    for tpl in &fam {
        let n = tpl.num_nodes() + 1;
        for &(d, k, delta) in &[(2usize, 2usize, 1.0f64), (2, 1, 0.5)] {
            let p = params(n, d, k, delta);
            let got = second_moment_psibar(tpl, &p).unwrap();
            let want = exact_cross(tpl, tpl, n, d, k, delta, Condition::None);
            assert!(
                rel_close(got, want, 1e-9),
                "{tpl:?} d={d} K={k}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn null_cross_moments_match_exact_oracle() {
    let fam = small_family(2);
    for a in &fam {
        for b in &fam {
            let n = a.num_nodes().max(b.num_nodes()) + 1;
            let got = null_cross_moment(a, b, n, 3).unwrap();
            let got = num_traits::ToPrimitive::to_f64(&got).unwrap();
            let want = exact_cross(a, b, n, 3, 3, 0.0, Condition::None);
            assert!(rel_close(got, want, 1e-9), "{a:?} {b:?}: {got} vs {want}");
        }
    }
}

#[test]
fn gstar_conditional_variances_match_exact_oracle() {
    let g = build_gstar(1, 1).unwrap();
    for &(n, d, delta) in &[
        (8usize, 2usize, 1.5f64),
        (5, 2, 0.7),
        (4, 3, 1.0),
        (6, 2, 0.0),
    ] {
        let p = params(n, d, d, delta);
        let (v0, v1) = conditional_variances_gstar(1, 1, &p).unwrap();
        let m0 = exact_mean(&g, n, d, d, delta, Condition::X0);
        let m1 = exact_mean(&g, n, d, d, delta, Condition::X1);
        let s0 = exact_cross(&g, &g, n, d, d, delta, Condition::X0);
        let s1 = exact_cross(&g, &g, n, d, d, delta, Condition::X1);
        assert!(m0.abs() < 1e-9);
        let cm = gstar_conditional_mean_poly(1, 1, &p).unwrap().eval(delta);
        assert!(rel_close(cm, m1, 1e-9), "{cm} vs {m1}");
        assert!(
            rel_close(v0, s0 - m0 * m0, 1e-9),
            "n={n} d={d}: var0 {v0} vs {}",
            s0 - m0 * m0
        );
        assert!(
            rel_close(v1, s1 - m1 * m1, 1e-9),
            "n={n} d={d}: var1 {v1} vs {}",
            s1 - m1 * m1
        );
        assert!(v0 <= v1 * (1.0 + 1e-12));
        if delta == 0.0 {
            assert!(rel_close(v0, v1, 1e-12));
        }
    }
}

#[test]
fn gstar_variance_guard() {
    let err = conditional_variances_gstar(1, 3, &params(8, 2, 2, 1.0)).unwrap_err();
    assert!(matches!(err, Error::Capacity(_)));
    let err = conditional_variances_gstar(1, 1, &params(8, 3, 2, 1.0)).unwrap_err();
    assert!(matches!(err, Error::Unsupported(_)));
}

#[test]
fn envelopes_contain_exact_values() {
    let path = t(3, &[(0, 2), (1, 2)]);
    let tri = t(3, &[(0, 2), (1, 2), (0, 1)]);
    let loops = t(3, &[(0, 2), (0, 2), (1, 2), (1, 2)]);
    let cases = [
        (path.clone(), path.clone()),
        (path.clone(), tri.clone()),
        (tri.clone(), tri.clone()),
        (loops.clone(), path),
    ];
    for (a, b) in &cases {
        for &(k, delta) in &[(2usize, 1.0f64), (3, 0.5)] {
            let n = a.num_nodes() + b.num_nodes();
            let p = params(n, k, k, delta);
            let pi1: Vec<usize> = (0..a.num_nodes()).collect();
            for pi2 in [
                (0..b.num_nodes()).collect::<Vec<_>>(),
                (0..b.num_nodes())
                    .map(|v| if v < 2 { v } else { v + 1 })
                    .collect(),
            ] {
                let env = cross_moment_envelope(a, &pi1, b, &pi2, &p).unwrap();
                let exact = exact_product(
                    &[
                        Factor {
                            template: a,
                            pi: pi1.clone(),
                        },
                        Factor {
                            template: b,
                            pi: pi2.clone(),
                        },
                    ],
                    k,
                    k,
                    delta,
                    Condition::None,
                );
                assert!(
                    env.contains(exact),
                    "{a:?} {b:?} {pi2:?}: {exact} not in {env:?}"
                );
            }
        }
    }
}

#[test]
fn psitilde_envelope_contains_exact_second_moment() {
    // Connected templates: Ψ̃ = Ψ̄ − |Π| c, so E[Ψ̃²] = E[Ψ̄²] − |Π|² c².
    for tpl in [
        t(3, &[(0, 2), (0, 2), (1, 2), (1, 2)]),
        t(2, &[(0, 1), (0, 1)]),
        t(3, &[(0, 2), (1, 2)]),
    ] {
        for &(n, k, delta) in &[(4usize, 2usize, 1.0f64), (5, 2, 0.5)] {
            let p = params(n, k, k, delta);
            let env = psitilde_cross_envelope(&tpl, &tpl, &p).unwrap();
            let pi: Vec<usize> = (0..tpl.num_nodes()).collect();
            let c = exact_product(
                &[Factor { template: &tpl, pi }],
                k,
                k,
                delta,
                Condition::None,
            );
            let count = labelings(tpl.num_nodes(), n).len() as f64;
            let m = exact_mean(&tpl, n, k, k, delta, Condition::None);
            let s = exact_cross(&tpl, &tpl, n, k, k, delta, Condition::None);
            let exact = s - 2.0 * count * c * m + count * count * c * c;
            assert!(env.contains(exact), "{tpl:?} n={n}: {exact} not in {env:?}");
        }
    }
}

proptest! {
    #[test]
    fn first_moments_are_homogeneous_in_delta(idx in 0usize..40, delta in 0.1f64..2.0, c in 0.2f64..3.0) {
        let fam = small_family(3);
        let tpl = &fam[idx % fam.len()];
        let n = tpl.num_nodes() + 2;
        let a = mean_psibar(tpl, &params(n, 3, 3, delta)).unwrap();
        let b = mean_psibar(tpl, &params(n, 3, 3, c * delta)).unwrap();
        prop_assert!(rel_close(b, a * c.powi(2 * tpl.num_edges() as i32), 1e-9));
        let a = mean_x_psibar(tpl, &params(n, 3, 3, delta)).unwrap();
        let b = mean_x_psibar(tpl, &params(n, 3, 3, c * delta)).unwrap();
        prop_assert!(rel_close(b, a * c.powi(2 * tpl.num_edges() as i32), 1e-9));
    }

    #[test]
    fn odd_times_even_labeled_cross_moment_vanishes(i in 0usize..60, j in 0usize..60, delta in 0.0f64..2.0) {
        let fam: Vec<Template> = small_family(3).into_iter().filter(|t| !t.has_interior_deg2()).collect();
        let odd: Vec<&Template> = fam.iter().filter(|t| t.has_odd_degree()).collect();
        let even: Vec<&Template> = fam.iter().filter(|t| t.is_even()).collect();
        let a = odd[i % odd.len()];
        let b = even[j % even.len()];
        let n = a.num_nodes() + b.num_nodes();
        let pi1: Vec<usize> = (0..a.num_nodes()).collect();
        let pi2: Vec<usize> = (0..b.num_nodes()).collect();
        let v = cross_moment_labeled(a, &pi1, b, &pi2, &params(n, 2, 2, delta)).unwrap();
        prop_assert_eq!(v, 0.0);
    }
}
