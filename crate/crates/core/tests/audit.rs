use lowdeg_core::audit::*;
use lowdeg_core::linalg::Matrix;
use lowdeg_core::model::ModelParams;
use lowdeg_core::multigraph::{build_gstar, enumerate_templates, Template};

fn t(nodes: usize, edges: &[(usize, usize)]) -> Template {
    Template::new(nodes, edges.to_vec()).unwrap()
}

#[test]
fn edgeless_row_is_a_unit_vector() {
    let fam = enumerate_templates(2, true).unwrap();
    let e = fam.iter().position(|g| g.num_edges() == 0).unwrap();
    let exact = null_gram_matrix(&fam, 40, 4).unwrap();
    let p = ModelParams::new(40, 4, 4, 0.7).unwrap();
    let mc = gram_matrix(&fam, &p, 4000, 3).unwrap();
    for b in 0..fam.len() {
        let want = if b == e { 1.0 } else { 0.0 };
        assert!((exact[(e, b)] - want).abs() < 1e-12);
        let dev = (mc.gram[(e, b)] - want).abs();
        assert!(dev <= 3.0 * mc.se[(e, b)] + 1e-12, "{b}: {dev}");
    }
}

#[test]
fn exact_null_gram_matches_monte_carlo() {
    let fam = enumerate_templates(2, true).unwrap();
    let (n, d) = (40, 4);
    let exact = null_gram_matrix(&fam, n, d).unwrap();
    let p = ModelParams::new(n, d, d, 0.0).unwrap();
    let mc = gram_matrix(&fam, &p, 6000, 5).unwrap();
    assert_eq!(mc.trials, 6000);
    let mut worst: f64 = 0.0;
    for a in 0..fam.len() {
        for b in 0..fam.len() {
            let se = mc.se[(a, b)];
            if se > 0.0 {
                worst = worst.max((mc.gram[(a, b)] - exact[(a, b)]).abs() / se);
            } else {
                assert!((mc.gram[(a, b)] - exact[(a, b)]).abs() < 1e-12);
            }
        }
    }
    // 120 entries; a Bonferroni-style allowance.
    assert!(worst < 4.5, "{worst}");
}

#[test]
fn exact_null_gram_is_symmetric_with_positive_diagonal() {
    let fam = enumerate_templates(2, true).unwrap();
    let g = null_gram_matrix(&fam, 12, 3).unwrap();
    for a in 0..fam.len() {
        assert!(g[(a, a)] > 0.0);
        for b in 0..fam.len() {
            assert_eq!(g[(a, b)], g[(b, a)]);
        }
    }
}

#[test]
fn odd_templates_are_uncorrelated_with_even_ones() {
    let odd = [
        t(2, &[(0, 1)]),
        t(3, &[(0, 2), (2, 1)]),
        t(3, &[(0, 1), (0, 2)]),
    ];
    let even = [
        t(2, &[(0, 1), (0, 1)]),
        t(2, &[(0, 0)]),
        t(3, &[(0, 2), (0, 2), (1, 2), (1, 2)]),
    ];
    let fam: Vec<Template> = odd.iter().chain(&even).cloned().collect();
    let p = ModelParams::new(20, 3, 2, 1.2).unwrap();
    let mc = gram_matrix(&fam, &p, 20_000, 8).unwrap();
    for a in 0..odd.len() {
        for b in odd.len()..fam.len() {
            let z = mc.gram[(a, b)].abs() / mc.se[(a, b)];
            assert!(z < 3.5, "({a},{b}): z={z}");
        }
    }
}

#[test]
fn null_bracket_on_an_orthonormal_subfamily() {
    let fam = enumerate_templates(2, true).unwrap();
    let (n, d) = (40, 4);
    let exact = null_gram_matrix(&fam, n, d).unwrap();
    // Keep the templates whose exact row is a unit vector.
    let keep: Vec<Template> = (0..fam.len())
        .filter(|&a| {
            (0..fam.len()).all(|b| {
                let want = if a == b { 1.0 } else { 0.0 };
                (exact[(a, b)] - want).abs() < 1e-12
            })
        })
        .map(|a| fam[a].clone())
        .collect();
    assert!(keep.len() >= 3, "{}", keep.len());
    let p = ModelParams::new(n, d, d, 0.0).unwrap();
    let mc = gram_matrix(&keep, &p, 4000, 2).unwrap();
    let b = eigen_bracket(&mc.gram).unwrap();
    let max_se = mc.se.as_slice().iter().cloned().fold(0.0, f64::max);
    let width = b.max_eig_ub - b.min_eig_lb;
    assert!(width <= 3.0 * max_se * keep.len() as f64 * 2.0, "{width}");
    assert!(b.dominant);
}

#[test]
fn bracket_reports_without_failing() {
    let mut g = Matrix::identity(3);
    g[(0, 1)] = 0.8;
    g[(1, 0)] = 0.8;
    g[(0, 2)] = 0.5;
    g[(2, 0)] = 0.5;
    let b = eigen_bracket(&g).unwrap();
    assert!((b.min_eig_lb + 0.3).abs() < 1e-12);
    assert!((b.max_eig_ub - 2.3).abs() < 1e-12);
    assert!(!b.dominant);
    g[(1, 1)] = f64::NAN;
    assert!(eigen_bracket(&g).is_err());
    assert!(eigen_bracket(&Matrix::zeros(2, 3)).is_err());
}

#[test]
fn edgeless_contribution_is_inverse_k_squared() {
    for k in 1..6 {
        let p = ModelParams::new(30, 8, k, 1.5).unwrap();
        let table = corr_contributions(&[Template::edgeless()], &p).unwrap();
        let want = 1.0 / (k * k) as f64;
        assert!((table.rows[0].value - want).abs() < 1e-12);
        assert_eq!(table.reference, want);
    }
}

#[test]
fn disconnected_templates_contribute_nothing() {
    let p = ModelParams::new(30, 4, 2, 2.0).unwrap();
    let fam = [
        t(2, &[(0, 0)]),
        t(2, &[(0, 0), (1, 1)]),
        t(3, &[(0, 2), (0, 2), (0, 2), (0, 2)]),
        t(4, &[(0, 2), (0, 2), (2, 2), (1, 3), (1, 3), (3, 3)]),
    ];
    let table = corr_contributions(&fam, &p).unwrap();
    for row in &table.rows {
        assert_eq!(row.value, 0.0, "{:?}", row.template);
    }
    assert_eq!(table.total, 0.0);
}

#[test]
fn connected_contributions_shrink_with_more_groups() {
    let fam = [
        build_gstar(1, 1).unwrap(),
        t(3, &[(0, 2), (0, 2), (2, 1), (2, 1)]),
    ];
    for g in &fam {
        // With one group x is constant and every centered statistic is blind.
        let p = ModelParams::new(30, 8, 1, 2.0).unwrap();
        assert_eq!(corr_contributions(std::slice::from_ref(g), &p).unwrap().total, 0.0);
        let mut prev = f64::INFINITY;
        for k in 2..=6 {
            let p = ModelParams::new(30, 8, k, 2.0).unwrap();
            let v = corr_contributions(std::slice::from_ref(g), &p).unwrap().total;
            assert!(v > 0.0 && v < prev, "K={k}: {v} after {prev}");
            prev = v;
        }
    }
}
