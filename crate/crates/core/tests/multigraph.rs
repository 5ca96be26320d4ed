use lowdeg_core::multigraph::*;
use lowdeg_core::rng::rng_from;
use lowdeg_core::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use std::sync::OnceLock;

fn family(max_edges: usize) -> &'static [Template] {
    static SMALL: OnceLock<Vec<Template>> = OnceLock::new();
    static LARGE: OnceLock<Vec<Template>> = OnceLock::new();
    match max_edges {
        3 => SMALL.get_or_init(|| enumerate_templates(3, false).unwrap()),
        4 => LARGE.get_or_init(|| enumerate_templates(4, false).unwrap()),
        _ => unreachable!(),
    }
}

fn t(nodes: usize, edges: &[(usize, usize)]) -> Template {
    Template::new(nodes, edges.to_vec()).unwrap()
}

fn double_edge() -> Template {
    t(2, &[(0, 1), (0, 1)])
}

/// Half-edge bijections preserving partners and incidence, fixing v1 and v2,
/// by trying every permutation.
fn brute_automorphisms(g: &Template) -> u64 {
    let h = g.num_halfedges();
    let mut perm: Vec<usize> = (0..h).collect();
    let mut count = 0;
    permutations(&mut perm, 0, &mut |p| {
        let partners = (0..h).all(|a| p[a ^ 1] == p[a] ^ 1);
        let incidence = (0..h).all(|a| {
            (0..h).all(|b| {
                (g.halfedge_node(a) == g.halfedge_node(b))
                    == (g.halfedge_node(p[a]) == g.halfedge_node(p[b]))
            })
        });
        let fixed = (0..h).all(|a| {
            let (u, v) = (g.halfedge_node(a), g.halfedge_node(p[a]));
            (u > 1 || u == v) && (v > 1 || u == v)
        });
        if partners && incidence && fixed {
            count += 1;
        }
    });
    count
}

fn permutations(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, f);
        v.swap(k, i);
    }
}

/// Isomorphism by trying every relabeling of the interior nodes.
fn brute_isomorphic(a: &Template, b: &Template) -> bool {
    if a.num_nodes() != b.num_nodes() || a.num_edges() != b.num_edges() {
        return false;
    }
    let sorted = |g: &Template, map: &[usize]| {
        let mut es: Vec<(usize, usize)> = g
            .edges()
            .iter()
            .map(|&(u, v)| (map[u].min(map[v]), map[u].max(map[v])))
            .collect();
        es.sort_unstable();
        es
    };
    let target = sorted(b, &(0..b.num_nodes()).collect::<Vec<_>>());
    let mut interior: Vec<usize> = (2..a.num_nodes()).collect();
    let mut found = false;
    permutations(&mut interior, 0, &mut |p| {
        let mut map = vec![0, 1];
        map.extend_from_slice(p);
        found |= sorted(a, &map) == target;
    });
    found
}

fn relabel(g: &Template, seed: u64) -> Template {
    let mut interior: Vec<usize> = (2..g.num_nodes()).collect();
    interior.shuffle(&mut rng_from(seed));
    let mut map = vec![0, 1];
    map.extend(interior);
    let mut edges: Vec<(usize, usize)> = g.edges().iter().map(|&(u, v)| (map[v], map[u])).collect();
    edges.shuffle(&mut rng_from(seed ^ 7));
    Template::new(g.num_nodes(), edges).unwrap()
}

#[test]
fn gstar_examples() {
    let g = build_gstar(1, 1).unwrap();
    assert_eq!((g.num_nodes(), g.num_edges()), (3, 4));
    assert!(g.is_isomorphic(&t(3, &[(0, 2), (0, 2), (1, 2), (1, 2)])).unwrap());
    assert_eq!(g.degree(2), 4);

    let g = build_gstar(2, 3).unwrap();
    assert_eq!((g.num_nodes(), g.num_edges()), (8, 16));
    assert_eq!((g.degree(0), g.degree(1)), (4, 4));
    assert!((2..8).all(|v| g.degree(v) == 4));
    for (l, m) in [(1, 3), (3, 1), (2, 5)] {
        let g = build_gstar(l, m).unwrap();
        assert_eq!(g.num_nodes(), l * m + 2);
        assert_eq!(g.num_edges(), 2 * l * m + m + 1);
        assert_eq!((g.degree(0), g.degree(1)), (m + 1, m + 1));
    }
    assert!(matches!(build_gstar(1, 2), Err(Error::InvalidParams(_))));
    assert!(build_gstar(0, 1).is_err());
}

#[test]
fn template_invariants_are_enforced() {
    assert!(Template::new(1, vec![]).is_err());
    assert!(Template::new(3, vec![(0, 1)]).is_err());
    assert!(Template::new(2, vec![(0, 2)]).is_err());
    let g = t(3, &[(0, 0), (0, 2), (2, 1)]);
    assert_eq!(g.degrees(), vec![3, 1, 2]);
    assert_eq!(g.num_halfedges(), 6);
}

#[test]
fn automorphism_examples() {
    assert_eq!(automorphism_count(&t(2, &[(0, 0)])).unwrap(), 2);
    assert_eq!(automorphism_count(&double_edge()).unwrap(), 2);
    assert_eq!(automorphism_count(&t(2, &[(0, 1)])).unwrap(), 1);
    assert_eq!(automorphism_count(&Template::edgeless()).unwrap(), 1);
    let big = t(2, &[(0, 1); 13]);
    assert!(matches!(automorphism_count(&big), Err(Error::Capacity(_))));
}

#[test]
fn automorphisms_match_brute_force_on_small_family() {
    for g in enumerate_templates(3, false).unwrap() {
        assert_eq!(automorphism_count(&g).unwrap(), brute_automorphisms(&g), "{g:?}");
    }
    for g in [
        t(4, &[(0, 2), (2, 2), (1, 3), (3, 3)]),
        t(4, &[(2, 3), (2, 3), (2, 3), (2, 3)]),
        t(4, &[(0, 3), (0, 3), (2, 3), (2, 3)]),
        build_gstar(1, 1).unwrap(),
    ] {
        assert_eq!(automorphism_count(&g).unwrap(), brute_automorphisms(&g), "{g:?}");
    }
}

#[test]
fn enumeration_examples() {
    let even = enumerate_templates(1, true).unwrap();
    assert_eq!(even.len(), 4);
    for g in [
        Template::edgeless(),
        t(2, &[(0, 0)]),
        t(2, &[(1, 1)]),
        t(3, &[(2, 2)]),
    ] {
        assert!(even.iter().any(|e| e.is_isomorphic(&g).unwrap()), "{g:?}");
    }
    let all = enumerate_templates(1, false).unwrap();
    assert_eq!(all.len(), 8);
    for g in [
        t(2, &[(0, 1)]),
        t(3, &[(0, 2)]),
        t(3, &[(1, 2)]),
        t(4, &[(2, 3)]),
    ] {
        assert!(all.iter().any(|e| e.is_isomorphic(&g).unwrap()), "{g:?}");
    }
    for d in 0..=3 {
        let fam = enumerate_templates(d, d % 2 == 0).unwrap();
        assert!(fam.iter().any(|g| g.num_edges() == 0));
    }
    assert!(matches!(enumerate_templates(5, true), Err(Error::Capacity(_))));
}

#[test]
fn enumeration_has_one_member_per_class() {
    let fam = enumerate_templates(3, false).unwrap();
    let keys: Vec<CanonicalKey> = fam.iter().map(|g| g.canonical_key().unwrap()).collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]));
    for (i, a) in fam.iter().enumerate() {
        assert!(a.degrees()[2..].iter().all(|&d| d > 0));
        for b in &fam[i + 1..] {
            assert!(!brute_isomorphic(a, b), "{a:?} ~ {b:?}");
        }
    }
    let even = enumerate_templates(3, true).unwrap();
    assert!(even.iter().all(|g| g.is_even()));
    assert_eq!(even.len(), fam.iter().filter(|g| g.is_even()).count());
}

#[test]
fn matching_examples() {
    let de = double_edge();
    assert_eq!(enumerate_matchings(&de, &de, false).unwrap(), vec![Matching::base()]);
    let g = build_gstar(1, 1).unwrap();
    let ms = enumerate_matchings(&g, &g, false).unwrap();
    assert_eq!(ms.len(), 2);
    assert!(ms.contains(&Matching::base()));
    assert!(ms.iter().any(|m| m.pairs == vec![(0, 0), (1, 1), (2, 2)]));

    // An interior degree-2 node must be matched; the double edge has nowhere
    // to put it.
    let path = t(3, &[(0, 2), (2, 1)]);
    assert!(enumerate_matchings(&de, &path, false).unwrap().is_empty());
    let ms = enumerate_matchings(&path, &path, false).unwrap();
    assert_eq!(ms, vec![Matching { pairs: vec![(0, 0), (1, 1), (2, 2)] }]);
}

#[test]
fn star_matchings_touch_every_component() {
    let a = t(4, &[(0, 1), (2, 3), (2, 3), (2, 3), (2, 3)]);
    let b = t(3, &[(0, 1), (2, 2), (2, 2)]);
    let all = enumerate_matchings(&a, &b, false).unwrap();
    let star = enumerate_matchings(&a, &b, true).unwrap();
    assert!(star.len() < all.len());
    for m in &star {
        assert!(m.pairs.iter().any(|&(u, _)| u >= 2));
        assert!(m.pairs.iter().any(|&(_, w)| w == 2));
    }
}

#[test]
fn double_edge_counts() {
    let de = double_edge();
    let ms = enumerate_matchings(&de, &de, false).unwrap();
    assert_eq!(ms.len(), 1);
    let ps = enumerate_pairings(&de, &de, &ms[0]).unwrap();
    assert_eq!(ps.len(), 49);
    assert!(ps.iter().any(|p| p.is_empty()));
    let full: Vec<_> = ps.iter().filter(|p| p.len() == 4).collect();
    assert_eq!(full.len(), 4);
    let perfect = full
        .iter()
        .filter(|p| shadow_of(&de, &de, &ms[0], p).unwrap().m == 0)
        .count();
    assert_eq!(perfect, 2);
    assert_eq!(perfect as u64, automorphism_count(&de).unwrap());
}

#[test]
fn pairings_respect_the_matching() {
    let a = t(3, &[(0, 2), (0, 2), (1, 2), (1, 2)]);
    let m = Matching::base();
    for p in enumerate_pairings(&a, &a, &m).unwrap() {
        for &(h1, h2) in &p {
            assert!(a.halfedge_node(h1) < 2);
            assert_eq!(a.halfedge_node(h1), a.halfedge_node(h2));
        }
    }
    assert_eq!(
        enumerate_pairings(&a, &a, &m).unwrap().len() as u128,
        pairing_count(&a, &a, &m)
    );
}

/// Perfect pairings over all matchings, i.e. isomorphisms between the two
/// templates expressed on half-edges.
fn perfect_pairings(a: &Template, b: &Template) -> u64 {
    let mut total = 0;
    for m in enumerate_matchings(a, b, false).unwrap() {
        for p in enumerate_pairings(a, b, &m).unwrap() {
            if p.len() == a.num_halfedges()
                && p.len() == b.num_halfedges()
                && m.len() == a.num_nodes()
                && shadow_of(a, b, &m, &p).unwrap().m == 0
            {
                total += 1;
            }
        }
    }
    total
}

#[test]
fn perfect_pairings_count_automorphisms() {
    let fam = enumerate_templates(3, true).unwrap();
    for g in &fam {
        assert_eq!(perfect_pairings(g, g), automorphism_count(g).unwrap(), "{g:?}");
    }
    for (i, a) in fam.iter().enumerate() {
        for b in &fam[i + 1..] {
            assert_eq!(perfect_pairings(a, b), 0);
        }
    }
}

/// Independent recomputation of the pruned graph: walk alternating
/// edge/pairing chains over the disjoint union.
fn naive_summary(a: &Template, b: &Template, m: &Matching, p: &[(usize, usize)]) -> (usize, usize, usize, usize, usize, usize, usize) {
    let off = a.num_halfedges();
    let total = off + b.num_halfedges();
    let mut merged_b = vec![usize::MAX; b.num_nodes()];
    for &(u, w) in &m.pairs {
        merged_b[w] = u;
    }
    let mut next = a.num_nodes();
    for w in merged_b.iter_mut().filter(|w| **w == usize::MAX) {
        *w = next;
        next += 1;
    }
    let node = |h: usize| if h < off { a.halfedge_node(h) } else { merged_b[b.halfedge_node(h - off)] };
    let mut partner = vec![None; total];
    for &(x, y) in p {
        partner[x] = Some(off + y);
        partner[off + y] = Some(x);
    }
    let mut seen = vec![false; total];
    let mut edges = Vec::new();
    let (mut even, mut odd, mut cyc) = (0, 0, 0);
    for start in 0..total {
        if seen[start] || partner[start].is_some() {
            continue;
        }
        let (mut cur, mut steps) = (start, 0);
        seen[cur] = true;
        loop {
            let other = cur ^ 1;
            seen[other] = true;
            match partner[other] {
                None => {
                    edges.push((node(start), node(other)));
                    break;
                }
                Some(q) => {
                    steps += 1;
                    seen[q] = true;
                    cur = q;
                }
            }
        }
        match steps {
            0 => {}
            s if s % 2 == 0 => even += 1,
            _ => odd += 1,
        }
    }
    for start in 0..total {
        if seen[start] {
            continue;
        }
        let mut cur = start;
        loop {
            seen[cur] = true;
            seen[cur ^ 1] = true;
            cur = partner[cur ^ 1].unwrap();
            if cur == start {
                break;
            }
        }
        cyc += 1;
    }
    // Components by repeated relaxation.
    let mut comp: Vec<usize> = (0..next).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for &(u, v) in &edges {
            let c = comp[u].min(comp[v]);
            if comp[u] != c || comp[v] != c {
                comp[u] = c;
                comp[v] = c;
                changed = true;
            }
        }
    }
    let mut roots = comp.clone();
    roots.sort_unstable();
    roots.dedup();
    let full = m
        .pairs
        .iter()
        .filter(|&&(u, w)| {
            a.halfedges_at(u).iter().all(|&h| partner[h].is_some())
                && b.halfedges_at(w).iter().all(|&h| partner[off + h].is_some())
        })
        .count();
    (next, edges.len(), cyc, even, odd, roots.len(), full)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn prune_matches_naive_traversal(seed in any::<u64>()) {
        let fam = family(3);
        let mut rng = rng_from(seed);
        let a = &fam[rng.random_range(0..fam.len())];
        let b = &fam[rng.random_range(0..fam.len())];
        let ms = enumerate_matchings(a, b, false).unwrap();
        prop_assume!(!ms.is_empty());
        let m = &ms[rng.random_range(0..ms.len())];
        let ps = enumerate_pairings(a, b, m).unwrap();
        let p = &ps[rng.random_range(0..ps.len())];
        let s = prune(a, b, m, p).unwrap().summary;
        let want = naive_summary(a, b, m, p);
        prop_assert_eq!(
            (s.v_delta, s.e_delta, s.n_cyc, s.n_op_even, s.n_op_odd, s.n_cc, s.n_m_full),
            want
        );
        prop_assert_eq!(s.v_delta, a.num_nodes() + b.num_nodes() - m.len());
        prop_assert_eq!(s.e_delta, a.num_edges() + b.num_edges() - p.len());
    }

    #[test]
    fn canonical_key_ignores_relabeling(seed in any::<u64>()) {
        let fam = family(4);
        let g = &fam[rng_from(seed).random_range(0..fam.len())];
        let h = relabel(g, seed);
        prop_assert_eq!(g.canonical_key().unwrap(), h.canonical_key().unwrap());
        prop_assert_eq!(automorphism_count(g).unwrap(), automorphism_count(&h).unwrap());
    }

    #[test]
    fn shadow_parity(seed in any::<u64>()) {
        let fam = family(3);
        let mut rng = rng_from(seed);
        let a = &fam[rng.random_range(0..fam.len())];
        let b = &fam[rng.random_range(0..fam.len())];
        let ms = enumerate_matchings(a, b, false).unwrap();
        prop_assume!(!ms.is_empty());
        let m = &ms[rng.random_range(0..ms.len())];
        let ps = enumerate_pairings(a, b, m).unwrap();
        let p = &ps[rng.random_range(0..ps.len())];
        let sh = shadow_of(a, b, m, p).unwrap();
        prop_assert_eq!(sh.m % 2, 0);
        if sh.m == 0 {
            prop_assert!(a.is_isomorphic(b).unwrap());
        }
    }
}

#[test]
fn shadow_examples() {
    let de = double_edge();
    let m = Matching::base();
    assert_eq!(shadow_of(&de, &de, &m, &[(0, 0), (1, 1), (2, 2), (3, 3)]).unwrap().m, 0);
    assert_eq!(shadow_of(&de, &de, &m, &[]).unwrap().m, 8);
    assert_eq!(shadow_of(&de, &de, &m, &[(0, 0), (1, 1)]).unwrap().m, 4);
}

#[test]
fn template_text_round_trip() {
    let g = build_gstar(2, 3).unwrap();
    let text = g.to_text();
    assert!(text.starts_with("nodes 8\n"));
    assert_eq!(Template::from_text(&text).unwrap(), g);
    assert!(Template::from_text("nodes 2\n1 3\n").is_err());
    assert!(Template::from_text("1 2\n").is_err());
}
