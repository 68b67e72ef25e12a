use std::collections::HashSet;

use proptest::prelude::*;
use ptss::kg::{KnowledgeGraph, Triple};
use ptss::linalg::Matrix;
use ptss::rng;
use ptss::sampler::{build_dataset, compute_ptss, sample_candidates, Provenance, NEGATIVE_ATTEMPTS_PER_N};
use ptss::seed::{EmbeddingSet, ModelTag, ValueKind};
use rand::Rng as _;

fn random_embeddings(g: &KnowledgeGraph, dim: usize, seed: u64) -> EmbeddingSet {
    let mut r = rng::stream(seed, "test-emb");
    let mut m = |rows: usize| {
        let v = (0..rows * dim).map(|_| r.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, dim, v).unwrap()
    };
    let e = m(g.num_entities());
    let p = m(g.num_predicates());
    EmbeddingSet::new(e, p, ValueKind::Real, ModelTag::Imported).unwrap()
}

fn graph_strategy() -> impl Strategy<Value = KnowledgeGraph> {
    (2usize..12, 1usize..5).prop_flat_map(|(ne, np)| {
        prop::collection::vec((0..ne, 0..np, 0..ne), 1..60).prop_map(move |ts| {
            KnowledgeGraph::from_ids(ne, np, ts.into_iter().map(|(h, p, t)| Triple::new(h, p, t))).unwrap()
        })
    })
}

/// Every triple eligible for a slot, found by scanning the whole graph.
fn eligible(g: &KnowledgeGraph, anchor: usize, slot: Provenance) -> Vec<usize> {
    let a = g.triple(anchor);
    (0..g.num_triples())
        .filter(|&b| b != anchor && slot.holds(a, g.triple(b)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ptss_symmetric_bounded_and_one_on_self(g in graph_strategy(), seed in any::<u64>()) {
        let emb = random_embeddings(&g, 4, seed);
        for (i, &a) in g.triples().iter().enumerate() {
            let selfsim = compute_ptss(a, a, &emb);
            prop_assert!((selfsim - 1.0).abs() < 1e-12);
            for &b in &g.triples()[i..] {
                let ab = compute_ptss(a, b, &emb);
                prop_assert!((-1.0..=1.0).contains(&ab));
                prop_assert_eq!(ab, compute_ptss(b, a, &emb));
            }
        }
    }

    #[test]
    fn candidates_match_brute_force_eligibility(g in graph_strategy(), n in 1usize..6, seed in any::<u64>()) {
        for anchor in 0..g.num_triples() {
            let mut r = rng::item_stream(seed, "oracle", anchor as u64);
            let c = sample_candidates(&g, anchor, n, &mut r).unwrap();
            prop_assert!(c.items.len() <= 4 * n);
            for slot in [Provenance::SharedHead, Provenance::SharedTail, Provenance::SharedPredicate, Provenance::Negative] {
                let pool: HashSet<usize> = eligible(&g, anchor, slot).into_iter().collect();
                let drawn: Vec<usize> = c.items.iter().filter(|(_, p)| *p == slot).map(|(b, _)| *b).collect();
                let distinct: HashSet<usize> = drawn.iter().copied().collect();
                prop_assert_eq!(distinct.len(), drawn.len(), "duplicates in {:?}", slot);
                prop_assert!(distinct.is_subset(&pool), "{:?} drew outside its pool", slot);
                if slot != Provenance::Negative {
                    prop_assert_eq!(drawn.len(), pool.len().min(n));
                } else {
                    prop_assert!(drawn.len() <= n);
                    prop_assert_eq!(c.negatives_short, drawn.len() < n);
                    if pool.is_empty() {
                        prop_assert!(drawn.is_empty());
                    }
                }
            }
        }
    }

    #[test]
    fn dataset_size_and_provenance(g in graph_strategy(), n in 1usize..5, seed in any::<u64>()) {
        let emb = random_embeddings(&g, 3, 7);
        let d = build_dataset(&g, &emb, n, seed).unwrap();
        prop_assert!(d.pairs.len() <= 4 * n * g.num_triples());
        prop_assert_eq!(d.first_provenance_violation(&g), None);
        prop_assert!(d.pairs.iter().all(|p| p.triple_a != p.triple_b));
    }
}

/// Ten disjoint blocks; inside a block every slot has plenty of partners.
fn roomy_graph() -> KnowledgeGraph {
    let mut ts = Vec::new();
    for block in 0..10 {
        let e = |k: usize| block * 12 + k;
        for i in 0..10 {
            // head pool {0,1}, tail pool {2..=6}, predicate pool {0,1}
            ts.push(Triple::new(e(i % 2), block * 2 + (i / 5), e(2 + i % 5)));
        }
    }
    KnowledgeGraph::from_ids(120, 20, ts).unwrap()
}

#[test]
fn full_quota_yields_four_n_per_anchor() {
    let g = roomy_graph();
    assert_eq!(g.num_triples(), 100);
    for a in 0..g.num_triples() {
        for slot in [
            Provenance::SharedHead,
            Provenance::SharedTail,
            Provenance::SharedPredicate,
        ] {
            assert!(!eligible(&g, a, slot).is_empty(), "anchor {a} slot {slot:?}");
        }
    }
    let emb = random_embeddings(&g, 8, 1);
    // N bounded by the smallest slot pool keeps every quota satisfiable
    let n = (0..g.num_triples())
        .flat_map(|a| {
            [
                Provenance::SharedHead,
                Provenance::SharedTail,
                Provenance::SharedPredicate,
            ]
            .map(|s| eligible(&g, a, s).len())
        })
        .min()
        .unwrap();
    let d = build_dataset(&g, &emb, n, 3).unwrap();
    assert_eq!(d.negative_shortfalls, 0);
    assert_eq!(d.pairs.len(), 4 * n * 100);
}

#[test]
fn hundred_triples_with_n_five_give_two_thousand_pairs() {
    // every entity heads 10 triples and ends 10, every predicate labels
    // 10, so each slot has nine partners
    let mut ts = Vec::new();
    for h in 0..10usize {
        for p in 0..10usize {
            ts.push(Triple::new(h, p, (h + 3 * p + 1) % 10));
        }
    }
    let g = KnowledgeGraph::from_ids(10, 10, ts).unwrap();
    assert_eq!(g.num_triples(), 100);
    for a in 0..100 {
        for slot in [
            Provenance::SharedHead,
            Provenance::SharedTail,
            Provenance::SharedPredicate,
        ] {
            assert!(eligible(&g, a, slot).len() >= 5, "anchor {a} slot {slot:?}");
        }
    }
    let d = build_dataset(&g, &random_embeddings(&g, 6, 2), 5, 9).unwrap();
    assert_eq!(d.negative_shortfalls, 0);
    assert_eq!(d.pairs.len(), 2000);
}

#[test]
fn shared_predicate_pairs_score_above_negatives() {
    let g = roomy_graph();
    let d = build_dataset(&g, &random_embeddings(&g, 16, 5), 3, 11).unwrap();
    let mean = |p: Provenance| {
        let v: Vec<f64> = d.pairs.iter().filter(|x| x.provenance == p).map(|x| x.score).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(Provenance::SharedPredicate) > mean(Provenance::Negative));
}

#[test]
fn same_seed_same_dataset_regardless_of_threads() {
    let g = roomy_graph();
    let emb = random_embeddings(&g, 4, 5);
    let a = build_dataset(&g, &emb, 2, 42).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| build_dataset(&g, &emb, 2, 42).unwrap());
    assert_eq!(a.pairs, b.pairs);
    let c = build_dataset(&g, &emb, 2, 43).unwrap();
    assert_ne!(a.pairs, c.pairs);
}

#[test]
fn negatives_give_up_after_budget() {
    // every triple shares the predicate, so no negative can exist
    let g = KnowledgeGraph::from_ids(4, 1, (0..3).map(|i| Triple::new(i, 0, i + 1))).unwrap();
    let mut r = rng::stream(0, "t");
    let c = sample_candidates(&g, 0, 2, &mut r).unwrap();
    assert!(c.negatives_short);
    assert_eq!(NEGATIVE_ATTEMPTS_PER_N, 100);
}
