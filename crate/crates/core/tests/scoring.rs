mod common;

use causalkg_core::schema::KnowledgeGraph;
use causalkg_core::scorer::{evaluate, f1_score, match_attributes, match_entities, match_relations, LabelCounts};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn as_tally(c: LabelCounts) -> Tally {
    c.into_iter().map(|(k, v)| (k, (v.tp, v.fp, v.fn_))).collect()
}

#[test]
fn published_f1_follows_from_precision_and_recall() {
    for &(section, label, p, r, f1) in PUBLISHED_ROWS {
        let got = 100.0 * f1_score(p / 100.0, r / 100.0);
        assert!((got - f1).abs() <= 0.01, "{section}/{label}: {got:.4} vs {f1}");
    }
}

#[test]
fn identical_corpora_score_100() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gold: Vec<KnowledgeGraph> = (0..20).map(|_| random_graph(&mut rng, 12)).collect();
    let report = evaluate(&gold, &gold, None).unwrap();
    for s in [&report.entities, &report.attributes, &report.relations] {
        if s.counts.tp > 0 {
            assert_eq!(s.micro.f1, 100.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_brute_force_oracle(seed in any::<u64>(), n in 3usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold = random_graph(&mut rng, n);
        let pred = if rng.gen_bool(0.2) { random_graph(&mut rng, n) } else { perturb(&mut rng, &gold) };
        prop_assert_eq!(as_tally(match_entities(&gold, &pred)), oracle_entities(&gold, &pred));
        prop_assert_eq!(as_tally(match_relations(&gold, &pred)), oracle_relations(&gold, &pred));
        prop_assert_eq!(as_tally(match_attributes(&gold, &pred)), oracle_attributes(&gold, &pred));
    }

    #[test]
    fn micro_average_matches_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold: Vec<KnowledgeGraph> = (0..5).map(|_| random_graph(&mut rng, 10)).collect();
        let pred: Vec<KnowledgeGraph> = gold.iter().map(|g| perturb(&mut rng, g)).collect();
        let report = evaluate(&gold, &pred, None).unwrap();
        let mut relations = Tally::new();
        for (g, p) in gold.iter().zip(&pred) {
            merge_tally(&mut relations, oracle_relations(g, p));
        }
        let (p, r, f) = oracle_micro(&relations);
        prop_assert!((report.relations.micro.precision - p).abs() <= 0.005);
        prop_assert!((report.relations.micro.recall - r).abs() <= 0.005);
        prop_assert!((report.relations.micro.f1 - f).abs() <= 0.005);
    }

    #[test]
    fn mistyped_endpoint_never_earns_relation_credit(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold = random_graph(&mut rng, 10);
        prop_assume!(!gold.relations.is_empty());
        let target = gold.relations[rng.gen_range(0..gold.relations.len())].clone();
        let endpoint = if rng.gen_bool(0.5) { target.head } else { target.tail };
        let mut pred = gold.clone();
        pred.entities[endpoint].entity_type = "qualifier".into();
        let counts = match_relations(&gold, &pred);
        let touching = gold.relations.iter().filter(|r| r.head == endpoint || r.tail == endpoint).count();
        let tp: usize = counts.values().map(|c| c.tp).sum();
        prop_assert_eq!(tp, gold.relations.len() - touching);
        let attrs = match_attributes(&gold, &pred);
        let owned = gold.attributes.iter().filter(|a| a.entity == endpoint).count();
        prop_assert_eq!(attrs.values().map(|c| c.tp).sum::<usize>(), gold.attributes.len() - owned);
    }
}
