mod common;

use causalkg_core::corpus::{enumerate_spans, load_corpus, split_corpus, write_corpus};
use causalkg_core::schema::{builtin_schema, validate_graph, ETHNOGRAPHIC, SCIENTIFIC_CLAIMS};
use common::*;
use proptest::prelude::*;

#[test]
fn fixtures_are_valid_and_round_trip() {
    for (file, name, count) in [
        ("figures.json", SCIENTIFIC_CLAIMS, 2),
        ("synthetic.json", SCIENTIFIC_CLAIMS, 10),
        ("ethnographic.json", ETHNOGRAPHIC, 6),
    ] {
        let schema = builtin_schema(name).unwrap();
        let corpus = fixture(file, &schema);
        assert_eq!(corpus.len(), count, "{file}");
        for s in &corpus {
            assert!(validate_graph(&s.gold, &schema).is_empty(), "{file}: {}", validate_graph(&s.gold, &schema));
        }
        let mut bytes = Vec::new();
        write_corpus(&mut bytes, &corpus).unwrap();
        assert_eq!(load_corpus(bytes.as_slice(), Some(&schema)).unwrap(), corpus);
    }
}

#[test]
fn figure_entity_counts() {
    let corpus = fixture("figures.json", &builtin_schema(SCIENTIFIC_CLAIMS).unwrap());
    assert_eq!(corpus[0].gold.entities.len(), 9);
    assert_eq!(corpus[1].gold.entities.len(), 5);
}

#[test]
fn split_of_515_at_ten_percent() {
    let items: Vec<usize> = (0..515).collect();
    let (train, test) = split_corpus(&items, 0.1, 0).unwrap();
    assert_eq!((train.len(), test.len()), (464, 51));
    let mut all = [train, test].concat();
    all.sort();
    assert_eq!(all, items);
}

proptest! {
    #[test]
    fn span_count_matches_formula(n in 0usize..=30, max_len in 1usize..=12) {
        let spans = enumerate_spans(n, max_len);
        prop_assert_eq!(spans.len(), oracle_span_count(n, max_len));
        prop_assert!(spans.iter().all(|&(s, e)| s <= e && e < n && e - s < max_len));
    }
}
