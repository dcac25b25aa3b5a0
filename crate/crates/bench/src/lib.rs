//! Workloads for the benchmarks in `benches/`.

use std::path::PathBuf;

use causalkg_core::causal::merge_graphs;
use causalkg_core::corpus::load_corpus_file;
use causalkg_core::schema::{builtin_schema, KnowledgeGraph, SCIENTIFIC_CLAIMS};
use causalkg_core::{AnnotatedSentence, GlobalGraph};

/// The ten-sentence synthetic corpus shipped with the core test data.
pub fn synthetic_corpus() -> Vec<AnnotatedSentence> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/synthetic.json");
    let schema = builtin_schema(SCIENTIFIC_CLAIMS).expect("builtin schema");
    load_corpus_file(&path, Some(&schema)).expect("synthetic corpus loads")
}

/// A two-rail ladder of `rungs` rungs: node `2i` and `2i + 1` are joined,
/// and each rail runs forward. Path counts grow quickly with the hop limit.
pub fn ladder(rungs: usize) -> GlobalGraph {
    let n = 2 * rungs;
    let mut g = KnowledgeGraph::new((0..n).map(|i| format!("t{i}")).collect());
    for i in 0..n {
        g.add_entity(i, i, "factor");
    }
    for r in 0..rungs {
        g.add_relation(2 * r, 2 * r + 1, "arg0");
        if r + 1 < rungs {
            g.add_relation(2 * r, 2 * r + 2, "arg1");
            g.add_relation(2 * r + 1, 2 * r + 3, "arg1");
        }
    }
    merge_graphs([("ladder", g)]).expect("single sentence merges")
}
