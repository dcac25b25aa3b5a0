//! A global causal graph built from per-sentence graphs, with concept
//! matching and path queries.
//!
//! Merging is a disjoint union: every entity becomes a node tagged with its
//! sentence, and edges never cross sentences. Queries reach across
//! sentences only through the node sets that concept matching returns.

mod export;
pub mod lemma;
mod paths;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::tokenize;
use crate::encoder::{maxpool, maxpool_rows, Encoder, EncoderError};
use crate::schema::{AttributeLabel, EntitySpan, KnowledgeGraph, RelationEdge};

pub use export::{export_graph, export_paths, ExportFormat, ExportOptions};
pub use lemma::lemmatize;
pub use paths::{find_paths, path_subgraph, Hop, PathSubgraph, Reindex, TraversalPath};

pub const DEFAULT_MAX_HOPS: usize = 6;

#[derive(Debug, Error)]
pub enum CausalError {
    #[error("duplicate sentence id `{0}`")]
    Merge(String),
    #[error("{0}")]
    Config(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One entity occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalNode {
    pub sentence: String,
    /// Index of the entity within its sentence graph.
    pub entity: usize,
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub entity_type: String,
    pub text: String,
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalEdge {
    pub head: usize,
    pub tail: usize,
    #[serde(rename = "type")]
    pub relation_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceEntry {
    pub id: String,
    pub tokens: Vec<String>,
    /// Attribute order of the source graph, as `(entity, type)`.
    pub attribute_order: Vec<(usize, String)>,
}

/// Disjoint union of sentence graphs. Node and edge indices are positions
/// in `nodes` and `edges`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalGraph {
    pub sentences: Vec<SentenceEntry>,
    pub nodes: Vec<GlobalNode>,
    pub edges: Vec<GlobalEdge>,
}

/// Disjoint union of `(sentence id, graph)` pairs, in input order.
pub fn merge_graphs<I, S>(graphs: I) -> Result<GlobalGraph, CausalError>
where
    I: IntoIterator<Item = (S, KnowledgeGraph)>,
    S: Into<String>,
{
    let mut out = GlobalGraph::default();
    let mut seen = BTreeSet::new();
    for (id, graph) in graphs {
        let id = id.into();
        if !seen.insert(id.clone()) {
            return Err(CausalError::Merge(id));
        }
        let offset = out.nodes.len();
        for (i, e) in graph.entities.iter().enumerate() {
            let text = graph
                .tokens
                .get(e.start..=e.end)
                .ok_or_else(|| CausalError::InvalidGraph(format!("sentence `{id}`: span {e} out of range")))?
                .join(" ");
            out.nodes.push(GlobalNode {
                sentence: id.clone(),
                entity: i,
                start: e.start,
                end: e.end,
                entity_type: e.entity_type.clone(),
                text,
                attributes: graph.attributes_of(i).map(String::from).collect(),
            });
        }
        let count = graph.entities.len();
        for r in &graph.relations {
            if r.head >= count || r.tail >= count {
                return Err(CausalError::InvalidGraph(format!("sentence `{id}`: relation endpoint out of range")));
            }
            out.edges.push(GlobalEdge {
                head: offset + r.head,
                tail: offset + r.tail,
                relation_type: r.relation_type.clone(),
            });
        }
        if let Some(a) = graph.attributes.iter().find(|a| a.entity >= count) {
            return Err(CausalError::InvalidGraph(format!(
                "sentence `{id}`: attribute on missing entity {}",
                a.entity
            )));
        }
        out.sentences.push(SentenceEntry {
            id,
            tokens: graph.tokens,
            attribute_order: graph.attributes.into_iter().map(|a| (a.entity, a.attribute_type)).collect(),
        });
    }
    Ok(out)
}

impl GlobalGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn attribute_count(&self) -> usize {
        self.nodes.iter().map(|n| n.attributes.len()).sum()
    }

    pub fn sentence(&self, id: &str) -> Option<&SentenceEntry> {
        self.sentences.iter().find(|s| s.id == id)
    }

    /// Rebuilds the graph of one sentence.
    pub fn sentence_graph(&self, id: &str) -> Option<KnowledgeGraph> {
        let entry = self.sentence(id)?;
        let members: Vec<usize> = (0..self.nodes.len()).filter(|&n| self.nodes[n].sentence == id).collect();
        let mut local = BTreeMap::new();
        let mut graph = KnowledgeGraph::new(entry.tokens.clone());
        for &n in &members {
            let node = &self.nodes[n];
            local.insert(n, node.entity);
            graph.entities.push(EntitySpan::new(node.start, node.end, node.entity_type.clone()));
        }
        graph.attributes = entry.attribute_order.iter().map(|(e, t)| AttributeLabel::new(*e, t.clone())).collect();
        graph.relations = self
            .edges
            .iter()
            .filter_map(|e| {
                Some(RelationEdge::new(*local.get(&e.head)?, *local.get(&e.tail)?, e.relation_type.clone()))
            })
            .collect();
        Some(graph)
    }

    /// Checks indices and provenance after deserialization.
    pub fn validate(&self) -> Result<(), CausalError> {
        let ids: BTreeSet<&str> = self.sentences.iter().map(|s| s.id.as_str()).collect();
        if ids.len() != self.sentences.len() {
            return Err(CausalError::InvalidGraph("duplicate sentence id".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let entry = self.sentence(&n.sentence).ok_or_else(|| {
                CausalError::InvalidGraph(format!("node {i} names unknown sentence `{}`", n.sentence))
            })?;
            if n.start > n.end || n.end >= entry.tokens.len() {
                return Err(CausalError::InvalidGraph(format!("node {i} span out of range")));
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            let (Some(h), Some(t)) = (self.nodes.get(e.head), self.nodes.get(e.tail)) else {
                return Err(CausalError::InvalidGraph(format!("edge {i} endpoint out of range")));
            };
            if h.sentence != t.sentence {
                return Err(CausalError::InvalidGraph(format!("edge {i} crosses sentences")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<GlobalGraph, CausalError> {
        let graph: GlobalGraph = serde_json::from_str(text)?;
        graph.validate()?;
        Ok(graph)
    }

    /// For each node, `(edge, neighbor, forward)` per incident edge. Self
    /// loops are skipped.
    pub(crate) fn adjacency(&self) -> Vec<Vec<(usize, usize, bool)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            if e.head == e.tail {
                continue;
            }
            adj[e.head].push((i, e.tail, true));
            adj[e.tail].push((i, e.head, false));
        }
        adj
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matcher {
    #[default]
    Lemma,
    Vector,
}

impl std::str::FromStr for Matcher {
    type Err = CausalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lemma" => Ok(Matcher::Lemma),
            "vector" => Ok(Matcher::Vector),
            other => Err(CausalError::Config(format!("unknown matcher `{other}` (expected lemma or vector)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptQuery {
    pub surface: String,
    pub matcher: Matcher,
    /// Cosine cutoff for [`Matcher::Vector`].
    pub threshold: f64,
}

impl ConceptQuery {
    pub fn lemma(surface: impl Into<String>) -> Self {
        ConceptQuery { surface: surface.into(), matcher: Matcher::Lemma, threshold: 0.0 }
    }

    pub fn vector(surface: impl Into<String>, threshold: f64) -> Self {
        ConceptQuery { surface: surface.into(), matcher: Matcher::Vector, threshold }
    }
}

fn cosine(a: &ndarray::Array1<f64>, b: &ndarray::Array1<f64>) -> f64 {
    let denom = a.dot(a).sqrt() * b.dot(b).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        a.dot(b) / denom
    }
}

/// Nodes matching `query`, in index order.
///
/// Lemma mode: every query word's lemma occurs among the lemmas of the
/// node's tokens. Vector mode: the cosine similarity between the max-pooled
/// query and the max-pooled node span (encoded in its sentence) reaches the
/// threshold.
pub fn match_concepts(
    query: &ConceptQuery,
    graph: &GlobalGraph,
    encoder: Option<&dyn Encoder>,
) -> Result<BTreeSet<usize>, CausalError> {
    let words = tokenize(&query.surface);
    if words.is_empty() {
        return Err(CausalError::Config("empty concept query".into()));
    }
    match query.matcher {
        Matcher::Lemma => {
            let wanted: BTreeSet<String> = words.iter().map(|w| lemmatize(w)).collect();
            Ok((0..graph.nodes.len())
                .filter(|&n| {
                    let lemmas: BTreeSet<String> = graph.nodes[n].text.split(' ').map(lemmatize).collect();
                    wanted.is_subset(&lemmas)
                })
                .collect())
        }
        Matcher::Vector => {
            let encoder = encoder.ok_or_else(|| CausalError::Config("vector matching needs an encoder".into()))?;
            let q = encoder.encode(&words)?;
            let q = maxpool(q.vectors.rows())?;
            let mut out = BTreeSet::new();
            for entry in &graph.sentences {
                let members: Vec<usize> =
                    (0..graph.nodes.len()).filter(|&n| graph.nodes[n].sentence == entry.id).collect();
                if members.is_empty() {
                    continue;
                }
                let emb = encoder.encode(&entry.tokens)?;
                for n in members {
                    let node = &graph.nodes[n];
                    let v = maxpool_rows(emb.vectors.view(), node.start, node.end);
                    if cosine(&q, &v) >= query.threshold {
                        out.insert(n);
                    }
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderSpec;

    fn women() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::from_words(&["the", "women", "prayed", "to", "prevent", "any", "complications"]);
        let women = g.add_entity(0, 1, "entity");
        let prayed = g.add_entity(2, 2, "entity");
        let prevent = g.add_entity(4, 4, "entity");
        let comp = g.add_entity(5, 6, "entity");
        g.add_attribute(prayed, "spirituality");
        g.add_attribute(prevent, "influence");
        g.add_relation(prayed, women, "agent/poss");
        g.add_relation(prayed, prevent, "forPurpose");
        g.add_relation(prevent, comp, "q-");
        g
    }

    fn safe() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::from_words(&["they", "prayed", "for", "a", "safe", "pregnancy"]);
        let they = g.add_entity(0, 0, "entity");
        let prayed = g.add_entity(1, 1, "entity");
        let preg = g.add_entity(4, 5, "entity");
        g.add_attribute(prayed, "spirituality");
        g.add_relation(prayed, they, "agent/poss");
        g.add_relation(prayed, preg, "forPurpose");
        g
    }

    #[test]
    fn empty_merge() {
        let g = merge_graphs(Vec::<(String, KnowledgeGraph)>::new()).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (0, 0));
    }

    #[test]
    fn disjoint_union() {
        let g = merge_graphs([("a", women()), ("b", safe())]).unwrap();
        assert_eq!(g.node_count(), 7);
        assert_eq!(g.edge_count(), 5);
        assert_eq!(g.attribute_count(), 3);
        for e in &g.edges {
            assert_eq!(g.nodes[e.head].sentence, g.nodes[e.tail].sentence);
        }
        assert_eq!(g.nodes[5].text, "prayed");
        assert_eq!(g.nodes[5].sentence, "b");
        assert_eq!(g.sentence_graph("a").unwrap(), women());
        assert_eq!(g.sentence_graph("b").unwrap(), safe());
        assert!(g.sentence_graph("c").is_none());
    }

    #[test]
    fn duplicate_id_rejected() {
        assert!(matches!(merge_graphs([("a", women()), ("a", safe())]), Err(CausalError::Merge(id)) if id == "a"));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let g = merge_graphs([("a", women()), ("b", safe())]).unwrap();
        assert_eq!(GlobalGraph::from_json(&g.to_json()).unwrap(), g);
        let mut bad = g.clone();
        bad.edges[0].tail = 6;
        assert!(matches!(GlobalGraph::from_json(&bad.to_json()), Err(CausalError::InvalidGraph(_))));
    }

    #[test]
    fn lemma_matching() {
        let g = merge_graphs([("a", women()), ("b", safe())]).unwrap();
        let pray = match_concepts(&ConceptQuery::lemma("pray"), &g, None).unwrap();
        assert_eq!(pray, BTreeSet::from([1, 5]));
        let preg = match_concepts(&ConceptQuery::lemma("Pregnant"), &g, None).unwrap();
        assert_eq!(preg, BTreeSet::from([6]));
        assert!(match_concepts(&ConceptQuery::lemma("astronomy"), &g, None).unwrap().is_empty());
        assert!(matches!(match_concepts(&ConceptQuery::lemma("  "), &g, None), Err(CausalError::Config(_))));
    }

    #[test]
    fn lemma_matching_reflexive() {
        let g = merge_graphs([("a", women())]).unwrap();
        for (n, node) in g.nodes.iter().enumerate() {
            for word in node.text.split(' ') {
                let hits = match_concepts(&ConceptQuery::lemma(lemmatize(word)), &g, None).unwrap();
                assert!(hits.contains(&n));
                let hits = match_concepts(&ConceptQuery::lemma(word.to_uppercase()), &g, None).unwrap();
                assert!(hits.contains(&n));
            }
        }
    }

    #[test]
    fn vector_matching() {
        let g = merge_graphs([("a", women()), ("b", safe())]).unwrap();
        let q = ConceptQuery::vector("prayed", 0.999);
        assert!(matches!(match_concepts(&q, &g, None), Err(CausalError::Config(_))));
        let enc = EncoderSpec::default().build().unwrap();
        let all = match_concepts(&ConceptQuery::vector("prayed", -1.0), &g, Some(enc.as_ref())).unwrap();
        assert_eq!(all.len(), g.node_count());
        let none = match_concepts(&ConceptQuery::vector("prayed", 1.1), &g, Some(enc.as_ref())).unwrap();
        assert!(none.is_empty());
        let close = match_concepts(&ConceptQuery::vector("prayed", 0.5), &g, Some(enc.as_ref())).unwrap();
        assert!(close.contains(&1) || close.contains(&5));
    }

    #[test]
    fn matcher_parse() {
        assert_eq!("lemma".parse::<Matcher>().unwrap(), Matcher::Lemma);
        assert_eq!("vector".parse::<Matcher>().unwrap(), Matcher::Vector);
        assert!("fuzzy".parse::<Matcher>().is_err());
    }
}
