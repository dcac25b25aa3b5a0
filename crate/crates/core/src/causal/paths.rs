use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{CausalError, GlobalGraph, SentenceEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub edge: usize,
    /// True when the edge was followed from head to tail.
    pub forward: bool,
}

/// A simple path: `nodes[i]` and `nodes[i + 1]` are joined by `hops[i]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TraversalPath {
    pub nodes: Vec<usize>,
    pub hops: Vec<Hop>,
}

impl TraversalPath {
    /// A single node matching both ends of the query.
    pub fn is_trivial(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn source(&self) -> usize {
        self.nodes[0]
    }

    pub fn destination(&self) -> usize {
        self.nodes[self.nodes.len() - 1]
    }

    /// `prayed -forPurpose-> prevent -q--> complications`; reverse hops
    /// read `<-type-`.
    pub fn describe(&self, graph: &GlobalGraph) -> String {
        let mut out = graph.nodes[self.nodes[0]].text.clone();
        for (hop, &next) in self.hops.iter().zip(&self.nodes[1..]) {
            let label = &graph.edges[hop.edge].relation_type;
            let arrow = if hop.forward { format!(" -{label}-> ") } else { format!(" <-{label}- ") };
            out.push_str(&arrow);
            out.push_str(&graph.nodes[next].text);
        }
        out
    }
}

/// All simple paths of at most `max_hops` edges from a source to a
/// destination, following edges in either direction. A node in both sets
/// yields the trivial path. Paths are ordered by length, then nodes, then
/// hops.
pub fn find_paths(
    graph: &GlobalGraph,
    sources: &BTreeSet<usize>,
    destinations: &BTreeSet<usize>,
    max_hops: usize,
) -> Result<Vec<TraversalPath>, CausalError> {
    if max_hops == 0 {
        return Err(CausalError::Config("max_hops must be at least 1".into()));
    }
    let n = graph.nodes.len();
    if let Some(bad) = sources.iter().chain(destinations).find(|&&v| v >= n) {
        return Err(CausalError::Config(format!("node {bad} is not in the graph")));
    }
    let adj = graph.adjacency();
    let mut search = Search {
        adj: &adj,
        destinations,
        max_hops,
        on_path: vec![false; n],
        nodes: Vec::new(),
        hops: Vec::new(),
        found: Vec::new(),
    };
    for &s in sources {
        search.visit(s);
    }
    let mut found = search.found;
    found.sort_by(|a, b| a.hops.len().cmp(&b.hops.len()).then_with(|| a.cmp(b)));
    Ok(found)
}

struct Search<'a> {
    adj: &'a [Vec<(usize, usize, bool)>],
    destinations: &'a BTreeSet<usize>,
    max_hops: usize,
    on_path: Vec<bool>,
    nodes: Vec<usize>,
    hops: Vec<Hop>,
    found: Vec<TraversalPath>,
}

impl Search<'_> {
    fn visit(&mut self, v: usize) {
        self.on_path[v] = true;
        self.nodes.push(v);
        if self.destinations.contains(&v) {
            self.found.push(TraversalPath { nodes: self.nodes.clone(), hops: self.hops.clone() });
        }
        if self.hops.len() < self.max_hops {
            for &(edge, next, forward) in &self.adj[v] {
                if !self.on_path[next] {
                    self.hops.push(Hop { edge, forward });
                    self.visit(next);
                    self.hops.pop();
                }
            }
        }
        self.nodes.pop();
        self.on_path[v] = false;
    }
}

/// Nodes and edges lying on at least one path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSubgraph {
    pub nodes: BTreeSet<usize>,
    pub edges: BTreeSet<usize>,
}

pub fn path_subgraph(paths: &[TraversalPath]) -> PathSubgraph {
    let mut out = PathSubgraph::default();
    for p in paths {
        out.nodes.extend(p.nodes.iter().copied());
        out.edges.extend(p.hops.iter().map(|h| h.edge));
    }
    out
}

/// Index maps from a graph into one of its restrictions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Reindex {
    pub nodes: BTreeMap<usize, usize>,
    pub edges: BTreeMap<usize, usize>,
}

impl Reindex {
    /// Rewrites a path of the original graph in restricted indices, or
    /// `None` if it leaves the restriction.
    pub fn path(&self, path: &TraversalPath) -> Option<TraversalPath> {
        Some(TraversalPath {
            nodes: path.nodes.iter().map(|n| self.nodes.get(n).copied()).collect::<Option<_>>()?,
            hops: path
                .hops
                .iter()
                .map(|h| Some(Hop { edge: *self.edges.get(&h.edge)?, forward: h.forward }))
                .collect::<Option<_>>()?,
        })
    }
}

impl GlobalGraph {
    /// The graph induced by `keep`. Edges are kept only if listed and both
    /// endpoints are kept. Entity indices are renumbered per sentence so
    /// that [`GlobalGraph::sentence_graph`] stays consistent.
    pub fn restrict(&self, keep: &PathSubgraph) -> (GlobalGraph, Reindex) {
        let mut map = Reindex::default();
        let mut out = GlobalGraph::default();
        let mut local: BTreeMap<(&str, usize), usize> = BTreeMap::new();
        for entry in &self.sentences {
            let mut next = 0;
            for (i, node) in self.nodes.iter().enumerate() {
                if node.sentence != entry.id || !keep.nodes.contains(&i) {
                    continue;
                }
                local.insert((entry.id.as_str(), node.entity), next);
                map.nodes.insert(i, out.nodes.len());
                let mut node = node.clone();
                node.entity = next;
                out.nodes.push(node);
                next += 1;
            }
            if next > 0 {
                out.sentences.push(SentenceEntry {
                    id: entry.id.clone(),
                    tokens: entry.tokens.clone(),
                    attribute_order: entry
                        .attribute_order
                        .iter()
                        .filter_map(|(e, t)| Some((*local.get(&(entry.id.as_str(), *e))?, t.clone())))
                        .collect(),
                });
            }
        }
        for (i, edge) in self.edges.iter().enumerate() {
            if !keep.edges.contains(&i) {
                continue;
            }
            if let (Some(&h), Some(&t)) = (map.nodes.get(&edge.head), map.nodes.get(&edge.tail)) {
                map.edges.insert(i, out.edges.len());
                let mut edge = edge.clone();
                edge.head = h;
                edge.tail = t;
                out.edges.push(edge);
            }
        }
        (out, map)
    }
}

#[cfg(test)]
mod tests {
    use super::super::merge_graphs;
    use super::*;
    use crate::schema::KnowledgeGraph;

    fn chain() -> GlobalGraph {
        let mut g = KnowledgeGraph::from_words(&["a", "b", "c"]);
        for i in 0..3 {
            g.add_entity(i, i, "entity");
        }
        g.add_relation(0, 1, "arg0");
        g.add_relation(1, 2, "q-");
        merge_graphs([("s", g)]).unwrap()
    }

    #[test]
    fn chain_has_one_path() {
        let g = chain();
        let paths = find_paths(&g, &BTreeSet::from([0]), &BTreeSet::from([2]), 6).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].nodes, [0, 1, 2]);
        assert_eq!(paths[0].hops, [Hop { edge: 0, forward: true }, Hop { edge: 1, forward: true }]);
        assert_eq!(paths[0].describe(&g), "a -arg0-> b -q--> c");
        let back = find_paths(&g, &BTreeSet::from([2]), &BTreeSet::from([0]), 6).unwrap();
        assert!(back[0].hops.iter().all(|h| !h.forward));
        assert_eq!(back[0].describe(&g), "c <-q-- b <-arg0- a");
        assert!(find_paths(&g, &BTreeSet::from([0]), &BTreeSet::from([2]), 1).unwrap().is_empty());
    }

    #[test]
    fn trivial_path() {
        let g = chain();
        let paths = find_paths(&g, &BTreeSet::from([1]), &BTreeSet::from([1]), 3).unwrap();
        assert_eq!(paths.len(), 1);
        assert!(paths[0].is_trivial());
        assert_eq!(paths[0].nodes, [1]);
    }

    #[test]
    fn bad_arguments() {
        let g = chain();
        assert!(find_paths(&g, &BTreeSet::from([0]), &BTreeSet::from([2]), 0).is_err());
        assert!(find_paths(&g, &BTreeSet::from([9]), &BTreeSet::from([2]), 2).is_err());
        assert!(find_paths(&g, &BTreeSet::new(), &BTreeSet::from([2]), 2).unwrap().is_empty());
    }

    #[test]
    fn parallel_edges_give_distinct_paths() {
        let mut k = KnowledgeGraph::from_words(&["a", "b"]);
        k.add_entity(0, 0, "entity");
        k.add_entity(1, 1, "entity");
        k.add_relation(0, 1, "arg0");
        k.add_relation(1, 0, "modifier");
        k.add_relation(0, 0, "q+");
        let g = merge_graphs([("s", k)]).unwrap();
        let paths = find_paths(&g, &BTreeSet::from([0]), &BTreeSet::from([1]), 4).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[1].hops, [Hop { edge: 1, forward: false }]);
    }

    #[test]
    fn restrict_keeps_path_structure() {
        let g = chain();
        let paths = find_paths(&g, &BTreeSet::from([1]), &BTreeSet::from([2]), 6).unwrap();
        let (sub, map) = g.restrict(&path_subgraph(&paths));
        assert_eq!(sub.node_count(), 2);
        assert_eq!(sub.edge_count(), 1);
        assert_eq!(sub.nodes[0].text, "b");
        assert_eq!(map.path(&paths[0]).unwrap().nodes, [0, 1]);
        let k = sub.sentence_graph("s").unwrap();
        assert_eq!(k.entities.len(), 2);
        assert_eq!(k.relations[0].relation_type, "q-");
        sub.validate().unwrap();
    }
}
