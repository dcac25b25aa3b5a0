use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use super::{path_subgraph, CausalError, GlobalGraph, TraversalPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

impl FromStr for ExportFormat {
    type Err = CausalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(ExportFormat::Dot),
            "json" => Ok(ExportFormat::Json),
            other => Err(CausalError::Config(format!("unknown format `{other}` (expected dot or json)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExportOptions {
    /// Draw `modifier` edges without a label.
    pub unlabeled_modifiers: bool,
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' | '\r' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

fn capitalize(label: &str) -> String {
    let mut chars = label.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn to_dot(graph: &GlobalGraph, options: ExportOptions) -> String {
    let mut out = String::from("digraph causal {\n  node [shape=box];\n");
    for (k, entry) in graph.sentences.iter().enumerate() {
        let members: Vec<usize> = (0..graph.nodes.len()).filter(|&n| graph.nodes[n].sentence == entry.id).collect();
        if members.is_empty() {
            continue;
        }
        let _ = writeln!(out, "  subgraph cluster_{k} {{\n    label=\"{}\";", escape(&entry.id));
        for n in members {
            let node = &graph.nodes[n];
            let mut label = format!("{}\\n{}", escape(&node.text), escape(&node.entity_type));
            if !node.attributes.is_empty() {
                let attrs: Vec<String> = node.attributes.iter().map(|a| escape(&capitalize(a))).collect();
                let _ = write!(label, "\\n({})", attrs.join(", "));
            }
            let _ = writeln!(out, "    n{n} [label=\"{label}\"];");
        }
        out.push_str("  }\n");
    }
    for e in &graph.edges {
        if options.unlabeled_modifiers && e.relation_type == "modifier" {
            let _ = writeln!(out, "  n{} -> n{};", e.head, e.tail);
        } else {
            let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", e.head, e.tail, escape(&e.relation_type));
        }
    }
    out.push_str("}\n");
    out
}

pub fn export_graph(graph: &GlobalGraph, format: ExportFormat, options: ExportOptions) -> String {
    match format {
        ExportFormat::Dot => to_dot(graph, options),
        ExportFormat::Json => {
            let mut text = graph.to_json();
            text.push('\n');
            text
        }
    }
}

#[derive(Serialize)]
struct PathRecord {
    nodes: Vec<usize>,
    hops: Vec<super::Hop>,
    trivial: bool,
    text: String,
}

#[derive(Serialize)]
struct PathsDocument {
    paths: Vec<PathRecord>,
    graph: GlobalGraph,
}

/// Renders the union of `paths`. In JSON the paths are listed too, with
/// indices into the exported subgraph.
pub fn export_paths(
    graph: &GlobalGraph,
    paths: &[TraversalPath],
    format: ExportFormat,
    options: ExportOptions,
) -> String {
    let (sub, map) = graph.restrict(&path_subgraph(paths));
    match format {
        ExportFormat::Dot => to_dot(&sub, options),
        ExportFormat::Json => {
            let records = paths
                .iter()
                .map(|p| {
                    let local = map.path(p).expect("path lies in its own union");
                    PathRecord {
                        trivial: local.is_trivial(),
                        text: local.describe(&sub),
                        nodes: local.nodes,
                        hops: local.hops,
                    }
                })
                .collect();
            let mut text =
                serde_json::to_string_pretty(&PathsDocument { paths: records, graph: sub }).expect("paths serialize");
            text.push('\n');
            text
        }
    }
}
