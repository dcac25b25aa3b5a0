//! Knowledge-graph data model, builtin schemata and structural validation.
//!
//! A [`KnowledgeGraph`] is the graph extracted from one sentence: labeled
//! token spans (entities), boolean labels on entities (attributes) and
//! typed directed edges between entities (relations). It is a directed
//! multi-graph without self-cycles; several edges of distinct types may
//! connect the same ordered pair.
//!
//! Token indices are word-level and inclusive on both ends. Attributes and
//! relations refer to entities by their index in [`KnowledgeGraph::entities`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const SCIENTIFIC_CLAIMS: &str = "scientific-claims";
pub const ETHNOGRAPHIC: &str = "ethnographic";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("no builtin schema named `{0}` (known: scientific-claims, ethnographic)")]
    NotFound(String),
    #[error("schema `{schema}` has no {kind} types")]
    EmptyLabelSet { schema: String, kind: &'static str },
    #[error("schema `{schema}` lists {kind} type `{label}` more than once")]
    DuplicateLabel { schema: String, kind: &'static str, label: String },
    #[error("schema `{schema}` uses label `{label}` in more than one label set")]
    OverlappingLabel { schema: String, label: String },
    #[error("schema `{schema}` scopes unknown attribute `{attribute}`")]
    ScopeUnknownAttribute { schema: String, attribute: String },
    #[error("schema `{schema}` scopes attribute `{attribute}` to unknown entity type `{entity_type}`")]
    ScopeUnknownEntity { schema: String, attribute: String, entity_type: String },
}

/// The label vocabulary of a graph: entity, attribute and relation types.
///
/// Label order is significant; classifier output indices follow it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct SchemaDef {
    pub name: String,
    pub entity_types: Vec<String>,
    pub attribute_types: Vec<String>,
    pub relation_types: Vec<String>,
    /// Entity types each attribute may attach to. Advisory only: violations
    /// are reported as warnings.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attribute_scope: BTreeMap<String, BTreeSet<String>>,
    /// Whether loaded data may use labels beyond the ones listed here.
    #[serde(default)]
    pub open: bool,
}

#[derive(Deserialize)]
struct RawSchema {
    name: String,
    entity_types: Vec<String>,
    attribute_types: Vec<String>,
    relation_types: Vec<String>,
    #[serde(default)]
    attribute_scope: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    open: bool,
}

impl TryFrom<RawSchema> for SchemaDef {
    type Error = SchemaError;

    fn try_from(raw: RawSchema) -> Result<Self, Self::Error> {
        let schema = SchemaDef {
            name: raw.name,
            entity_types: raw.entity_types,
            attribute_types: raw.attribute_types,
            relation_types: raw.relation_types,
            attribute_scope: raw.attribute_scope,
            open: raw.open,
        };
        schema.check()?;
        Ok(schema)
    }
}

fn labels<const N: usize>(items: [&str; N]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl SchemaDef {
    pub fn new(
        name: impl Into<String>,
        entity_types: Vec<String>,
        attribute_types: Vec<String>,
        relation_types: Vec<String>,
    ) -> Result<Self, SchemaError> {
        let schema = SchemaDef {
            name: name.into(),
            entity_types,
            attribute_types,
            relation_types,
            attribute_scope: BTreeMap::new(),
            open: false,
        };
        schema.check()?;
        Ok(schema)
    }

    pub fn with_scope(mut self, attribute_scope: BTreeMap<String, BTreeSet<String>>) -> Result<Self, SchemaError> {
        self.attribute_scope = attribute_scope;
        self.check()?;
        Ok(self)
    }

    pub fn with_open(mut self, open: bool) -> Self {
        self.open = open;
        self
    }

    fn check(&self) -> Result<(), SchemaError> {
        let sets =
            [("entity", &self.entity_types), ("attribute", &self.attribute_types), ("relation", &self.relation_types)];
        let mut seen = BTreeSet::new();
        for (kind, set) in sets {
            if set.is_empty() {
                return Err(SchemaError::EmptyLabelSet { schema: self.name.clone(), kind });
            }
            let mut local = BTreeSet::new();
            for label in set {
                if !local.insert(label.as_str()) {
                    return Err(SchemaError::DuplicateLabel { schema: self.name.clone(), kind, label: label.clone() });
                }
                if !seen.insert(label.as_str()) {
                    return Err(SchemaError::OverlappingLabel { schema: self.name.clone(), label: label.clone() });
                }
            }
        }
        for (attribute, scope) in &self.attribute_scope {
            if !self.has_attribute_type(attribute) {
                return Err(SchemaError::ScopeUnknownAttribute {
                    schema: self.name.clone(),
                    attribute: attribute.clone(),
                });
            }
            if let Some(bad) = scope.iter().find(|t| !self.has_entity_type(t)) {
                return Err(SchemaError::ScopeUnknownEntity {
                    schema: self.name.clone(),
                    attribute: attribute.clone(),
                    entity_type: bad.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn has_entity_type(&self, label: &str) -> bool {
        self.entity_types.iter().any(|t| t == label)
    }

    pub fn has_attribute_type(&self, label: &str) -> bool {
        self.attribute_types.iter().any(|t| t == label)
    }

    pub fn has_relation_type(&self, label: &str) -> bool {
        self.relation_types.iter().any(|t| t == label)
    }

    pub fn entity_index(&self, label: &str) -> Option<usize> {
        self.entity_types.iter().position(|t| t == label)
    }

    pub fn attribute_index(&self, label: &str) -> Option<usize> {
        self.attribute_types.iter().position(|t| t == label)
    }

    pub fn relation_index(&self, label: &str) -> Option<usize> {
        self.relation_types.iter().position(|t| t == label)
    }

    /// Whether `attribute` may attach to `entity_type`. Unscoped attributes
    /// attach anywhere.
    pub fn attribute_in_scope(&self, attribute: &str, entity_type: &str) -> bool {
        self.attribute_scope.get(attribute).is_none_or(|scope| scope.contains(entity_type))
    }

    /// Hex SHA-256 of the canonical JSON encoding. Checkpoints use it to
    /// refuse loading against a different vocabulary.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Returns one of the builtin schemata by name.
///
/// `scientific-claims` has six entity types, seven attribute types (all
/// scoped to `association`) and seven relation types. `ethnographic` is
/// only partially enumerated and therefore marked open.
pub fn builtin_schema(name: &str) -> Result<SchemaDef, SchemaError> {
    match name {
        SCIENTIFIC_CLAIMS => {
            let attributes =
                labels(["causation", "comparison", "indicates", "increases", "decreases", "correlation", "test"]);
            let scope = attributes.iter().map(|a| (a.clone(), BTreeSet::from(["association".to_string()]))).collect();
            SchemaDef::new(
                SCIENTIFIC_CLAIMS,
                labels(["factor", "association", "magnitude", "evidence", "epistemic", "qualifier"]),
                attributes,
                labels(["arg0", "arg1", "comp_to", "modifier", "q+", "q-", "subtype"]),
            )?
            .with_scope(scope)
        }
        ETHNOGRAPHIC => Ok(SchemaDef::new(
            ETHNOGRAPHIC,
            labels(["entity"]),
            labels(["spirituality", "action/event", "influence"]),
            labels(["agent/poss", "t+", "forPurpose", "hasFunction", "arg0", "arg1", "modifier", "q+", "q-"]),
        )?
        .with_open(true)),
        other => Err(SchemaError::NotFound(other.to_string())),
    }
}

/// A labeled token span `[start, end]` (inclusive).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub entity_type: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, entity_type: impl Into<String>) -> Self {
        EntitySpan { start, end, entity_type: entity_type.into() }
    }

    pub fn bounds(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    pub fn width(&self) -> usize {
        self.end + 1 - self.start
    }
}

impl fmt::Display for EntitySpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{},{}]", self.entity_type, self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttributeLabel {
    pub entity: usize,
    pub attribute_type: String,
}

impl AttributeLabel {
    pub fn new(entity: usize, attribute_type: impl Into<String>) -> Self {
        AttributeLabel { entity, attribute_type: attribute_type.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationEdge {
    pub head: usize,
    pub tail: usize,
    #[serde(rename = "type")]
    pub relation_type: String,
}

impl RelationEdge {
    pub fn new(head: usize, tail: usize, relation_type: impl Into<String>) -> Self {
        RelationEdge { head, tail, relation_type: relation_type.into() }
    }
}

/// Entities, attributes and relations over one tokenized sentence.
///
/// Serializes to the corpus item layout: attributes are grouped per
/// entity as `{"entity": i, "types": [..]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "GraphRecord", into = "GraphRecord")]
pub struct KnowledgeGraph {
    pub tokens: Vec<String>,
    pub entities: Vec<EntitySpan>,
    pub attributes: Vec<AttributeLabel>,
    pub relations: Vec<RelationEdge>,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    tokens: Vec<String>,
    #[serde(default)]
    entities: Vec<EntitySpan>,
    #[serde(default)]
    attributes: Vec<AttributeGroup>,
    #[serde(default)]
    relations: Vec<RelationEdge>,
}

#[derive(Serialize, Deserialize)]
struct AttributeGroup {
    entity: usize,
    types: Vec<String>,
}

impl From<GraphRecord> for KnowledgeGraph {
    fn from(record: GraphRecord) -> Self {
        let attributes = record
            .attributes
            .into_iter()
            .flat_map(|group| {
                let entity = group.entity;
                group.types.into_iter().map(move |t| AttributeLabel::new(entity, t))
            })
            .collect();
        KnowledgeGraph { tokens: record.tokens, entities: record.entities, attributes, relations: record.relations }
    }
}

impl From<KnowledgeGraph> for GraphRecord {
    fn from(graph: KnowledgeGraph) -> Self {
        // Consecutive runs only, so that attribute order survives a round trip.
        let mut groups: Vec<AttributeGroup> = Vec::new();
        for label in graph.attributes {
            match groups.last_mut() {
                Some(group) if group.entity == label.entity => group.types.push(label.attribute_type),
                _ => groups.push(AttributeGroup { entity: label.entity, types: vec![label.attribute_type] }),
            }
        }
        GraphRecord { tokens: graph.tokens, entities: graph.entities, attributes: groups, relations: graph.relations }
    }
}

impl KnowledgeGraph {
    pub fn new(tokens: Vec<String>) -> Self {
        KnowledgeGraph { tokens, ..Default::default() }
    }

    pub fn from_words(words: &[&str]) -> Self {
        Self::new(words.iter().map(|w| w.to_string()).collect())
    }

    /// Appends an entity and returns its index.
    pub fn add_entity(&mut self, start: usize, end: usize, entity_type: impl Into<String>) -> usize {
        self.entities.push(EntitySpan::new(start, end, entity_type));
        self.entities.len() - 1
    }

    pub fn add_attribute(&mut self, entity: usize, attribute_type: impl Into<String>) {
        self.attributes.push(AttributeLabel::new(entity, attribute_type));
    }

    pub fn add_relation(&mut self, head: usize, tail: usize, relation_type: impl Into<String>) {
        self.relations.push(RelationEdge::new(head, tail, relation_type));
    }

    /// Surface text of an entity, tokens joined by single spaces.
    pub fn entity_text(&self, entity: usize) -> String {
        let span = &self.entities[entity];
        self.tokens[span.start..=span.end].join(" ")
    }

    /// Attribute labels carried by `entity`, in insertion order.
    pub fn attributes_of(&self, entity: usize) -> impl Iterator<Item = &str> + '_ {
        self.attributes.iter().filter(move |a| a.entity == entity).map(|a| a.attribute_type.as_str())
    }

    pub fn find_entity(&self, start: usize, end: usize) -> Option<usize> {
        self.entities.iter().position(|e| e.start == start && e.end == end)
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.attributes.is_empty() && self.relations.is_empty()
    }

    /// The same graph with entities sorted by `(start, end, type)` and
    /// attributes and relations sorted after reindexing. Two graphs that
    /// differ only in element order have equal canonical forms.
    pub fn canonical(&self) -> KnowledgeGraph {
        let mut order: Vec<usize> = (0..self.entities.len()).collect();
        order.sort_by(|&a, &b| self.entities[a].cmp(&self.entities[b]).then(a.cmp(&b)));
        let mut new_index = vec![0; self.entities.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let remap = |i: usize| new_index.get(i).copied().unwrap_or(i);
        let mut attributes: Vec<AttributeLabel> =
            self.attributes.iter().map(|a| AttributeLabel::new(remap(a.entity), a.attribute_type.clone())).collect();
        attributes.sort();
        let mut relations: Vec<RelationEdge> = self
            .relations
            .iter()
            .map(|r| RelationEdge::new(remap(r.head), remap(r.tail), r.relation_type.clone()))
            .collect();
        relations.sort();
        KnowledgeGraph {
            tokens: self.tokens.clone(),
            entities: order.iter().map(|&i| self.entities[i].clone()).collect(),
            attributes,
            relations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    SpanOutOfRange,
    DuplicateSpan,
    UnknownEntityType,
    UnknownAttributeType,
    UnknownRelationType,
    DanglingAttribute,
    DanglingRelation,
    SelfCycle,
    DuplicateAttribute,
    DuplicateRelation,
    AttributeOutOfScope,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub severity: Severity,
    pub kind: ViolationKind,
    /// Names the offending element by content (span and label), never by
    /// position, so reports do not depend on element order.
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let severity = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{severity}: {:?}: {}", self.kind, self.detail)
    }
}

/// Sorted list of violations; empty iff the graph is fully valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    /// True when no error-severity violation is present (warnings allowed).
    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Warning)
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks the structural invariants only (spans, references, duplicates,
/// self-cycles), without a label vocabulary.
pub fn validate_structure(graph: &KnowledgeGraph) -> ValidationReport {
    let mut out = Vec::new();
    structural_checks(graph, &mut out);
    out.sort();
    ValidationReport { violations: out }
}

/// Checks every graph invariant against `schema`.
///
/// Unknown labels are errors for a closed schema and warnings for an open
/// one; attribute scope violations are always warnings.
pub fn validate_graph(graph: &KnowledgeGraph, schema: &SchemaDef) -> ValidationReport {
    let mut out = Vec::new();
    structural_checks(graph, &mut out);

    let label_severity = if schema.open { Severity::Warning } else { Severity::Error };
    for entity in &graph.entities {
        if !schema.has_entity_type(&entity.entity_type) {
            out.push(Violation {
                severity: label_severity,
                kind: ViolationKind::UnknownEntityType,
                detail: format!("entity {entity} has type not in schema `{}`", schema.name),
            });
        }
    }
    for attribute in &graph.attributes {
        let owner = graph.entities.get(attribute.entity);
        if !schema.has_attribute_type(&attribute.attribute_type) {
            out.push(Violation {
                severity: label_severity,
                kind: ViolationKind::UnknownAttributeType,
                detail: format!(
                    "attribute `{}` on {} not in schema `{}`",
                    attribute.attribute_type,
                    describe(owner),
                    schema.name
                ),
            });
        } else if let Some(owner) = owner {
            if !schema.attribute_in_scope(&attribute.attribute_type, &owner.entity_type) {
                out.push(Violation {
                    severity: Severity::Warning,
                    kind: ViolationKind::AttributeOutOfScope,
                    detail: format!("attribute `{}` is not scoped to entity type of {owner}", attribute.attribute_type),
                });
            }
        }
    }
    for relation in &graph.relations {
        if !schema.has_relation_type(&relation.relation_type) {
            out.push(Violation {
                severity: label_severity,
                kind: ViolationKind::UnknownRelationType,
                detail: format!(
                    "relation `{}` from {} to {} not in schema `{}`",
                    relation.relation_type,
                    describe(graph.entities.get(relation.head)),
                    describe(graph.entities.get(relation.tail)),
                    schema.name
                ),
            });
        }
    }

    out.sort();
    ValidationReport { violations: out }
}

fn describe(entity: Option<&EntitySpan>) -> String {
    entity.map_or_else(|| "<missing entity>".to_string(), |e| e.to_string())
}

fn structural_checks(graph: &KnowledgeGraph, out: &mut Vec<Violation>) {
    let n = graph.tokens.len();
    let error = |kind, detail| Violation { severity: Severity::Error, kind, detail };

    let mut by_span: BTreeMap<(usize, usize), Vec<&str>> = BTreeMap::new();
    for entity in &graph.entities {
        if entity.start > entity.end || entity.end >= n {
            out.push(error(ViolationKind::SpanOutOfRange, format!("entity {entity} outside sentence of {n} tokens")));
        }
        by_span.entry(entity.bounds()).or_default().push(&entity.entity_type);
    }
    for ((start, end), mut types) in by_span {
        if types.len() > 1 {
            types.sort_unstable();
            out.push(error(
                ViolationKind::DuplicateSpan,
                format!("span [{start},{end}] carries {} entities: {}", types.len(), types.join(", ")),
            ));
        }
    }

    let mut attribute_counts: BTreeMap<(&EntitySpan, &str), usize> = BTreeMap::new();
    for attribute in &graph.attributes {
        match graph.entities.get(attribute.entity) {
            None => out.push(error(
                ViolationKind::DanglingAttribute,
                format!(
                    "attribute `{}` references entity {} but graph has {}",
                    attribute.attribute_type,
                    attribute.entity,
                    graph.entities.len()
                ),
            )),
            Some(owner) => *attribute_counts.entry((owner, &attribute.attribute_type)).or_default() += 1,
        }
    }
    for ((owner, attribute), count) in attribute_counts {
        if count > 1 {
            out.push(error(
                ViolationKind::DuplicateAttribute,
                format!("attribute `{attribute}` appears {count} times on {owner}"),
            ));
        }
    }

    let mut relation_counts: BTreeMap<(&EntitySpan, &EntitySpan, &str), usize> = BTreeMap::new();
    for relation in &graph.relations {
        let head = graph.entities.get(relation.head);
        let tail = graph.entities.get(relation.tail);
        let (Some(head), Some(tail)) = (head, tail) else {
            out.push(error(
                ViolationKind::DanglingRelation,
                format!(
                    "relation `{}` references entities {} -> {} but graph has {}",
                    relation.relation_type,
                    relation.head,
                    relation.tail,
                    graph.entities.len()
                ),
            ));
            continue;
        };
        if relation.head == relation.tail {
            out.push(error(ViolationKind::SelfCycle, format!("relation `{}` loops on {head}", relation.relation_type)));
        }
        *relation_counts.entry((head, tail, &relation.relation_type)).or_default() += 1;
    }
    for ((head, tail, relation), count) in relation_counts {
        if count > 1 {
            out.push(error(
                ViolationKind::DuplicateRelation,
                format!("relation `{relation}` from {head} to {tail} appears {count} times"),
            ));
        }
    }
}
