//! Precision, recall and F1 under entity-constrained exact matching.
//!
//! An entity counts only if its boundaries and type both match a gold
//! entity. A relation counts only if its type matches and both endpoints
//! match gold entities exactly (boundaries and type); an attribute counts
//! only if its entity matches exactly. Micro averages pool the counts of
//! all labels in a section.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{EntitySpan, KnowledgeGraph, SchemaDef};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("gold corpus has {gold} sentences but predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("sentence {0}: gold and predicted token sequences differ")]
    TokenMismatch(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ClassCounts {
    /// Gold occurrences.
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_score(self.precision(), self.recall())
    }
}

impl std::ops::AddAssign for ClassCounts {
    fn add_assign(&mut self, other: ClassCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean `2PR / (P + R)`, or 0 when `P + R = 0`.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub type LabelCounts = BTreeMap<String, ClassCounts>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// P, R and F1 over pooled counts.
pub fn micro_average<'a, I>(counts: I) -> Prf
where
    I: IntoIterator<Item = &'a ClassCounts>,
{
    let mut pooled = ClassCounts::default();
    for c in counts {
        pooled += *c;
    }
    Prf { precision: pooled.precision(), recall: pooled.recall(), f1: pooled.f1() }
}

type EntityKey<'a> = (usize, usize, &'a str);

fn entity_key(e: &EntitySpan) -> EntityKey<'_> {
    (e.start, e.end, e.entity_type.as_str())
}

fn tally<K: Ord>(gold: &BTreeSet<(K, &str)>, pred: &BTreeSet<(K, &str)>) -> LabelCounts {
    let mut counts = LabelCounts::new();
    for item in pred {
        let slot = counts.entry(item.1.to_string()).or_default();
        if gold.contains(item) {
            slot.tp += 1;
        } else {
            slot.fp += 1;
        }
    }
    for item in gold.difference(pred) {
        counts.entry(item.1.to_string()).or_default().fn_ += 1;
    }
    counts
}

fn entity_set(g: &KnowledgeGraph) -> BTreeSet<((usize, usize), &str)> {
    g.entities.iter().map(|e| ((e.start, e.end), e.entity_type.as_str())).collect()
}

fn relation_set(g: &KnowledgeGraph) -> BTreeSet<((EntityKey<'_>, EntityKey<'_>), &str)> {
    g.relations
        .iter()
        .filter_map(|r| {
            let head = g.entities.get(r.head)?;
            let tail = g.entities.get(r.tail)?;
            Some(((entity_key(head), entity_key(tail)), r.relation_type.as_str()))
        })
        .collect()
}

fn attribute_set(g: &KnowledgeGraph) -> BTreeSet<(EntityKey<'_>, &str)> {
    g.attributes
        .iter()
        .filter_map(|a| Some((entity_key(g.entities.get(a.entity)?), a.attribute_type.as_str())))
        .collect()
}

pub fn match_entities(gold: &KnowledgeGraph, pred: &KnowledgeGraph) -> LabelCounts {
    tally(&entity_set(gold), &entity_set(pred))
}

pub fn match_relations(gold: &KnowledgeGraph, pred: &KnowledgeGraph) -> LabelCounts {
    tally(&relation_set(gold), &relation_set(pred))
}

pub fn match_attributes(gold: &KnowledgeGraph, pred: &KnowledgeGraph) -> LabelCounts {
    tally(&attribute_set(gold), &attribute_set(pred))
}

/// One row of a report. Scores are percentages rounded to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub counts: ClassCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionReport {
    pub rows: Vec<LabelScore>,
    pub micro: Prf,
    pub counts: ClassCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub entities: SectionReport,
    pub attributes: SectionReport,
    pub relations: SectionReport,
}

fn percent(x: f64) -> f64 {
    (x * 10_000.0).round() / 100.0
}

fn section(counts: &LabelCounts, order: &[String]) -> SectionReport {
    let mut labels: Vec<&str> = order.iter().map(String::as_str).collect();
    labels.extend(counts.keys().map(String::as_str).filter(|l| !order.iter().any(|o| o == l)));
    let rows = labels
        .into_iter()
        .map(|label| {
            let c = counts.get(label).copied().unwrap_or_default();
            LabelScore {
                label: label.to_string(),
                precision: percent(c.precision()),
                recall: percent(c.recall()),
                f1: percent(c.f1()),
                support: c.support(),
                counts: c,
            }
        })
        .collect();
    let micro = micro_average(counts.values());
    let mut pooled = ClassCounts::default();
    counts.values().for_each(|c| pooled += *c);
    SectionReport {
        rows,
        micro: Prf { precision: percent(micro.precision), recall: percent(micro.recall), f1: percent(micro.f1) },
        counts: pooled,
    }
}

fn merge(into: &mut LabelCounts, from: LabelCounts) {
    for (label, c) in from {
        *into.entry(label).or_default() += c;
    }
}

/// Pooled per-label counts for a whole corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusCounts {
    pub entities: LabelCounts,
    pub attributes: LabelCounts,
    pub relations: LabelCounts,
}

pub fn count_corpus(gold: &[KnowledgeGraph], pred: &[KnowledgeGraph]) -> Result<CorpusCounts, ScoreError> {
    if gold.len() != pred.len() {
        return Err(ScoreError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    let mut out = CorpusCounts::default();
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.tokens != p.tokens {
            return Err(ScoreError::TokenMismatch(i));
        }
        merge(&mut out.entities, match_entities(g, p));
        merge(&mut out.attributes, match_attributes(g, p));
        merge(&mut out.relations, match_relations(g, p));
    }
    Ok(out)
}

/// Scores aligned gold and predicted corpora.
///
/// With a schema, rows follow its label order and include labels that never
/// occur; labels outside the schema are appended alphabetically.
pub fn evaluate(
    gold: &[KnowledgeGraph],
    pred: &[KnowledgeGraph],
    schema: Option<&SchemaDef>,
) -> Result<EvalReport, ScoreError> {
    let counts = count_corpus(gold, pred)?;
    let empty = Vec::new();
    let order = |f: fn(&SchemaDef) -> &Vec<String>| schema.map_or(&empty, f);
    Ok(EvalReport {
        entities: section(&counts.entities, order(|s| &s.entity_types)),
        attributes: section(&counts.attributes, order(|s| &s.attribute_types)),
        relations: section(&counts.relations, order(|s| &s.relation_types)),
    })
}

impl EvalReport {
    /// Plain-text table: per-label rows, then the section micro-average.
    pub fn to_table(&self) -> String {
        let sections = [("Entities", &self.entities), ("Attributes", &self.attributes), ("Relations", &self.relations)];
        let width = sections
            .iter()
            .flat_map(|(_, s)| s.rows.iter().map(|r| r.label.len()))
            .chain(["Micro-Averaged".len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let rule = "-".repeat(12 + width + 4 * 10);
        let _ = writeln!(out, "{:<12}{:<width$}{:>10}{:>10}{:>10}{:>10}", "", "Dimension", "P", "R", "F1", "Support");
        for (name, s) in sections {
            out.push_str(&rule);
            out.push('\n');
            for (i, row) in s.rows.iter().enumerate() {
                let lead = if i == 0 { name } else { "" };
                let _ = writeln!(
                    out,
                    "{lead:<12}{:<width$}{:>10.2}{:>10.2}{:>10.2}{:>10}",
                    row.label, row.precision, row.recall, row.f1, row.support
                );
            }
            let lead = if s.rows.is_empty() { name } else { "" };
            let _ = writeln!(
                out,
                "{lead:<12}{:<width$}{:>10.2}{:>10.2}{:>10.2}{:>10}",
                "Micro-Averaged", s.micro.precision, s.micro.recall, s.micro.f1, ""
            );
        }
        out.push_str(&rule);
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{builtin_schema, SCIENTIFIC_CLAIMS};

    fn movement_restriction() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::from_words(&[
            "Movement",
            "restriction",
            "greatly",
            "reduced",
            "the",
            "number",
            "of",
            "infections",
        ]);
        let cause = g.add_entity(0, 1, "factor");
        let magnitude = g.add_entity(2, 2, "magnitude");
        let assoc = g.add_entity(3, 3, "association");
        let effect = g.add_entity(4, 7, "factor");
        g.add_attribute(assoc, "causation");
        g.add_attribute(assoc, "decreases");
        g.add_relation(assoc, cause, "arg0");
        g.add_relation(assoc, effect, "arg1");
        g.add_relation(assoc, magnitude, "modifier");
        g.add_relation(cause, effect, "q-");
        g
    }

    fn total(c: &LabelCounts) -> ClassCounts {
        let mut t = ClassCounts::default();
        c.values().for_each(|x| t += *x);
        t
    }

    #[test]
    fn identical_graphs_are_perfect() {
        let g = movement_restriction();
        let e = total(&match_entities(&g, &g));
        assert_eq!(e, ClassCounts { tp: 4, fp: 0, fn_: 0 });
        assert_eq!(total(&match_relations(&g, &g)), ClassCounts { tp: 4, fp: 0, fn_: 0 });
        assert_eq!(total(&match_attributes(&g, &g)), ClassCounts { tp: 2, fp: 0, fn_: 0 });
    }

    #[test]
    fn boundary_error_is_fp_and_fn() {
        let gold = movement_restriction();
        let mut pred = gold.clone();
        pred.entities[3].start = 5;
        let c = match_entities(&gold, &pred);
        assert_eq!(c["factor"], ClassCounts { tp: 1, fp: 1, fn_: 1 });
        assert_eq!(c["magnitude"].tp, 1);
    }

    #[test]
    fn mistyped_endpoint_voids_relation() {
        let gold = movement_restriction();
        let mut pred = gold.clone();
        pred.entities[0].entity_type = "qualifier".into();
        let r = match_relations(&gold, &pred);
        assert_eq!(r["arg0"], ClassCounts { tp: 0, fp: 1, fn_: 1 });
        assert_eq!(r["q-"], ClassCounts { tp: 0, fp: 1, fn_: 1 });
        assert_eq!(r["arg1"].tp, 1);
    }

    #[test]
    fn mistyped_owner_voids_attribute() {
        let gold = movement_restriction();
        let mut pred = gold.clone();
        pred.entities[2].entity_type = "factor".into();
        let a = match_attributes(&gold, &pred);
        assert_eq!(a["causation"], ClassCounts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn micro_average_values() {
        let perfect = [ClassCounts { tp: 3, fp: 0, fn_: 0 }, ClassCounts { tp: 1, fp: 0, fn_: 0 }];
        assert_eq!(micro_average(&perfect), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(micro_average(&[]), Prf { precision: 0.0, recall: 0.0, f1: 0.0 });
        let mixed = [ClassCounts { tp: 1, fp: 1, fn_: 0 }, ClassCounts { tp: 1, fp: 0, fn_: 3 }];
        let m = micro_average(&mixed);
        assert_eq!((m.precision, m.recall), (2.0 / 3.0, 2.0 / 5.0));
        assert!((m.f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn f1_from_reported_precision_recall() {
        assert!((100.0 * f1_score(0.9013, 0.8671) - 88.39).abs() < 0.01);
        assert!((100.0 * f1_score(0.9333, 1.0) - 96.55).abs() < 0.01);
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn evaluate_perfect_and_empty() {
        let schema = builtin_schema(SCIENTIFIC_CLAIMS).unwrap();
        let gold = vec![movement_restriction(), movement_restriction()];
        let report = evaluate(&gold, &gold, Some(&schema)).unwrap();
        for s in [&report.entities, &report.attributes, &report.relations] {
            assert_eq!((s.micro.precision, s.micro.recall, s.micro.f1), (100.0, 100.0, 100.0));
        }
        assert_eq!(report.entities.rows.len(), 6);
        let factor = &report.entities.rows[0];
        assert_eq!((factor.label.as_str(), factor.support, factor.f1), ("factor", 4, 100.0));

        let empty: Vec<_> = gold.iter().map(|g| KnowledgeGraph::new(g.tokens.clone())).collect();
        let report = evaluate(&gold, &empty, Some(&schema)).unwrap();
        for row in &report.entities.rows {
            assert_eq!((row.precision, row.recall), (0.0, 0.0));
        }
        assert_eq!(report.relations.micro.recall, 0.0);
    }

    #[test]
    fn alignment_errors() {
        let g = vec![movement_restriction()];
        assert_eq!(evaluate(&g, &[], None), Err(ScoreError::LengthMismatch { gold: 1, pred: 0 }));
        let other = vec![KnowledgeGraph::from_words(&["x"])];
        assert_eq!(evaluate(&g, &other, None), Err(ScoreError::TokenMismatch(0)));
    }

    #[test]
    fn unknown_labels_appended() {
        let schema = builtin_schema(SCIENTIFIC_CLAIMS).unwrap();
        let mut gold = movement_restriction();
        gold.entities[1].entity_type = "hedge".into();
        let report = evaluate(&[gold.clone()], &[gold], Some(&schema)).unwrap();
        assert_eq!(report.entities.rows.last().unwrap().label, "hedge");
        let bare = evaluate(&[movement_restriction()], &[movement_restriction()], None).unwrap();
        let labels: Vec<_> = bare.entities.rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["association", "factor", "magnitude"]);
    }

    #[test]
    fn table_layout() {
        let schema = builtin_schema(SCIENTIFIC_CLAIMS).unwrap();
        let report = evaluate(&[movement_restriction()], &[movement_restriction()], Some(&schema)).unwrap();
        let table = report.to_table();
        assert!(table.contains("Micro-Averaged"));
        assert!(table.lines().any(|l| l.starts_with("Entities") && l.contains("factor") && l.contains("100.00")));
        assert!(table.lines().any(|l| l.starts_with("Relations") && l.contains("arg0")));
        assert_eq!(table.lines().filter(|l| l.contains("Micro-Averaged")).count(), 3);
    }
}
