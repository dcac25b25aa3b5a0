//! Annotated corpora: file format, splits, span enumeration and negative
//! sampling.
//!
//! A corpus file is a JSON list of sentence records:
//!
//! ```json
//! [{"tokens": ["Movement", "restriction", "greatly", "reduced", "..."],
//!   "entities": [{"start": 0, "end": 1, "type": "factor"}],
//!   "attributes": [{"entity": 0, "types": ["causation"]}],
//!   "relations": [{"head": 3, "tail": 0, "type": "arg0"}]}]
//! ```
//!
//! `end` is inclusive and `entity`/`head`/`tail` index the `entities` list.
//! The loader also accepts the versioned envelope
//! `{"format_version": 1, "sentences": [...]}`.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{
    validate_graph, validate_structure, EntitySpan, KnowledgeGraph, RelationEdge, SchemaDef, ValidationReport,
};

pub const FORMAT_VERSION: u64 = 1;
pub const DEFAULT_MAX_SPAN_LEN: usize = 10;
pub const DEFAULT_ENTITY_NEGATIVES: usize = 100;
pub const DEFAULT_RELATION_NEGATIVES: usize = 100;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed corpus JSON at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("sentence {index} is invalid:\n{report}")]
    Validation { index: usize, report: ValidationReport },
    #[error("sentence {index} has no tokens")]
    EmptySentence { index: usize },
    #[error("unsupported corpus format_version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u64),
    #[error("cannot split a corpus of {0} sentences")]
    DegenerateSplit(usize),
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for CorpusError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            return CorpusError::Io(e.into());
        }
        CorpusError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

/// One sentence with its gold graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnnotatedSentence {
    pub gold: KnowledgeGraph,
}

impl AnnotatedSentence {
    pub fn new(gold: KnowledgeGraph) -> Self {
        AnnotatedSentence { gold }
    }

    pub fn tokens(&self) -> &[String] {
        &self.gold.tokens
    }

    pub fn len(&self) -> usize {
        self.gold.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.tokens.is_empty()
    }
}

impl From<KnowledgeGraph> for AnnotatedSentence {
    fn from(gold: KnowledgeGraph) -> Self {
        AnnotatedSentence { gold }
    }
}

#[derive(Deserialize)]
struct Envelope {
    format_version: u64,
    sentences: Vec<AnnotatedSentence>,
}

/// Reads a corpus and validates every sentence.
///
/// Without a schema only the structural invariants are checked. With one,
/// label errors are fatal too; warnings (attribute scope, labels outside an
/// open schema) are accepted.
pub fn load_corpus<R: Read>(mut source: R, schema: Option<&SchemaDef>) -> Result<Vec<AnnotatedSentence>, CorpusError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let sentences = if text.trim_start().starts_with('{') {
        let envelope: Envelope = serde_json::from_str(&text)?;
        if envelope.format_version != FORMAT_VERSION {
            return Err(CorpusError::UnsupportedVersion(envelope.format_version));
        }
        envelope.sentences
    } else {
        serde_json::from_str::<Vec<AnnotatedSentence>>(&text)?
    };
    for (index, sentence) in sentences.iter().enumerate() {
        if sentence.is_empty() {
            return Err(CorpusError::EmptySentence { index });
        }
        let report = match schema {
            Some(schema) => validate_graph(&sentence.gold, schema),
            None => validate_structure(&sentence.gold),
        };
        if !report.is_valid() {
            return Err(CorpusError::Validation { index, report });
        }
    }
    Ok(sentences)
}

pub fn load_corpus_file(
    path: &std::path::Path,
    schema: Option<&SchemaDef>,
) -> Result<Vec<AnnotatedSentence>, CorpusError> {
    load_corpus(std::fs::File::open(path)?, schema)
}

/// Writes the bare-list layout, pretty-printed, with a trailing newline.
pub fn write_corpus<W: Write>(mut sink: W, sentences: &[AnnotatedSentence]) -> Result<(), CorpusError> {
    serde_json::to_writer_pretty(&mut sink, sentences)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Splits whitespace-delimited text into word tokens, detaching leading and
/// trailing punctuation (`"complications,"` becomes `complications` `,`).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let lead = chars.iter().take_while(|c| c.is_ascii_punctuation()).count();
        if lead == chars.len() {
            out.extend(chars.iter().map(|c| c.to_string()));
            continue;
        }
        let trail = chars.iter().rev().take_while(|c| c.is_ascii_punctuation()).count();
        out.extend(chars[..lead].iter().map(|c| c.to_string()));
        out.push(chars[lead..chars.len() - trail].iter().collect());
        out.extend(chars[chars.len() - trail..].iter().map(|c| c.to_string()));
    }
    out
}

/// Random disjoint train/test partition.
///
/// The train side receives `round(n * (1 - test_fraction))` items and both
/// sides are kept non-empty; each side preserves corpus order.
pub fn split_corpus<T: Clone>(corpus: &[T], test_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>), CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(test_fraction));
    }
    let n = corpus.len();
    if n < 2 {
        return Err(CorpusError::DegenerateSplit(n));
    }
    let train_len = ((n as f64) * (1.0 - test_fraction)).round() as usize;
    let train_len = train_len.clamp(1, n - 1);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train_idx, test_idx) = order.split_at_mut(train_len);
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((train_idx.iter().map(|&i| corpus[i].clone()).collect(), test_idx.iter().map(|&i| corpus[i].clone()).collect()))
}

/// All spans of 1..=min(max_len, n) tokens, ordered by start, then length.
pub fn enumerate_spans(n: usize, max_len: usize) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    for start in 0..n {
        for len in 1..=max_len.min(n - start) {
            spans.push((start, start + len - 1));
        }
    }
    spans
}

/// Negative training material for one sentence.
///
/// Attribute negatives are implicit: every gold entity gets a full 0/1
/// target vector.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NegativeSamples {
    pub entity_negatives: Vec<(usize, usize)>,
    pub relation_negatives: Vec<(usize, usize)>,
}

/// Up to `count` non-entity spans, drawn uniformly without replacement.
/// Returned in enumeration order.
pub fn sample_negative_entities(
    sentence: &KnowledgeGraph,
    count: usize,
    max_len: usize,
    seed: u64,
) -> Vec<(usize, usize)> {
    let gold: BTreeSet<(usize, usize)> = sentence.entities.iter().map(EntitySpan::bounds).collect();
    let pool: Vec<(usize, usize)> =
        enumerate_spans(sentence.tokens.len(), max_len).into_iter().filter(|span| !gold.contains(span)).collect();
    draw(&pool, count, seed)
}

/// Up to `count` ordered pairs of distinct gold entities that carry no gold
/// relation of any type, drawn uniformly without replacement.
pub fn sample_negative_relations(
    gold_entities: &[EntitySpan],
    gold_relations: &[RelationEdge],
    count: usize,
    seed: u64,
) -> Vec<(usize, usize)> {
    let related: BTreeSet<(usize, usize)> = gold_relations.iter().map(|r| (r.head, r.tail)).collect();
    let k = gold_entities.len();
    let pool: Vec<(usize, usize)> = (0..k)
        .flat_map(|h| (0..k).map(move |t| (h, t)))
        .filter(|&(h, t)| h != t && !related.contains(&(h, t)))
        .collect();
    draw(&pool, count, seed)
}

pub fn sample_negatives(
    sentence: &KnowledgeGraph,
    entity_count: usize,
    relation_count: usize,
    max_len: usize,
    seed: u64,
) -> NegativeSamples {
    NegativeSamples {
        entity_negatives: sample_negative_entities(sentence, entity_count, max_len, seed),
        relation_negatives: sample_negative_relations(
            &sentence.entities,
            &sentence.relations,
            relation_count,
            derive_seed(seed, 1, 0),
        ),
    }
}

fn draw<T: Copy>(pool: &[T], count: usize, seed: u64) -> Vec<T> {
    let amount = count.min(pool.len());
    let mut picked = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), pool.len(), amount).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pool[i]).collect()
}

/// Mixes a base seed with two stream coordinates (splitmix64 finalizer).
pub(crate) fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z =
        seed.wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
