//! The joint span model: entity, attribute and relation heads over span
//! representations, trained jointly on gold graphs.
//!
//! Inference runs a fixed pipeline per sentence:
//!
//! 1. enumerate every span up to `max_span_len` tokens;
//! 2. classify each span into one entity type or "none" (softmax);
//! 3. drop spans whose argmax is "none";
//! 4. score attributes on the surviving spans (independent sigmoids);
//! 5. score relations on every ordered pair of survivors (independent
//!    sigmoids) and keep labels at or above the threshold.
//!
//! Relation pairs use `pooled_head ⊕ pooled_tail ⊕ between ⊕ w_head ⊕ w_tail`,
//! where `between` is the maxpool of the tokens separating the two spans
//! (zero when there are none) and takes the place of the sequence vector.

mod checkpoint;
mod params;
pub mod train;

use std::fmt;
use std::sync::Arc;

use ndarray::{s, Array1, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{enumerate_spans, DEFAULT_ENTITY_NEGATIVES, DEFAULT_MAX_SPAN_LEN, DEFAULT_RELATION_NEGATIVES};
use crate::encoder::{
    between_context, check_span, maxpool_rows, span_representation, Encoder, EncoderError, EncoderSpec,
    SpanRepresentation, TokenEmbeddings, WidthEmbeddingTable,
};
use crate::schema::{KnowledgeGraph, SchemaDef};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use params::{Adam, HeadParams, Linear};
pub use train::{train, TrainingLog};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("training sentence {index}: {message}")]
    InvalidSentence { index: usize, message: String },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

/// Model, training and decoding settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub schema: SchemaDef,
    pub encoder: EncoderSpec,
    pub max_span_len: usize,
    pub width_dim: usize,
    pub relation_threshold: f64,
    pub attribute_threshold: f64,
    pub epochs: usize,
    pub seed: u64,
    pub entity_negatives: usize,
    pub relation_negatives: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Standard deviation of the normal initialisation of all parameters.
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            schema: crate::schema::builtin_schema(crate::schema::SCIENTIFIC_CLAIMS).expect("builtin"),
            encoder: EncoderSpec::default(),
            max_span_len: DEFAULT_MAX_SPAN_LEN,
            width_dim: 25,
            relation_threshold: 0.4,
            attribute_threshold: 0.5,
            epochs: 20,
            seed: 0,
            entity_negatives: DEFAULT_ENTITY_NEGATIVES,
            relation_negatives: DEFAULT_RELATION_NEGATIVES,
            learning_rate: 5e-2,
            batch_size: 2,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    pub fn new(schema: SchemaDef) -> Self {
        ModelConfig { schema, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let open_unit = |p: f64| p > 0.0 && p < 1.0;
        let problem = if !open_unit(self.relation_threshold) {
            Some(format!("relation_threshold {} not in (0, 1)", self.relation_threshold))
        } else if !open_unit(self.attribute_threshold) {
            Some(format!("attribute_threshold {} not in (0, 1)", self.attribute_threshold))
        } else if self.epochs == 0 {
            Some("epochs must be at least 1".into())
        } else if self.max_span_len == 0 {
            Some("max_span_len must be at least 1".into())
        } else if self.width_dim == 0 {
            Some("width_dim must be at least 1".into())
        } else if self.batch_size == 0 {
            Some("batch_size must be at least 1".into())
        } else if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            Some("learning_rate must be positive".into())
        } else if self.init_std.is_nan() || self.init_std < 0.0 {
            Some("init_std must be non-negative".into())
        } else {
            None
        };
        problem.map_or(Ok(()), |p| Err(ModelError::Config(p)))
    }

    fn span_dim(&self, d: usize) -> usize {
        2 * d + self.width_dim
    }

    fn pair_dim(&self, d: usize) -> usize {
        3 * d + 2 * self.width_dim
    }
}

/// Representation of an ordered entity pair for the relation head.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRepresentation {
    pub head: (usize, usize),
    pub tail: (usize, usize),
    pub vector: Array1<f64>,
}

/// Entity-type distribution for one span; index 0 is "none".
#[derive(Debug, Clone, PartialEq)]
pub struct EntityDistribution {
    pub span: (usize, usize),
    pub probabilities: Array1<f64>,
}

impl EntityDistribution {
    /// Index of the most probable class; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(self.probabilities.view())
    }
}

pub(crate) fn argmax(v: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate() {
        if p > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax(z: &Array1<f64>) -> Array1<f64> {
    let max = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = z.mapv(|v| (v - max).exp());
    let total = e.sum();
    e / total
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Trained (or freshly initialised) joint model together with its encoder.
#[derive(Clone)]
pub struct JointModel {
    pub config: ModelConfig,
    pub params: HeadParams,
    encoder: Arc<dyn Encoder>,
}

impl fmt::Debug for JointModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JointModel")
            .field("config", &self.config)
            .field("encoder_dim", &self.encoder.dim())
            .field("parameters", &self.params.len())
            .finish()
    }
}

impl JointModel {
    /// Builds the encoder from `config.encoder` and initialises parameters.
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let encoder = config.encoder.build()?;
        Self::with_encoder(config, encoder)
    }

    /// Initialises parameters from `N(0, init_std)` (biases zero) using
    /// `config.seed`.
    pub fn with_encoder(config: ModelConfig, encoder: Arc<dyn Encoder>) -> Result<Self, ModelError> {
        config.validate()?;
        let d = encoder.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let std = config.init_std;
        let widths = WidthEmbeddingTable::random(config.max_span_len, config.width_dim, std, &mut rng).rows;
        let params = HeadParams {
            widths,
            entity: Linear::random(config.schema.entity_types.len() + 1, config.span_dim(d), std, &mut rng),
            attribute: Linear::random(config.schema.attribute_types.len(), config.span_dim(d), std, &mut rng),
            relation: Linear::random(config.schema.relation_types.len(), config.pair_dim(d), std, &mut rng),
        };
        Ok(JointModel { config, params, encoder })
    }

    /// Assembles a model from explicit parameters, checking every shape.
    pub fn from_parts(config: ModelConfig, params: HeadParams, encoder: Arc<dyn Encoder>) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = JointModel::with_encoder(ModelConfig { init_std: 0.0, ..config.clone() }, encoder.clone())?;
        if !params.same_shape(&expected.params) {
            return Err(ModelError::Config(format!(
                "parameter shapes do not match encoder dimension {} and schema `{}`",
                encoder.dim(),
                config.schema.name
            )));
        }
        Ok(JointModel { config, params, encoder })
    }

    pub fn encoder(&self) -> &Arc<dyn Encoder> {
        &self.encoder
    }

    pub fn schema(&self) -> &SchemaDef {
        &self.config.schema
    }

    pub fn widths(&self) -> WidthEmbeddingTable {
        WidthEmbeddingTable { rows: self.params.widths.clone() }
    }

    pub fn span_representation(
        &self,
        emb: &TokenEmbeddings,
        span: (usize, usize),
    ) -> Result<SpanRepresentation, EncoderError> {
        let table = WidthEmbeddingTable { rows: self.params.widths.clone() };
        span_representation(emb, span, &table)
    }

    pub(crate) fn width_row(&self, width: usize) -> Result<ArrayView1<'_, f64>, EncoderError> {
        if width == 0 || width > self.params.widths.nrows() {
            return Err(EncoderError::SpanTooWide { width, max: self.params.widths.nrows() });
        }
        Ok(self.params.widths.row(width - 1))
    }

    /// Representations of many spans without cloning the width table each time.
    pub fn span_representations(
        &self,
        emb: &TokenEmbeddings,
        spans: &[(usize, usize)],
    ) -> Result<Vec<SpanRepresentation>, EncoderError> {
        let d = emb.dim();
        spans
            .iter()
            .map(|&(start, end)| {
                check_span(emb, start, end)?;
                let width = self.width_row(end + 1 - start)?;
                let mut vector = Array1::zeros(2 * d + width.len());
                vector.slice_mut(s![..d]).assign(&maxpool_rows(emb.vectors.view(), start, end));
                vector.slice_mut(s![d..2 * d]).assign(&emb.sequence);
                vector.slice_mut(s![2 * d..]).assign(&width);
                Ok(SpanRepresentation { start, end, vector })
            })
            .collect()
    }

    pub fn pair_representation(
        &self,
        emb: &TokenEmbeddings,
        head: (usize, usize),
        tail: (usize, usize),
    ) -> Result<PairRepresentation, EncoderError> {
        check_span(emb, head.0, head.1)?;
        check_span(emb, tail.0, tail.1)?;
        let d = emb.dim();
        let w = self.config.width_dim;
        let mut vector = Array1::zeros(3 * d + 2 * w);
        vector.slice_mut(s![..d]).assign(&maxpool_rows(emb.vectors.view(), head.0, head.1));
        vector.slice_mut(s![d..2 * d]).assign(&maxpool_rows(emb.vectors.view(), tail.0, tail.1));
        vector.slice_mut(s![2 * d..3 * d]).assign(&between_context(emb, head, tail));
        vector.slice_mut(s![3 * d..3 * d + w]).assign(&self.width_row(head.1 + 1 - head.0)?);
        vector.slice_mut(s![3 * d + w..]).assign(&self.width_row(tail.1 + 1 - tail.0)?);
        Ok(PairRepresentation { head, tail, vector })
    }

    fn check_dim(&self, head: &str, expected: usize, got: usize) -> Result<(), ModelError> {
        if expected != got {
            return Err(ModelError::Config(format!("{head} head expects inputs of dimension {expected}, got {got}")));
        }
        Ok(())
    }

    /// Softmax over `none ∪ entity types` for each span.
    pub fn classify_entities(&self, spans: &[SpanRepresentation]) -> Result<Vec<EntityDistribution>, ModelError> {
        spans
            .iter()
            .map(|span| {
                self.check_dim("entity", self.params.entity.inputs(), span.vector.len())?;
                Ok(EntityDistribution {
                    span: (span.start, span.end),
                    probabilities: softmax(&self.params.entity.forward(span.vector.view())),
                })
            })
            .collect()
    }

    /// Independent probability per attribute type for each span.
    pub fn classify_attributes(&self, spans: &[SpanRepresentation]) -> Result<Vec<Array1<f64>>, ModelError> {
        spans
            .iter()
            .map(|span| {
                self.check_dim("attribute", self.params.attribute.inputs(), span.vector.len())?;
                Ok(self.params.attribute.forward(span.vector.view()).mapv(sigmoid))
            })
            .collect()
    }

    /// Independent probability per relation type for each ordered pair.
    pub fn classify_relations(&self, pairs: &[PairRepresentation]) -> Result<Vec<Array1<f64>>, ModelError> {
        pairs
            .iter()
            .map(|pair| {
                if pair.head == pair.tail {
                    return Err(ModelError::ContractViolation(format!(
                        "relation pair links span [{},{}] to itself",
                        pair.head.0, pair.head.1
                    )));
                }
                self.check_dim("relation", self.params.relation.inputs(), pair.vector.len())?;
                Ok(self.params.relation.forward(pair.vector.view()).mapv(sigmoid))
            })
            .collect()
    }

    /// Extracts a knowledge graph from one tokenized sentence.
    pub fn extract(&self, tokens: &[String]) -> Result<KnowledgeGraph, ModelError> {
        let emb = self.encoder.encode(tokens)?;
        self.extract_embedded(tokens, &emb)
    }

    pub fn extract_embedded(&self, tokens: &[String], emb: &TokenEmbeddings) -> Result<KnowledgeGraph, ModelError> {
        let schema = &self.config.schema;
        let spans = enumerate_spans(tokens.len(), self.config.max_span_len);
        let reps = self.span_representations(emb, &spans)?;
        let distributions = self.classify_entities(&reps)?;

        let mut graph = KnowledgeGraph::new(tokens.to_vec());
        let mut survivors = Vec::new();
        for (rep, dist) in reps.into_iter().zip(&distributions) {
            let class = dist.argmax();
            if class > 0 {
                graph.add_entity(rep.start, rep.end, schema.entity_types[class - 1].clone());
                survivors.push(rep);
            }
        }

        for (entity, probs) in self.classify_attributes(&survivors)?.iter().enumerate() {
            for (t, &p) in probs.iter().enumerate() {
                if p >= self.config.attribute_threshold {
                    graph.add_attribute(entity, schema.attribute_types[t].clone());
                }
            }
        }

        let mut index = Vec::new();
        let mut pairs = Vec::new();
        for (h, head) in survivors.iter().enumerate() {
            for (t, tail) in survivors.iter().enumerate() {
                if h != t {
                    index.push((h, t));
                    pairs.push(self.pair_representation(emb, (head.start, head.end), (tail.start, tail.end))?);
                }
            }
        }
        for (&(h, t), probs) in index.iter().zip(self.classify_relations(&pairs)?.iter()) {
            for (r, &p) in probs.iter().enumerate() {
                if p >= self.config.relation_threshold {
                    graph.add_relation(h, t, schema.relation_types[r].clone());
                }
            }
        }
        Ok(graph)
    }
}
