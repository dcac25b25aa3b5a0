//! Extraction of qualitative causal knowledge graphs from single sentences.
//!
//! The pipeline has six parts:
//!
//! - [`schema`]: the graph data model (entities, attributes, relations) and
//!   the builtin `scientific-claims` and `ethnographic` vocabularies.
//! - [`corpus`]: the annotated-sentence file format, train/test splits and
//!   negative sampling.
//! - [`encoder`]: contextual word encoders and span pooling.
//! - [`extractor`]: the joint span model (entity, attribute and relation
//!   heads), its training loop and checkpoints.
//! - [`scorer`]: entity-constrained precision/recall/F1.
//! - [`causal`]: merging per-sentence graphs and traversing concepts.

pub mod causal;
pub mod corpus;
pub mod encoder;
pub mod extractor;
pub mod schema;
pub mod scorer;

pub use causal::{ConceptQuery, GlobalGraph, Matcher, TraversalPath};
pub use corpus::AnnotatedSentence;
pub use encoder::{Encoder, EncoderSpec, TokenEmbeddings};
pub use extractor::{JointModel, ModelConfig};
pub use schema::{builtin_schema, validate_graph, KnowledgeGraph, SchemaDef, ValidationReport};
pub use scorer::{evaluate, EvalReport};
