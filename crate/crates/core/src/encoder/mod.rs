//! Contextual word encoders and span representations.
//!
//! An [`Encoder`] maps word tokens to one vector per word plus a
//! whole-sequence vector. Sub-word pieces are folded into their word by
//! elementwise max, the same operator used to pool spans.
//!
//! A span `[start, end]` is represented as
//! `maxpool(e_start..=e_end) ⊕ e_seq ⊕ w_len`, where `w_len` is a learned
//! row of the [`WidthEmbeddingTable`] for the span's token count.

mod bert;
mod hash;
mod wordpiece;

use std::path::PathBuf;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bert::{BertConfig, BertEncoder};
pub use hash::{HashEncoder, HashEncoderConfig};
pub use wordpiece::WordPiece;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("input expands to {pieces} sub-word pieces; encoder accepts at most {limit}")]
    InputTooLong { pieces: usize, limit: usize },
    #[error("cannot encode an empty token sequence")]
    EmptyInput,
    #[error("cannot maxpool an empty list of vectors")]
    EmptyPool,
    #[error("cannot pool vectors of differing dimension ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("span [{start},{end}] is invalid for a sentence of {len} tokens")]
    SpanOutOfRange { start: usize, end: usize, len: usize },
    #[error("span of {width} tokens exceeds the width table of {max}")]
    SpanTooWide { width: usize, max: usize },
    #[error("failed to load encoder from {path}: {message}")]
    Load { path: PathBuf, message: String },
}

/// Word vectors `e_1..e_n` (rows) and the sequence summary `e_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddings {
    pub vectors: Array2<f64>,
    pub sequence: Array1<f64>,
}

impl TokenEmbeddings {
    pub fn new(vectors: Array2<f64>, sequence: Array1<f64>) -> Result<Self, EncoderError> {
        if vectors.ncols() != sequence.len() {
            return Err(EncoderError::DimensionMismatch(vectors.ncols(), sequence.len()));
        }
        Ok(TokenEmbeddings { vectors, sequence })
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn token(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }
}

/// A contextual word encoder.
///
/// Implementations must be deterministic: encoding the same tokens twice
/// yields identical embeddings.
pub trait Encoder: Send + Sync {
    /// Dimension `d` of every word and sequence vector.
    fn dim(&self) -> usize;

    /// Maximum sequence length in sub-word pieces, special tokens included.
    fn max_pieces(&self) -> usize;

    /// Number of sub-word pieces `tokens` occupy, special tokens included.
    fn piece_count(&self, tokens: &[String]) -> usize;

    fn encode(&self, tokens: &[String]) -> Result<TokenEmbeddings, EncoderError>;

    /// Description sufficient to rebuild this encoder.
    fn spec(&self) -> EncoderSpec;
}

/// Serializable encoder selection, stored in model checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderSpec {
    /// Hash-based contextual encoder; needs no model files.
    Hash(HashEncoderConfig),
    /// BERT-family checkpoint directory (`config.json`, `vocab.txt`,
    /// `model.safetensors`).
    Bert { path: PathBuf },
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec::Hash(HashEncoderConfig::default())
    }
}

impl EncoderSpec {
    pub fn build(&self) -> Result<Arc<dyn Encoder>, EncoderError> {
        Ok(match self {
            EncoderSpec::Hash(config) => Arc::new(HashEncoder::new(config.clone())),
            EncoderSpec::Bert { path } => Arc::new(BertEncoder::load(path)?),
        })
    }

    /// Parses `hash`, `hash:<dim>` or a checkpoint directory path.
    pub fn parse(text: &str) -> EncoderSpec {
        if text == "hash" {
            return EncoderSpec::default();
        }
        if let Some(dim) = text.strip_prefix("hash:").and_then(|d| d.parse().ok()) {
            return EncoderSpec::Hash(HashEncoderConfig { dim, ..Default::default() });
        }
        EncoderSpec::Bert { path: PathBuf::from(text.strip_prefix("bert:").unwrap_or(text)) }
    }
}

/// Elementwise maximum over a non-empty list of equal-length vectors.
pub fn maxpool<'a, I>(vectors: I) -> Result<Array1<f64>, EncoderError>
where
    I: IntoIterator<Item = ArrayView1<'a, f64>>,
{
    let mut iter = vectors.into_iter();
    let mut out = iter.next().ok_or(EncoderError::EmptyPool)?.to_owned();
    for v in iter {
        if v.len() != out.len() {
            return Err(EncoderError::DimensionMismatch(out.len(), v.len()));
        }
        out.zip_mut_with(&v, |a, &b| {
            if b > *a {
                *a = b
            }
        });
    }
    Ok(out)
}

/// Max over rows `start..=end` of a matrix. Caller guarantees the range.
pub(crate) fn maxpool_rows(rows: ArrayView2<'_, f64>, start: usize, end: usize) -> Array1<f64> {
    rows.slice(s![start..=end, ..]).fold_axis(Axis(0), f64::NEG_INFINITY, |&a, &b| a.max(b))
}

/// Learned width vectors `w_1..w_max_len`, one row per span length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthEmbeddingTable {
    pub rows: Array2<f64>,
}

impl WidthEmbeddingTable {
    pub fn zeros(max_len: usize, dim: usize) -> Self {
        WidthEmbeddingTable { rows: Array2::zeros((max_len, dim)) }
    }

    pub fn random<R: Rng>(max_len: usize, dim: usize, std: f64, rng: &mut R) -> Self {
        WidthEmbeddingTable {
            rows: Array2::from_shape_fn((max_len, dim), |_| std * rng.sample::<f64, _>(StandardNormal)),
        }
    }

    pub fn max_len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Row for spans of `width` tokens (1-based).
    pub fn get(&self, width: usize) -> Result<ArrayView1<'_, f64>, EncoderError> {
        if width == 0 || width > self.max_len() {
            return Err(EncoderError::SpanTooWide { width, max: self.max_len() });
        }
        Ok(self.rows.row(width - 1))
    }
}

/// The classifier input for one candidate span.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanRepresentation {
    pub start: usize,
    pub end: usize,
    /// `pooled (d) ⊕ sequence (d) ⊕ width (d_w)`.
    pub vector: Array1<f64>,
}

impl SpanRepresentation {
    pub fn width(&self) -> usize {
        self.end + 1 - self.start
    }
}

pub(crate) fn check_span(emb: &TokenEmbeddings, start: usize, end: usize) -> Result<(), EncoderError> {
    if start > end || end >= emb.len() {
        return Err(EncoderError::SpanOutOfRange { start, end, len: emb.len() });
    }
    Ok(())
}

pub fn span_representation(
    emb: &TokenEmbeddings,
    (start, end): (usize, usize),
    widths: &WidthEmbeddingTable,
) -> Result<SpanRepresentation, EncoderError> {
    check_span(emb, start, end)?;
    let width = widths.get(end + 1 - start)?;
    let d = emb.dim();
    let mut vector = Array1::zeros(2 * d + widths.dim());
    vector.slice_mut(s![..d]).assign(&maxpool_rows(emb.vectors.view(), start, end));
    vector.slice_mut(s![d..2 * d]).assign(&emb.sequence);
    vector.slice_mut(s![2 * d..]).assign(&width);
    Ok(SpanRepresentation { start, end, vector })
}

/// Maxpool of the tokens strictly between two spans, or the zero vector
/// when they are adjacent or overlap. Symmetric in its arguments.
pub fn between_context(emb: &TokenEmbeddings, a: (usize, usize), b: (usize, usize)) -> Array1<f64> {
    let from = a.1.min(b.1) + 1;
    let to = a.0.max(b.0);
    if from >= to || to > emb.len() {
        return Array1::zeros(emb.dim());
    }
    maxpool_rows(emb.vectors.view(), from, to - 1)
}
