//! Joint training of the three heads.
//!
//! The batch loss is the sum of three means:
//!
//! - softmax cross-entropy over gold entity spans and sampled non-entity
//!   spans;
//! - binary cross-entropy over (gold entity, attribute type) cells;
//! - binary cross-entropy over (ordered gold pair, relation type) cells for
//!   pairs that carry a gold relation plus sampled unrelated pairs.
//!
//! Attribute and relation heads only ever see gold entities during
//! training. The encoder is frozen, so each sentence is encoded once.

use std::sync::Arc;

use ndarray::{s, Array1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, softmax, Adam, HeadParams, JointModel, ModelConfig, ModelError};
use crate::corpus::{derive_seed, sample_negatives, AnnotatedSentence};
use crate::encoder::{between_context, maxpool_rows, Encoder, TokenEmbeddings};
use crate::schema::validate_graph;

/// Everything the loss needs for one sentence.
/// Ordered (head, tail) spans and 0/1 target per relation type.
pub type RelationSample = ((usize, usize), (usize, usize), Array1<f64>);

#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub embeddings: TokenEmbeddings,
    /// Span and target class (0 = none, `i + 1` = entity type `i`).
    pub entity_samples: Vec<((usize, usize), usize)>,
    /// Gold entity span and 0/1 target per attribute type.
    pub attribute_samples: Vec<((usize, usize), Array1<f64>)>,
    pub relation_samples: Vec<RelationSample>,
}

/// Per-epoch mean batch loss.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epoch_losses: Vec<f64>,
}

/// Builds the training samples for one sentence. Gold entities wider than
/// `max_span_len`, and labels outside the schema, are skipped.
pub fn build_example(
    sentence: &AnnotatedSentence,
    embeddings: TokenEmbeddings,
    config: &ModelConfig,
    seed: u64,
) -> TrainingExample {
    let gold = &sentence.gold;
    let schema = &config.schema;
    let fits = |i: usize| gold.entities[i].width() <= config.max_span_len;
    let negatives =
        sample_negatives(gold, config.entity_negatives, config.relation_negatives, config.max_span_len, seed);

    let mut entity_samples = Vec::new();
    let mut attribute_samples = Vec::new();
    for (i, entity) in gold.entities.iter().enumerate() {
        if !fits(i) {
            continue;
        }
        if let Some(class) = schema.entity_index(&entity.entity_type) {
            entity_samples.push((entity.bounds(), class + 1));
        }
        let mut target = Array1::zeros(schema.attribute_types.len());
        for label in gold.attributes_of(i) {
            if let Some(t) = schema.attribute_index(label) {
                target[t] = 1.0;
            }
        }
        attribute_samples.push((entity.bounds(), target));
    }
    entity_samples.extend(negatives.entity_negatives.iter().map(|&span| (span, 0)));

    let mut relation_samples: Vec<RelationSample> = Vec::new();
    let mut pair_index: Vec<(usize, usize)> = Vec::new();
    for relation in &gold.relations {
        let (h, t) = (relation.head, relation.tail);
        if !fits(h) || !fits(t) {
            continue;
        }
        let Some(r) = schema.relation_index(&relation.relation_type) else { continue };
        let slot = match pair_index.iter().position(|&p| p == (h, t)) {
            Some(slot) => slot,
            None => {
                pair_index.push((h, t));
                let target = Array1::zeros(schema.relation_types.len());
                relation_samples.push((gold.entities[h].bounds(), gold.entities[t].bounds(), target));
                pair_index.len() - 1
            }
        };
        relation_samples[slot].2[r] = 1.0;
    }
    for &(h, t) in &negatives.relation_negatives {
        if fits(h) && fits(t) {
            let target = Array1::zeros(schema.relation_types.len());
            relation_samples.push((gold.entities[h].bounds(), gold.entities[t].bounds(), target));
        }
    }

    TrainingExample { embeddings, entity_samples, attribute_samples, relation_samples }
}

fn bce_with_logits(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn span_input(params: &HeadParams, emb: &TokenEmbeddings, (start, end): (usize, usize)) -> Array1<f64> {
    let d = emb.dim();
    let w = params.widths.ncols();
    let mut x = Array1::zeros(2 * d + w);
    x.slice_mut(s![..d]).assign(&maxpool_rows(emb.vectors.view(), start, end));
    x.slice_mut(s![d..2 * d]).assign(&emb.sequence);
    x.slice_mut(s![2 * d..]).assign(&params.widths.row(end - start));
    x
}

fn pair_input(params: &HeadParams, emb: &TokenEmbeddings, head: (usize, usize), tail: (usize, usize)) -> Array1<f64> {
    let d = emb.dim();
    let w = params.widths.ncols();
    let mut x = Array1::zeros(3 * d + 2 * w);
    x.slice_mut(s![..d]).assign(&maxpool_rows(emb.vectors.view(), head.0, head.1));
    x.slice_mut(s![d..2 * d]).assign(&maxpool_rows(emb.vectors.view(), tail.0, tail.1));
    x.slice_mut(s![2 * d..3 * d]).assign(&between_context(emb, head, tail));
    x.slice_mut(s![3 * d..3 * d + w]).assign(&params.widths.row(head.1 - head.0));
    x.slice_mut(s![3 * d + w..]).assign(&params.widths.row(tail.1 - tail.0));
    x
}

/// Joint loss of a batch. Each term is a mean over its samples and
/// contributes zero when it has none.
pub fn loss(params: &HeadParams, batch: &[TrainingExample]) -> f64 {
    loss_and_gradient(params, batch).0
}

/// Joint loss of a batch and its exact gradient with respect to every
/// parameter.
pub fn loss_and_gradient(params: &HeadParams, batch: &[TrainingExample]) -> (f64, HeadParams) {
    let mut grad = HeadParams::zeros_like(params);
    let mut total = 0.0;
    let w = params.widths.ncols();

    let entity_count: usize = batch.iter().map(|e| e.entity_samples.len()).sum();
    if entity_count > 0 {
        let scale = 1.0 / entity_count as f64;
        for example in batch {
            let d = example.embeddings.dim();
            for &(span, class) in &example.entity_samples {
                let x = span_input(params, &example.embeddings, span);
                let p = softmax(&params.entity.forward(x.view()));
                total -= scale * p[class].max(f64::MIN_POSITIVE).ln();
                let mut g = p;
                g[class] -= 1.0;
                g *= scale;
                let dx = params.entity.backward(x.view(), &g, &mut grad.entity);
                let mut row = grad.widths.row_mut(span.1 - span.0);
                row += &dx.slice(s![2 * d..2 * d + w]);
            }
        }
    }

    let attribute_cells: usize =
        batch.iter().map(|e| e.attribute_samples.len()).sum::<usize>() * params.attribute.outputs();
    if attribute_cells > 0 {
        let scale = 1.0 / attribute_cells as f64;
        for example in batch {
            let d = example.embeddings.dim();
            for (span, target) in &example.attribute_samples {
                let x = span_input(params, &example.embeddings, *span);
                let z = params.attribute.forward(x.view());
                total += scale * z.iter().zip(target).map(|(&z, &y)| bce_with_logits(z, y)).sum::<f64>();
                let g = Array1::from_iter(z.iter().zip(target).map(|(&z, &y)| scale * (sigmoid(z) - y)));
                let dx = params.attribute.backward(x.view(), &g, &mut grad.attribute);
                let mut row = grad.widths.row_mut(span.1 - span.0);
                row += &dx.slice(s![2 * d..2 * d + w]);
            }
        }
    }

    let relation_cells: usize =
        batch.iter().map(|e| e.relation_samples.len()).sum::<usize>() * params.relation.outputs();
    if relation_cells > 0 {
        let scale = 1.0 / relation_cells as f64;
        for example in batch {
            let d = example.embeddings.dim();
            for (head, tail, target) in &example.relation_samples {
                let x = pair_input(params, &example.embeddings, *head, *tail);
                let z = params.relation.forward(x.view());
                total += scale * z.iter().zip(target).map(|(&z, &y)| bce_with_logits(z, y)).sum::<f64>();
                let g = Array1::from_iter(z.iter().zip(target).map(|(&z, &y)| scale * (sigmoid(z) - y)));
                let dx = params.relation.backward(x.view(), &g, &mut grad.relation);
                let mut row = grad.widths.row_mut(head.1 - head.0);
                row += &dx.slice(s![3 * d..3 * d + w]);
                let mut row = grad.widths.row_mut(tail.1 - tail.0);
                row += &dx.slice(s![3 * d + w..]);
            }
        }
    }

    (total, grad)
}

/// Trains a fresh model on `corpus`.
///
/// Sentence order is reshuffled and negatives are resampled every epoch;
/// all randomness derives from `config.seed`.
pub fn train(corpus: &[AnnotatedSentence], config: ModelConfig) -> Result<(JointModel, TrainingLog), ModelError> {
    let encoder = config.encoder.build()?;
    train_with_encoder(corpus, config, encoder)
}

pub fn train_with_encoder(
    corpus: &[AnnotatedSentence],
    config: ModelConfig,
    encoder: Arc<dyn Encoder>,
) -> Result<(JointModel, TrainingLog), ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let mut model = JointModel::with_encoder(config, encoder)?;
    for (index, sentence) in corpus.iter().enumerate() {
        let report = validate_graph(&sentence.gold, &model.config.schema);
        if !report.is_valid() {
            return Err(ModelError::InvalidSentence { index, message: report.to_string() });
        }
    }
    let embeddings = corpus.iter().map(|s| model.encoder().encode(s.tokens())).collect::<Result<Vec<_>, _>>()?;

    let config = model.config.clone();
    let mut optimizer = Adam::new(&model.params, config.learning_rate);
    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64 + 1, 0)));
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<TrainingExample> = chunk
                .iter()
                .map(|&i| {
                    let seed = derive_seed(config.seed, epoch as u64 + 1, i as u64 + 1);
                    build_example(&corpus[i], embeddings[i].clone(), &config, seed)
                })
                .collect();
            let (loss, grad) = loss_and_gradient(&model.params, &batch);
            optimizer.step(&mut model.params, &grad);
            epoch_loss += loss;
            batches += 1;
        }
        log.epoch_losses.push(epoch_loss / batches as f64);
    }
    Ok((model, log))
}
