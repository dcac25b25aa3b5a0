//! Inference-only BERT encoder over a Hugging Face style checkpoint
//! directory: `config.json`, `vocab.txt` and `model.safetensors` (float32).
//! An optional `tokenizer_config.json` supplies `do_lower_case`.

use std::path::{Path, PathBuf};

use ndarray::{s, Array1, Array2, Axis};
use safetensors::{Dtype, SafeTensors};
use serde::Deserialize;

use super::{Encoder, EncoderError, EncoderSpec, TokenEmbeddings, WordPiece};

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct BertConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    #[serde(default = "default_act")]
    pub hidden_act: String,
    pub max_position_embeddings: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
}

fn default_act() -> String {
    "gelu".into()
}

fn default_type_vocab() -> usize {
    2
}

fn default_eps() -> f64 {
    1e-12
}

#[derive(Deserialize)]
struct TokenizerConfig {
    #[serde(default = "yes")]
    do_lower_case: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy)]
enum Activation {
    Gelu,
    GeluTanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + libm::erff(x / std::f32::consts::SQRT_2)),
            Activation::GeluTanh => {
                let inner = (2.0 / std::f32::consts::PI).sqrt() * (x + 0.044715 * x * x * x);
                0.5 * x * (1.0 + inner.tanh())
            }
            Activation::Relu => x.max(0.0),
        }
    }
}

#[derive(Debug)]
struct Dense {
    weight: Array2<f32>,
    bias: Array1<f32>,
}

impl Dense {
    fn forward(&self, x: &Array2<f32>) -> Array2<f32> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

#[derive(Debug)]
struct LayerNorm {
    gamma: Array1<f32>,
    beta: Array1<f32>,
    eps: f32,
}

impl LayerNorm {
    fn forward(&self, x: &mut Array2<f32>) {
        for mut row in x.rows_mut() {
            let n = row.len() as f32;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
            let inv = 1.0 / (var + self.eps).sqrt();
            for ((v, g), b) in row.iter_mut().zip(&self.gamma).zip(&self.beta) {
                *v = (*v - mean) * inv * g + b;
            }
        }
    }
}

#[derive(Debug)]
struct Layer {
    query: Dense,
    key: Dense,
    value: Dense,
    attention_out: Dense,
    attention_norm: LayerNorm,
    intermediate: Dense,
    output: Dense,
    output_norm: LayerNorm,
}

/// Frozen BERT encoder. Word vectors are the maxpool of a word's final
/// hidden states; the sequence vector is the `[CLS]` hidden state.
#[derive(Debug)]
pub struct BertEncoder {
    path: PathBuf,
    config: BertConfig,
    tokenizer: WordPiece,
    activation: Activation,
    word_embeddings: Array2<f32>,
    position_embeddings: Array2<f32>,
    token_type_embeddings: Array2<f32>,
    embedding_norm: LayerNorm,
    layers: Vec<Layer>,
}

struct Weights<'a> {
    tensors: SafeTensors<'a>,
    path: &'a Path,
}

impl Weights<'_> {
    fn fail(&self, message: String) -> EncoderError {
        EncoderError::Load { path: self.path.to_path_buf(), message }
    }

    fn find(&self, names: &[String]) -> Result<(Vec<usize>, Vec<f32>), EncoderError> {
        for name in names {
            for prefix in ["", "bert."] {
                let Ok(view) = self.tensors.tensor(&format!("{prefix}{name}")) else { continue };
                if view.dtype() != Dtype::F32 {
                    return Err(self.fail(format!("tensor {name} has dtype {:?}; only F32 is supported", view.dtype())));
                }
                let data = view.data().chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
                return Ok((view.shape().to_vec(), data));
            }
        }
        Err(self.fail(format!("missing tensor {}", names[0])))
    }

    fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Array2<f32>, EncoderError> {
        let (shape, data) = self.find(&[name.to_string()])?;
        if shape != [rows, cols] {
            return Err(self.fail(format!("tensor {name} has shape {shape:?}, expected [{rows}, {cols}]")));
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked"))
    }

    fn vector(&self, names: &[String], len: usize) -> Result<Array1<f32>, EncoderError> {
        let (shape, data) = self.find(names)?;
        if shape != [len] {
            return Err(self.fail(format!("tensor {} has shape {shape:?}, expected [{len}]", names[0])));
        }
        Ok(Array1::from(data))
    }

    fn dense(&self, prefix: &str, out_dim: usize, in_dim: usize) -> Result<Dense, EncoderError> {
        Ok(Dense {
            weight: self.matrix(&format!("{prefix}.weight"), out_dim, in_dim)?,
            bias: self.vector(&[format!("{prefix}.bias")], out_dim)?,
        })
    }

    fn norm(&self, prefix: &str, dim: usize, eps: f64) -> Result<LayerNorm, EncoderError> {
        Ok(LayerNorm {
            gamma: self.vector(&[format!("{prefix}.weight"), format!("{prefix}.gamma")], dim)?,
            beta: self.vector(&[format!("{prefix}.bias"), format!("{prefix}.beta")], dim)?,
            eps: eps as f32,
        })
    }
}

impl BertEncoder {
    pub fn load(dir: &Path) -> Result<Self, EncoderError> {
        let fail = |message: String| EncoderError::Load { path: dir.to_path_buf(), message };
        let read = |name: &str| std::fs::read(dir.join(name)).map_err(|e| fail(format!("{name}: {e}")));

        let config: BertConfig =
            serde_json::from_slice(&read("config.json")?).map_err(|e| fail(format!("config.json: {e}")))?;
        if config.num_attention_heads == 0 || !config.hidden_size.is_multiple_of(config.num_attention_heads) {
            return Err(fail("hidden_size must be a multiple of num_attention_heads".into()));
        }
        let activation = match config.hidden_act.as_str() {
            "gelu" => Activation::Gelu,
            "gelu_new" | "gelu_pytorch_tanh" => Activation::GeluTanh,
            "relu" => Activation::Relu,
            other => return Err(fail(format!("unsupported hidden_act {other}"))),
        };
        let lowercase = match std::fs::read(dir.join("tokenizer_config.json")) {
            Ok(bytes) => {
                serde_json::from_slice::<TokenizerConfig>(&bytes)
                    .map_err(|e| fail(format!("tokenizer_config.json: {e}")))?
                    .do_lower_case
            }
            Err(_) => true,
        };
        let tokenizer = WordPiece::load(&dir.join("vocab.txt"), lowercase).map_err(fail)?;

        let bytes = read("model.safetensors")?;
        let tensors = SafeTensors::deserialize(&bytes).map_err(|e| fail(format!("model.safetensors: {e}")))?;
        let w = Weights { tensors, path: dir };
        let h = config.hidden_size;
        let eps = config.layer_norm_eps;
        let mut layers = Vec::with_capacity(config.num_hidden_layers);
        for i in 0..config.num_hidden_layers {
            let p = format!("encoder.layer.{i}");
            layers.push(Layer {
                query: w.dense(&format!("{p}.attention.self.query"), h, h)?,
                key: w.dense(&format!("{p}.attention.self.key"), h, h)?,
                value: w.dense(&format!("{p}.attention.self.value"), h, h)?,
                attention_out: w.dense(&format!("{p}.attention.output.dense"), h, h)?,
                attention_norm: w.norm(&format!("{p}.attention.output.LayerNorm"), h, eps)?,
                intermediate: w.dense(&format!("{p}.intermediate.dense"), config.intermediate_size, h)?,
                output: w.dense(&format!("{p}.output.dense"), h, config.intermediate_size)?,
                output_norm: w.norm(&format!("{p}.output.LayerNorm"), h, eps)?,
            });
        }
        Ok(BertEncoder {
            word_embeddings: w.matrix("embeddings.word_embeddings.weight", config.vocab_size, h)?,
            position_embeddings: w.matrix(
                "embeddings.position_embeddings.weight",
                config.max_position_embeddings,
                h,
            )?,
            token_type_embeddings: w.matrix("embeddings.token_type_embeddings.weight", config.type_vocab_size, h)?,
            embedding_norm: w.norm("embeddings.LayerNorm", h, eps)?,
            layers,
            activation,
            tokenizer,
            config,
            path: dir.to_path_buf(),
        })
    }

    pub fn config(&self) -> &BertConfig {
        &self.config
    }

    /// `[CLS] pieces.. [SEP]` ids and, per piece, the owning word index
    /// (`None` for the special tokens).
    pub fn piece_ids(&self, tokens: &[String]) -> (Vec<u32>, Vec<Option<usize>>) {
        let mut ids = vec![self.tokenizer.cls()];
        let mut owners = vec![None];
        for (w, token) in tokens.iter().enumerate() {
            for id in self.tokenizer.word_ids(token) {
                ids.push(id);
                owners.push(Some(w));
            }
        }
        ids.push(self.tokenizer.sep());
        owners.push(None);
        (ids, owners)
    }

    /// Final hidden states, one row per input id.
    pub fn forward(&self, ids: &[u32]) -> Array2<f32> {
        let h = self.config.hidden_size;
        let m = ids.len();
        let mut x = Array2::zeros((m, h));
        for (i, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(i);
            row.assign(&self.word_embeddings.row(id as usize));
            row += &self.position_embeddings.row(i);
            row += &self.token_type_embeddings.row(0);
        }
        self.embedding_norm.forward(&mut x);

        let heads = self.config.num_attention_heads;
        let dh = h / heads;
        let scale = 1.0 / (dh as f32).sqrt();
        for layer in &self.layers {
            let q = layer.query.forward(&x);
            let k = layer.key.forward(&x);
            let v = layer.value.forward(&x);
            let mut context = Array2::zeros((m, h));
            for head in 0..heads {
                let cols = s![.., head * dh..(head + 1) * dh];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                for mut row in scores.rows_mut() {
                    let max = row.fold(f32::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|s| (s - max).exp());
                    let total = row.sum();
                    row /= total;
                }
                context.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            }
            let mut attended = layer.attention_out.forward(&context) + &x;
            layer.attention_norm.forward(&mut attended);
            let act = self.activation;
            let inner = layer.intermediate.forward(&attended).mapv(|v| act.apply(v));
            let mut out = layer.output.forward(&inner) + &attended;
            layer.output_norm.forward(&mut out);
            x = out;
        }
        x
    }
}

impl Encoder for BertEncoder {
    fn dim(&self) -> usize {
        self.config.hidden_size
    }

    fn max_pieces(&self) -> usize {
        self.config.max_position_embeddings
    }

    fn piece_count(&self, tokens: &[String]) -> usize {
        tokens.iter().map(|t| self.tokenizer.word_ids(t).len()).sum::<usize>() + 2
    }

    fn encode(&self, tokens: &[String]) -> Result<TokenEmbeddings, EncoderError> {
        if tokens.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let (ids, owners) = self.piece_ids(tokens);
        if ids.len() > self.max_pieces() {
            return Err(EncoderError::InputTooLong { pieces: ids.len(), limit: self.max_pieces() });
        }
        let hidden = self.forward(&ids);
        let h = self.config.hidden_size;
        let mut vectors = Array2::from_elem((tokens.len(), h), f64::NEG_INFINITY);
        for (row, owner) in hidden.axis_iter(Axis(0)).zip(&owners) {
            if let Some(w) = *owner {
                vectors.row_mut(w).zip_mut_with(&row, |a, &b| *a = a.max(b as f64));
            }
        }
        TokenEmbeddings::new(vectors, hidden.row(0).mapv(f64::from))
    }

    fn spec(&self) -> EncoderSpec {
        EncoderSpec::Bert { path: self.path.clone() }
    }
}
