use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{maxpool_rows, Encoder, EncoderError, EncoderSpec, TokenEmbeddings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HashEncoderConfig {
    pub dim: usize,
    /// Characters per sub-word piece.
    pub piece_len: usize,
    /// Weight of the neighbouring pieces mixed into each piece vector.
    pub context_weight: f64,
    /// Components per piece set to 1; the rest are small noise.
    pub active: usize,
    /// Amplitude of the noise components.
    pub noise: f64,
    pub max_pieces: usize,
    pub seed: u64,
}

impl Default for HashEncoderConfig {
    fn default() -> Self {
        HashEncoderConfig {
            dim: 128,
            piece_len: 4,
            context_weight: 0.5,
            active: 4,
            noise: 0.1,
            max_pieces: 512,
            seed: 0,
        }
    }
}

/// Deterministic stand-in for a pretrained encoder.
///
/// Each lowercased word is cut into fixed-length character pieces. Every
/// piece gets a sparse pseudo-random vector derived from its SHA-256 digest
/// (a few components at 1, the rest small noise) and is then mixed with its
/// left and right neighbours, so the same word reads differently in
/// different contexts. Word vectors are the maxpool of their pieces and the
/// sequence vector is the mean over all pieces.
#[derive(Debug, Clone)]
pub struct HashEncoder {
    config: HashEncoderConfig,
}

impl HashEncoder {
    pub fn new(config: HashEncoderConfig) -> Self {
        assert!(config.dim > 0 && config.piece_len > 0, "hash encoder needs dim > 0 and piece_len > 0");
        HashEncoder { config }
    }

    pub fn with_dim(dim: usize) -> Self {
        Self::new(HashEncoderConfig { dim, ..Default::default() })
    }

    pub fn config(&self) -> &HashEncoderConfig {
        &self.config
    }

    fn pieces(&self, word: &str) -> Vec<String> {
        let chars: Vec<char> = word.to_lowercase().chars().collect();
        if chars.is_empty() {
            return vec![String::new()];
        }
        chars
            .chunks(self.config.piece_len)
            .enumerate()
            .map(|(i, chunk)| {
                let body: String = chunk.iter().collect();
                if i == 0 {
                    body
                } else {
                    format!("##{body}")
                }
            })
            .collect()
    }

    fn piece_vector(&self, piece: &str) -> Array1<f64> {
        let mut hasher = Sha256::new();
        hasher.update(self.config.seed.to_le_bytes());
        hasher.update(piece.as_bytes());
        let digest = hasher.finalize();
        let mut state = u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"));
        let mut next = move || {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        };
        let d = self.config.dim;
        let noise = self.config.noise;
        let mut v = Array1::from_shape_fn(d, |_| noise * ((next() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0));
        for _ in 0..self.config.active {
            v[(next() % d as u64) as usize] = 1.0;
        }
        v
    }
}

impl Encoder for HashEncoder {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn max_pieces(&self) -> usize {
        self.config.max_pieces
    }

    fn piece_count(&self, tokens: &[String]) -> usize {
        tokens.iter().map(|t| self.pieces(t).len()).sum::<usize>() + 2
    }

    fn encode(&self, tokens: &[String]) -> Result<TokenEmbeddings, EncoderError> {
        if tokens.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let pieces = self.piece_count(tokens);
        if pieces > self.config.max_pieces {
            return Err(EncoderError::InputTooLong { pieces, limit: self.config.max_pieces });
        }

        let mut owners = Vec::new();
        let mut base = Vec::new();
        for (w, token) in tokens.iter().enumerate() {
            for piece in self.pieces(token) {
                owners.push(w);
                base.push(self.piece_vector(&piece));
            }
        }
        let d = self.config.dim;
        let m = base.len();
        let weight = self.config.context_weight / 2.0;
        let mut mixed = Array2::zeros((m, d));
        for i in 0..m {
            let mut row = mixed.row_mut(i);
            row.assign(&base[i]);
            if i > 0 {
                row.scaled_add(weight, &base[i - 1]);
            }
            if i + 1 < m {
                row.scaled_add(weight, &base[i + 1]);
            }
        }

        let mut vectors = Array2::zeros((tokens.len(), d));
        let mut first = 0;
        for w in 0..tokens.len() {
            let last = first + owners[first..].iter().take_while(|&&o| o == w).count() - 1;
            vectors.row_mut(w).assign(&maxpool_rows(mixed.view(), first, last));
            first = last + 1;
        }
        let sequence = mixed.mean_axis(ndarray::Axis(0)).expect("at least one piece");
        TokenEmbeddings::new(vectors, sequence)
    }

    fn spec(&self) -> EncoderSpec {
        EncoderSpec::Hash(self.config.clone())
    }
}
