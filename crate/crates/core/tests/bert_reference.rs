//! Checks the BERT encoder against hidden states produced by the reference
//! PyTorch implementation for a tiny randomly initialised checkpoint.

use std::path::PathBuf;

use causalkg_core::encoder::{BertEncoder, Encoder, EncoderError, EncoderSpec};
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    words: Vec<String>,
    input_ids: Vec<u32>,
    word_ids: Vec<i64>,
    hidden: Vec<Vec<f32>>,
}

fn model_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/tiny-bert")
}

fn cases() -> Vec<Case> {
    let text = std::fs::read_to_string(model_dir().join("reference.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn tokenization_matches_reference() {
    let enc = BertEncoder::load(&model_dir()).unwrap();
    for case in cases() {
        let (ids, owners) = enc.piece_ids(&case.words);
        assert_eq!(ids, case.input_ids, "{:?}", case.words);
        let owners: Vec<i64> = owners.iter().map(|o| o.map_or(-1, |w| w as i64)).collect();
        assert_eq!(owners, case.word_ids);
    }
}

#[test]
fn hidden_states_match_reference() {
    let enc = BertEncoder::load(&model_dir()).unwrap();
    for case in cases() {
        let hidden = enc.forward(&case.input_ids);
        for (i, expected) in case.hidden.iter().enumerate() {
            for (j, &e) in expected.iter().enumerate() {
                let got = hidden[[i, j]];
                assert!((got - e).abs() < 1e-4, "piece {i} dim {j}: {got} vs {e}");
            }
        }
    }
}

#[test]
fn word_vectors_pool_pieces() {
    let enc = BertEncoder::load(&model_dir()).unwrap();
    for case in cases() {
        let emb = enc.encode(&case.words).unwrap();
        assert_eq!(emb.len(), case.words.len());
        assert_eq!(emb.dim(), 8);
        for w in 0..case.words.len() {
            for j in 0..8 {
                let oracle = case
                    .word_ids
                    .iter()
                    .zip(&case.hidden)
                    .filter(|(&o, _)| o == w as i64)
                    .map(|(_, row)| row[j])
                    .fold(f32::NEG_INFINITY, f32::max);
                assert!((emb.vectors[[w, j]] - oracle as f64).abs() < 1e-4);
            }
        }
        for j in 0..8 {
            assert!((emb.sequence[j] - case.hidden[0][j] as f64).abs() < 1e-4);
        }
    }
}

#[test]
fn contextual_and_deterministic() {
    let enc = EncoderSpec::Bert { path: model_dir() }.build().unwrap();
    let a: Vec<String> = "they prayed for a safe pregnancy".split(' ').map(String::from).collect();
    let b: Vec<String> = "the women prayed to God".split(' ').map(String::from).collect();
    let ea = enc.encode(&a).unwrap();
    assert_eq!(ea, enc.encode(&a).unwrap());
    let eb = enc.encode(&b).unwrap();
    assert_ne!(ea.token(1), eb.token(2));
    assert_eq!(enc.spec(), EncoderSpec::Bert { path: model_dir() });
}

#[test]
fn over_length_input_rejected() {
    let enc = BertEncoder::load(&model_dir()).unwrap();
    let words: Vec<String> = (0..30).map(|_| "the".to_string()).collect();
    match enc.encode(&words).unwrap_err() {
        EncoderError::InputTooLong { pieces, limit } => assert_eq!((pieces, limit), (32, 24)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_directory_is_load_error() {
    let err = BertEncoder::load(std::path::Path::new("/nonexistent/model")).unwrap_err();
    assert!(matches!(err, EncoderError::Load { .. }));
}
