//! Checkpoint directories: `model.json` (format version, schema
//! fingerprint, full [`ModelConfig`]) and `params.json` (all parameters).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HeadParams, JointModel, ModelConfig, ModelError};
use crate::schema::SchemaDef;

pub const CHECKPOINT_VERSION: u64 = 1;

const MODEL_FILE: &str = "model.json";
const PARAMS_FILE: &str = "params.json";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u64,
    schema_fingerprint: String,
    config: ModelConfig,
}

fn fail(dir: &Path, message: impl Into<String>) -> ModelError {
    ModelError::Checkpoint { path: dir.display().to_string(), message: message.into() }
}

pub fn save_checkpoint(model: &JointModel, dir: &Path) -> Result<(), ModelError> {
    fs::create_dir_all(dir).map_err(|e| fail(dir, e.to_string()))?;
    let manifest = Manifest {
        format_version: CHECKPOINT_VERSION,
        schema_fingerprint: model.config.schema.fingerprint(),
        config: model.config.clone(),
    };
    let write =
        |name: &str, bytes: Vec<u8>| fs::write(dir.join(name), bytes).map_err(|e| fail(dir, format!("{name}: {e}")));
    write(MODEL_FILE, serde_json::to_vec_pretty(&manifest).map_err(|e| fail(dir, e.to_string()))?)?;
    write(PARAMS_FILE, serde_json::to_vec(&model.params).map_err(|e| fail(dir, e.to_string()))?)?;
    Ok(())
}

/// Loads a checkpoint and rebuilds its encoder.
///
/// With `expected_schema`, loading fails unless the stored schema has the
/// identical fingerprint.
pub fn load_checkpoint(dir: &Path, expected_schema: Option<&SchemaDef>) -> Result<JointModel, ModelError> {
    let read = |name: &str| fs::read(dir.join(name)).map_err(|e| fail(dir, format!("{name}: {e}")));
    let manifest: Manifest =
        serde_json::from_slice(&read(MODEL_FILE)?).map_err(|e| fail(dir, format!("{MODEL_FILE}: {e}")))?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(fail(dir, format!("unsupported checkpoint format_version {}", manifest.format_version)));
    }
    let fingerprint = manifest.config.schema.fingerprint();
    if fingerprint != manifest.schema_fingerprint {
        return Err(fail(dir, "stored schema does not match its recorded fingerprint"));
    }
    if let Some(expected) = expected_schema {
        if expected.fingerprint() != fingerprint {
            return Err(fail(
                dir,
                format!("checkpoint was trained on schema `{}`, not `{}`", manifest.config.schema.name, expected.name),
            ));
        }
    }
    let params: HeadParams =
        serde_json::from_slice(&read(PARAMS_FILE)?).map_err(|e| fail(dir, format!("{PARAMS_FILE}: {e}")))?;
    let encoder = manifest.config.encoder.build()?;
    JointModel::from_parts(manifest.config, params, encoder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{builtin_schema, ETHNOGRAPHIC, SCIENTIFIC_CLAIMS};

    fn model() -> JointModel {
        let config = ModelConfig { init_std: 0.3, seed: 4, ..Default::default() };
        JointModel::new(config).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = model();
        save_checkpoint(&m, dir.path()).unwrap();
        let back = load_checkpoint(dir.path(), Some(&builtin_schema(SCIENTIFIC_CLAIMS).unwrap())).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(back.config, m.config);
        let words: Vec<String> = "sleep decreases stress".split(' ').map(String::from).collect();
        assert_eq!(back.extract(&words).unwrap(), m.extract(&words).unwrap());
    }

    #[test]
    fn rejects_other_schema() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&model(), dir.path()).unwrap();
        let err = load_checkpoint(dir.path(), Some(&builtin_schema(ETHNOGRAPHIC).unwrap())).unwrap_err();
        assert!(matches!(err, ModelError::Checkpoint { .. }));
    }

    #[test]
    fn rejects_tampered_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&model(), dir.path()).unwrap();
        let path = dir.path().join(MODEL_FILE);
        let mut manifest: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        manifest["config"]["schema"]["relation_types"].as_array_mut().unwrap().pop();
        fs::write(&path, serde_json::to_vec(&manifest).unwrap()).unwrap();
        assert!(matches!(load_checkpoint(dir.path(), None), Err(ModelError::Checkpoint { .. })));
    }

    #[test]
    fn missing_dir() {
        assert!(matches!(load_checkpoint(Path::new("/nonexistent/ckpt"), None), Err(ModelError::Checkpoint { .. })));
    }
}
