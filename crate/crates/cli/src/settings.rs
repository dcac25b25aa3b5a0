use std::path::Path;

use serde::Deserialize;

use crate::{Classify, ExitKind, Failure};

/// Optional defaults read from `--config`. Every key mirrors a flag.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub schema: Option<String>,
    pub encoder: Option<String>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub max_span_len: Option<usize>,
    pub rel_threshold: Option<f64>,
    pub attr_threshold: Option<f64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub test_fraction: Option<f64>,
    pub matcher: Option<String>,
    pub threshold: Option<f64>,
    pub max_hops: Option<usize>,
    pub format: Option<String>,
    pub unlabeled_modifiers: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))
            .or_fail(ExitKind::Usage)?;
        toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))
            .or_fail(ExitKind::Usage)
    }
}

/// Flag value, else config value, else default.
pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>, default: T) -> T {
    flag.or_else(|| file.clone()).unwrap_or(default)
}

pub fn pick_opt<T: Clone>(flag: Option<T>, file: &Option<T>) -> Option<T> {
    flag.or_else(|| file.clone())
}
