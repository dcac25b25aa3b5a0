//! The `causalkg` command line: train, extract, evaluate, traverse, render.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 runtime failure. Settings resolve as flag, then config file, then the
//! built-in default.

mod commands;
mod settings;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use settings::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "causalkg", version, about = "Extract, score and traverse qualitative causal knowledge graphs")]
pub struct Cli {
    /// TOML file with default settings; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on an annotated corpus and write a checkpoint.
    Train(TrainArgs),
    /// Extract graphs from sentences (corpus JSON or one sentence per line).
    Extract(ExtractArgs),
    /// Score predicted graphs against gold graphs.
    Evaluate(EvaluateArgs),
    /// Find paths between two concepts in the merged graph of a corpus.
    Traverse(TraverseArgs),
    /// Render the graphs of a corpus as DOT or merged-graph JSON.
    Render(RenderArgs),
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Builtin schema name (scientific-claims, ethnographic) or schema JSON path.
    #[arg(long)]
    pub schema: Option<String>,
    /// `hash`, `hash:<dim>` or a BERT checkpoint directory.
    #[arg(long)]
    pub encoder: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_span_len: Option<usize>,
    #[arg(long)]
    pub rel_threshold: Option<f64>,
    #[arg(long)]
    pub attr_threshold: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Annotated training corpus (JSON).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint directory to create or overwrite.
    #[arg(long)]
    pub model_dir: PathBuf,
    /// Hold out this fraction of the corpus; the split is written next to
    /// the checkpoint as train.json and test.json.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub model_dir: PathBuf,
    /// Corpus JSON, or plain text with one sentence per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output corpus JSON; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Require the checkpoint to use this schema.
    #[arg(long)]
    pub schema: Option<String>,
    #[arg(long)]
    pub max_span_len: Option<usize>,
    #[arg(long)]
    pub rel_threshold: Option<f64>,
    #[arg(long)]
    pub attr_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Gold corpus JSON.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Predicted corpus JSON, aligned sentence by sentence with the gold.
    #[arg(long)]
    pub pred: PathBuf,
    /// Report JSON; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Text table; printed to standard output when --out is given.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
}

#[derive(Debug, Args)]
pub struct TraverseArgs {
    /// Corpus JSON whose graphs are merged (gold or predicted).
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub target: String,
    /// lemma or vector.
    #[arg(long)]
    pub matcher: Option<String>,
    /// Cosine cutoff for the vector matcher.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub max_hops: Option<usize>,
    /// dot or json.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Encoder for the vector matcher.
    #[arg(long)]
    pub encoder: Option<String>,
    /// Take the vector matcher's encoder from this checkpoint.
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    /// Draw modifier edges without labels.
    #[arg(long)]
    pub unlabeled_modifiers: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// dot or json.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    #[arg(long)]
    pub unlabeled_modifiers: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Runtime = 3,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub(crate) trait Classify<T> {
    fn or_fail(self, kind: ExitKind) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_fail(self, kind: ExitKind) -> Result<T, Failure> {
        self.map_err(|e| Failure { kind, error: e.into() })
    }
}

pub(crate) fn fail<T>(kind: ExitKind, message: impl fmt::Display) -> Result<T, Failure> {
    Err(Failure { kind, error: anyhow::anyhow!("{message}") })
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitKind::Usage as i32 } else { 0 };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match commands::dispatch(cli, stdout) {
        Ok(()) => 0,
        Err(failure) => {
            let _ = writeln!(stderr, "error: {failure}");
            failure.kind as i32
        }
    }
}
