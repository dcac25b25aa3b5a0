use std::fs;
use std::io::Write;
use std::path::Path;

use causalkg_core::causal::{
    export_graph, export_paths, find_paths, match_concepts, merge_graphs, CausalError, ConceptQuery, ExportFormat,
    ExportOptions, GlobalGraph, Matcher, DEFAULT_MAX_HOPS,
};
use causalkg_core::corpus::{load_corpus, split_corpus, tokenize, write_corpus, CorpusError};
use causalkg_core::encoder::{Encoder, EncoderError, EncoderSpec};
use causalkg_core::extractor::{load_checkpoint, save_checkpoint, train, ModelError};
use causalkg_core::schema::{builtin_schema, SchemaDef, SchemaError, ETHNOGRAPHIC, SCIENTIFIC_CLAIMS};
use causalkg_core::{evaluate, AnnotatedSentence, ModelConfig};

use crate::settings::{pick, pick_opt, FileConfig};
use crate::{
    fail, Classify, Cli, Command, EvaluateArgs, ExitKind, ExtractArgs, Failure, RenderArgs, TrainArgs, TraverseArgs,
};

const DEFAULT_VECTOR_THRESHOLD: f64 = 0.8;

pub(crate) fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Train(args) => cmd_train(args, &file, stdout),
        Command::Extract(args) => cmd_extract(args, &file, stdout),
        Command::Evaluate(args) => cmd_evaluate(args, &file, stdout),
        Command::Traverse(args) => cmd_traverse(args, &file, stdout),
        Command::Render(args) => cmd_render(args, &file, stdout),
    }
}

fn encoder_kind(e: &EncoderError) -> ExitKind {
    match e {
        EncoderError::DimensionMismatch(..) | EncoderError::EmptyPool => ExitKind::Runtime,
        _ => ExitKind::Data,
    }
}

fn model_failure(e: ModelError) -> Failure {
    let kind = match &e {
        ModelError::Config(_) => ExitKind::Usage,
        ModelError::EmptyCorpus | ModelError::InvalidSentence { .. } | ModelError::Checkpoint { .. } => ExitKind::Data,
        ModelError::Encoder(inner) => encoder_kind(inner),
        ModelError::ContractViolation(_) => ExitKind::Runtime,
    };
    Failure { kind, error: e.into() }
}

fn causal_failure(e: CausalError) -> Failure {
    let kind = match &e {
        CausalError::Config(_) => ExitKind::Usage,
        CausalError::Encoder(inner) => encoder_kind(inner),
        CausalError::Merge(_) | CausalError::InvalidGraph(_) | CausalError::Json(_) => ExitKind::Data,
    };
    Failure { kind, error: e.into() }
}

fn require_path(path: &Path, what: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        fail(ExitKind::Usage, format!("{what} {} does not exist", path.display()))
    }
}

fn resolve_schema(name: &str) -> Result<SchemaDef, Failure> {
    match builtin_schema(name) {
        Ok(schema) => return Ok(schema),
        Err(SchemaError::NotFound(_)) => {}
        Err(e) => return Err(e).or_fail(ExitKind::Runtime),
    }
    let path = Path::new(name);
    if !path.is_file() {
        return fail(
            ExitKind::Usage,
            format!("unknown schema `{name}` (builtin: {SCIENTIFIC_CLAIMS}, {ETHNOGRAPHIC}; or a schema JSON file)"),
        );
    }
    let text = fs::read_to_string(path).or_fail(ExitKind::Runtime)?;
    serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("schema {}: {e}", path.display())).or_fail(ExitKind::Data)
}

fn optional_schema(flag: Option<String>, file: &FileConfig) -> Result<Option<SchemaDef>, Failure> {
    pick_opt(flag, &file.schema).map(|name| resolve_schema(&name)).transpose()
}

fn load(path: &Path, schema: Option<&SchemaDef>) -> Result<Vec<AnnotatedSentence>, Failure> {
    require_path(path, "corpus")?;
    let reader = fs::File::open(path).or_fail(ExitKind::Runtime)?;
    load_corpus(reader, schema).map_err(|e| {
        let kind = if matches!(e, CorpusError::Io(_)) { ExitKind::Runtime } else { ExitKind::Data };
        Failure { kind, error: anyhow::Error::new(e).context(format!("corpus {}", path.display())) }
    })
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)
                    .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", parent.display()))
                    .or_fail(ExitKind::Runtime)?;
            }
            fs::write(path, text)
                .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))
                .or_fail(ExitKind::Runtime)
        }
        None => stdout.write_all(text.as_bytes()).or_fail(ExitKind::Runtime),
    }
}

fn corpus_json(sentences: &[AnnotatedSentence]) -> Result<String, Failure> {
    let mut bytes = Vec::new();
    write_corpus(&mut bytes, sentences).or_fail(ExitKind::Runtime)?;
    String::from_utf8(bytes).or_fail(ExitKind::Runtime)
}

fn cmd_train(args: TrainArgs, file: &FileConfig, stdout: &mut dyn Write) -> Result<(), Failure> {
    let m = args.model;
    let schema = resolve_schema(&pick(m.schema, &file.schema, SCIENTIFIC_CLAIMS.to_string()))?;
    let defaults = ModelConfig::default();
    let config = ModelConfig {
        schema: schema.clone(),
        encoder: EncoderSpec::parse(&pick(m.encoder, &file.encoder, "hash".to_string())),
        seed: pick(m.seed, &file.seed, defaults.seed),
        epochs: pick(m.epochs, &file.epochs, defaults.epochs),
        max_span_len: pick(m.max_span_len, &file.max_span_len, defaults.max_span_len),
        relation_threshold: pick(m.rel_threshold, &file.rel_threshold, defaults.relation_threshold),
        attribute_threshold: pick(m.attr_threshold, &file.attr_threshold, defaults.attribute_threshold),
        learning_rate: pick(m.learning_rate, &file.learning_rate, defaults.learning_rate),
        batch_size: pick(m.batch_size, &file.batch_size, defaults.batch_size),
        ..defaults
    };
    config.validate().map_err(model_failure)?;

    let corpus = load(&args.corpus, Some(&schema))?;
    let training = match pick_opt(args.test_fraction, &file.test_fraction) {
        Some(fraction) => {
            let (train_part, test_part) = split_corpus(&corpus, fraction, config.seed).map_err(|e| {
                let kind = if matches!(e, CorpusError::InvalidFraction(_)) { ExitKind::Usage } else { ExitKind::Data };
                Failure { kind, error: e.into() }
            })?;
            emit(Some(&args.model_dir.join("train.json")), &corpus_json(&train_part)?, stdout)?;
            emit(Some(&args.model_dir.join("test.json")), &corpus_json(&test_part)?, stdout)?;
            train_part
        }
        None => corpus,
    };

    let (model, log) = train(&training, config).map_err(model_failure)?;
    save_checkpoint(&model, &args.model_dir).or_fail(ExitKind::Runtime)?;
    let mut log_text = serde_json::to_string_pretty(&log).or_fail(ExitKind::Runtime)?;
    log_text.push('\n');
    emit(Some(&args.model_dir.join("loss_log.json")), &log_text, stdout)?;
    let last = log.epoch_losses.last().copied().unwrap_or(0.0);
    writeln!(
        stdout,
        "trained on {} sentences for {} epochs (final loss {last:.6}); checkpoint in {}",
        training.len(),
        log.epoch_losses.len(),
        args.model_dir.display()
    )
    .or_fail(ExitKind::Runtime)
}

/// Sentences from corpus JSON, or from plain text with one sentence per
/// line. Blank lines are skipped.
fn read_sentences(path: &Path) -> Result<Vec<Vec<String>>, Failure> {
    require_path(path, "input")?;
    let text = fs::read_to_string(path).or_fail(ExitKind::Runtime)?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') || trimmed.starts_with('{') {
        let corpus = load_corpus(text.as_bytes(), None)
            .map_err(|e| anyhow::Error::new(e).context(format!("input {}", path.display())))
            .or_fail(ExitKind::Data)?;
        return Ok(corpus.into_iter().map(|s| s.gold.tokens).collect());
    }
    Ok(text.lines().map(tokenize).filter(|t| !t.is_empty()).collect())
}

fn cmd_extract(args: ExtractArgs, file: &FileConfig, stdout: &mut dyn Write) -> Result<(), Failure> {
    require_path(&args.model_dir, "model directory")?;
    let expected = optional_schema(args.schema, file)?;
    let mut model = load_checkpoint(&args.model_dir, expected.as_ref()).map_err(model_failure)?;
    let trained_len = model.config.max_span_len;
    if let Some(len) = pick_opt(args.max_span_len, &file.max_span_len) {
        if len > trained_len {
            return fail(ExitKind::Usage, format!("--max-span-len {len} exceeds the trained maximum {trained_len}"));
        }
        model.config.max_span_len = len;
    }
    if let Some(t) = pick_opt(args.rel_threshold, &file.rel_threshold) {
        model.config.relation_threshold = t;
    }
    if let Some(t) = pick_opt(args.attr_threshold, &file.attr_threshold) {
        model.config.attribute_threshold = t;
    }
    model.config.validate().map_err(model_failure)?;

    let sentences = read_sentences(&args.corpus)?;
    let mut predicted = Vec::with_capacity(sentences.len());
    for (i, tokens) in sentences.iter().enumerate() {
        let graph = model.extract(tokens).map_err(|e| {
            let mut f = model_failure(e);
            f.error = f.error.context(format!("sentence {i}"));
            f
        })?;
        predicted.push(AnnotatedSentence::new(graph));
    }
    emit(args.out.as_deref(), &corpus_json(&predicted)?, stdout)
}

fn cmd_evaluate(args: EvaluateArgs, file: &FileConfig, stdout: &mut dyn Write) -> Result<(), Failure> {
    let schema = optional_schema(args.schema, file)?;
    let gold = load(&args.corpus, schema.as_ref())?;
    let pred = load(&args.pred, schema.as_ref())?;
    let gold: Vec<_> = gold.into_iter().map(|s| s.gold).collect();
    let pred: Vec<_> = pred.into_iter().map(|s| s.gold).collect();
    let report = evaluate(&gold, &pred, schema.as_ref()).or_fail(ExitKind::Data)?;
    let mut json = serde_json::to_string_pretty(&report).or_fail(ExitKind::Runtime)?;
    json.push('\n');
    let table = report.to_table();
    emit(args.out.as_deref(), &json, stdout)?;
    match (&args.table, &args.out) {
        (Some(path), _) => emit(Some(path), &table, stdout),
        (None, Some(_)) => emit(None, &table, stdout),
        (None, None) => Ok(()),
    }
}

fn merge_corpus(corpus: Vec<AnnotatedSentence>) -> Result<GlobalGraph, Failure> {
    merge_graphs(corpus.into_iter().enumerate().map(|(i, s)| (i.to_string(), s.gold))).map_err(causal_failure)
}

fn parse_format(flag: Option<String>, file: &FileConfig) -> Result<ExportFormat, Failure> {
    pick(flag, &file.format, "dot".to_string()).parse().map_err(causal_failure)
}

fn cmd_traverse(args: TraverseArgs, file: &FileConfig, stdout: &mut dyn Write) -> Result<(), Failure> {
    let matcher: Matcher = pick(args.matcher, &file.matcher, "lemma".to_string()).parse().map_err(causal_failure)?;
    let threshold = pick(args.threshold, &file.threshold, DEFAULT_VECTOR_THRESHOLD);
    let max_hops = pick(args.max_hops, &file.max_hops, DEFAULT_MAX_HOPS);
    if max_hops == 0 {
        return fail(ExitKind::Usage, "--max-hops must be at least 1");
    }
    let format = parse_format(args.format, file)?;
    let options =
        ExportOptions { unlabeled_modifiers: args.unlabeled_modifiers || file.unlabeled_modifiers == Some(true) };
    let schema = optional_schema(args.schema, file)?;

    let encoder = match matcher {
        Matcher::Lemma => None,
        Matcher::Vector => Some(match &args.model_dir {
            Some(dir) => {
                require_path(dir, "model directory")?;
                load_checkpoint(dir, None).map_err(model_failure)?.encoder().clone()
            }
            None => {
                let spec = EncoderSpec::parse(&pick(args.encoder, &file.encoder, "hash".to_string()));
                spec.build().map_err(|e| Failure { kind: encoder_kind(&e), error: e.into() })?
            }
        }),
    };

    let graph = merge_corpus(load(&args.corpus, schema.as_ref())?)?;
    let query = |surface: &str| ConceptQuery { surface: surface.to_string(), matcher, threshold };
    let encoder_ref: Option<&dyn Encoder> = encoder.as_deref();
    let sources = match_concepts(&query(&args.source), &graph, encoder_ref).map_err(causal_failure)?;
    let destinations = match_concepts(&query(&args.target), &graph, encoder_ref).map_err(causal_failure)?;
    let paths = find_paths(&graph, &sources, &destinations, max_hops).map_err(causal_failure)?;
    emit(args.out.as_deref(), &export_paths(&graph, &paths, format, options), stdout)
}

fn cmd_render(args: RenderArgs, file: &FileConfig, stdout: &mut dyn Write) -> Result<(), Failure> {
    let format = parse_format(args.format, file)?;
    let options =
        ExportOptions { unlabeled_modifiers: args.unlabeled_modifiers || file.unlabeled_modifiers == Some(true) };
    let schema = optional_schema(args.schema, file)?;
    let graph = merge_corpus(load(&args.corpus, schema.as_ref())?)?;
    emit(args.out.as_deref(), &export_graph(&graph, format, options), stdout)
}
