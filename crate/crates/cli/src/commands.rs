//! One function per subcommand. Each checks its inputs and outputs before
//! touching the filesystem, then reads, computes and writes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use suaex::attention::{read_annotated, write_annotated};
use suaex::classify::{read_assignments, write_assignments, write_lexicon};
use suaex::corpus::{read_line_corpus, read_test_data, write_line_corpus};
use suaex::eval::{time_stage, write_eval_report, write_plot_data, write_timing_report, Stage};
use suaex::{
    assign_all, evaluate, expand_references, extract_aspects, filter_corpus, load_model,
    runtime_report, split_sentences, train_cbow, AttentionScorer, EmbeddingModel, KeywordFilter,
    ReferenceGroup, Sentence,
};

use crate::config::PipelineConfig;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Filter,
    Train,
    Expand,
    Annotate,
    Classify,
    Aspects,
    Eval,
    Bench,
    Pipeline,
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Config(format!("paths.{key} is not set")))
}

fn existing<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    let p = required(path, key)?;
    if !p.is_file() {
        return Err(CliError::Config(format!(
            "paths.{key}: {} does not exist",
            p.display()
        )));
    }
    Ok(p)
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    let io = |source| CliError::Io {
        path: path.to_owned(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    File::create(path).map(BufWriter::new).map_err(io)
}

/// The corpus `train` reads: the filtered one when configured.
fn training_corpus(cfg: &PipelineConfig) -> (&Option<PathBuf>, &'static str) {
    if cfg.paths.filtered_corpus.is_some() {
        (&cfg.paths.filtered_corpus, "filtered_corpus")
    } else {
        (&cfg.paths.raw_corpus, "raw_corpus")
    }
}

/// Checks everything a command needs before any output is created.
pub fn check(command: Command, cfg: &PipelineConfig) -> Result<(), CliError> {
    let p = &cfg.paths;
    match command {
        Command::Filter => {
            existing(&p.raw_corpus, "raw_corpus")?;
            required(&p.filtered_corpus, "filtered_corpus")?;
        }
        Command::Train => {
            let (corpus, key) = training_corpus(cfg);
            existing(corpus, key)?;
            required(&p.model, "model")?;
        }
        Command::Expand => {
            existing(&p.model, "model")?;
            required(&p.groups, "groups")?;
        }
        Command::Annotate => {
            existing(&p.model, "model")?;
            existing(&p.test_data, "test_data")?;
            required(&p.annotated, "annotated")?;
        }
        Command::Classify => {
            existing(&p.annotated, "annotated")?;
            required(&p.assignments, "assignments")?;
        }
        Command::Aspects => {
            existing(&p.annotated, "annotated")?;
            existing(&p.assignments, "assignments")?;
            required(&p.lexicon, "lexicon")?;
        }
        Command::Eval => {
            existing(&p.assignments, "assignments")?;
            existing(&p.test_data, "test_data")?;
            required(&p.report, "report")?;
        }
        Command::Bench => {
            let (corpus, key) = training_corpus(cfg);
            if p.filtered_corpus.is_some() && !corpus.as_deref().is_some_and(Path::is_file) {
                existing(&p.raw_corpus, "raw_corpus")?;
            } else {
                existing(corpus, key)?;
            }
            existing(&p.test_data, "test_data")?;
            required(&p.timing, "timing")?;
        }
        Command::Pipeline => {
            existing(&p.raw_corpus, "raw_corpus")?;
            existing(&p.test_data, "test_data")?;
            required(&p.model, "model")?;
            required(&p.annotated, "annotated")?;
            required(&p.assignments, "assignments")?;
            required(&p.report, "report")?;
        }
    }
    Ok(())
}

pub fn run(command: Command, cfg: &PipelineConfig) -> Result<(), CliError> {
    check(command, cfg)?;
    match command {
        Command::Filter => filter(cfg),
        Command::Train => train(cfg),
        Command::Expand => expand(cfg),
        Command::Annotate => annotate(cfg),
        Command::Classify => classify(cfg),
        Command::Aspects => aspects(cfg),
        Command::Eval => eval(cfg),
        Command::Bench => bench(cfg),
        Command::Pipeline => pipeline(cfg),
    }
}

/// Filter, train, expand, annotate, classify, aspects and eval in turn,
/// each through its files. Optional stages run when their path is set.
fn pipeline(cfg: &PipelineConfig) -> Result<(), CliError> {
    let p = &cfg.paths;
    if p.filtered_corpus.is_some() {
        filter(cfg)?;
    }
    train(cfg)?;
    if p.groups.is_some() {
        expand(cfg)?;
    }
    annotate(cfg)?;
    classify(cfg)?;
    if p.lexicon.is_some() {
        aspects(cfg)?;
    }
    eval(cfg)
}

fn filter(cfg: &PipelineConfig) -> Result<(), CliError> {
    let docs = read_line_corpus(open(required(&cfg.paths.raw_corpus, "raw_corpus")?)?)?;
    let keywords = KeywordFilter::new(&cfg.keywords, cfg.preprocess.stemmer);
    let kept: Vec<_> = filter_corpus(docs, &keywords).collect();
    let out = create(required(&cfg.paths.filtered_corpus, "filtered_corpus")?)?;
    write_line_corpus(out, &kept)?;
    Ok(())
}

fn corpus_tokens(cfg: &PipelineConfig, path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let docs = read_line_corpus(open(path)?)?;
    Ok(docs
        .iter()
        .flat_map(split_sentences)
        .map(|s| cfg.preprocess.process(&s.original_text))
        .filter(|t| !t.is_empty())
        .collect())
}

fn train(cfg: &PipelineConfig) -> Result<(), CliError> {
    let (corpus, key) = training_corpus(cfg);
    let tokens = corpus_tokens(cfg, required(corpus, key)?)?;
    let model = train_cbow(&tokens, &cfg.train)?;
    model.write_text(create(required(&cfg.paths.model, "model")?)?)?;
    Ok(())
}

/// The configured groups, expanded with nearest neighbours when `expand_k > 0`.
pub fn reference_groups(
    cfg: &PipelineConfig,
    model: &EmbeddingModel,
) -> Result<Vec<ReferenceGroup>, CliError> {
    if cfg.expand_k == 0 {
        return Ok(cfg.groups.clone());
    }
    cfg.groups
        .iter()
        .map(|g| Ok(expand_references(model, g, cfg.expand_k)?))
        .collect()
}

fn expand(cfg: &PipelineConfig) -> Result<(), CliError> {
    let model = load_model(required(&cfg.paths.model, "model")?)?;
    let groups = reference_groups(cfg, &model)?;
    let mut out = create(required(&cfg.paths.groups, "groups")?)?;
    for g in &groups {
        writeln!(out, "{}\t{}", g.category, g.words.join(" ")).map_err(suaex::Error::from)?;
    }
    out.flush().map_err(suaex::Error::from)?;
    Ok(())
}

fn test_sentences(cfg: &PipelineConfig, reader: impl BufRead) -> Result<Vec<Sentence>, CliError> {
    let mut sentences = read_test_data(reader)?;
    for s in &mut sentences {
        s.tokens = cfg.preprocess.process(&s.original_text);
    }
    Ok(sentences)
}

fn annotate(cfg: &PipelineConfig) -> Result<(), CliError> {
    let model = load_model(required(&cfg.paths.model, "model")?)?;
    let sentences = test_sentences(cfg, open(required(&cfg.paths.test_data, "test_data")?)?)?;
    let groups = reference_groups(cfg, &model)?;
    let scorer = AttentionScorer::new(&model, &groups, cfg.mode, cfg.combine)?;
    let annotated = scorer.annotate_all(&sentences, cfg.threads);
    write_annotated(
        create(required(&cfg.paths.annotated, "annotated")?)?,
        &annotated,
    )?;
    Ok(())
}

fn classify(cfg: &PipelineConfig) -> Result<(), CliError> {
    let annotated = read_annotated(open(required(&cfg.paths.annotated, "annotated")?)?)?;
    let assignments = assign_all(&annotated, cfg.aggregation, &cfg.categories())?;
    write_assignments(
        create(required(&cfg.paths.assignments, "assignments")?)?,
        &assignments,
    )?;
    Ok(())
}

fn aspects(cfg: &PipelineConfig) -> Result<(), CliError> {
    let annotated = read_annotated(open(required(&cfg.paths.annotated, "annotated")?)?)?;
    let assignments = read_assignments(open(required(&cfg.paths.assignments, "assignments")?)?)?;
    let lexicon = extract_aspects(
        &annotated,
        &assignments,
        &cfg.categories(),
        cfg.top_n,
        cfg.aspect_weighting,
    )?;
    write_lexicon(create(required(&cfg.paths.lexicon, "lexicon")?)?, &lexicon)?;
    Ok(())
}

fn eval(cfg: &PipelineConfig) -> Result<(), CliError> {
    let assignments = read_assignments(open(required(&cfg.paths.assignments, "assignments")?)?)?;
    let gold = read_test_data(open(required(&cfg.paths.test_data, "test_data")?)?)?;
    let report = evaluate(&assignments, &gold, &cfg.categories(), &cfg.unions)?;
    write_eval_report(create(required(&cfg.paths.report, "report")?)?, &report)?;
    if let Some(plot) = &cfg.paths.plot {
        write_plot_data(create(plot)?, &report)?;
    }
    Ok(())
}

/// Runs every stage in memory under the stage timer and writes the timing
/// report. Evaluation is timed only when every test sentence has a label.
fn bench(cfg: &PipelineConfig) -> Result<(), CliError> {
    let (corpus, key) = training_corpus(cfg);
    let corpus_path = match corpus.as_deref() {
        Some(p) if p.is_file() => p,
        _ if key == "filtered_corpus" => required(&cfg.paths.raw_corpus, "raw_corpus")?,
        _ => required(corpus, key)?,
    };
    let test_path = required(&cfg.paths.test_data, "test_data")?;
    let mut timings = Vec::new();

    let (tokens, sentences) = time_stage(
        &mut timings,
        Stage::Preprocess,
        || -> Result<_, CliError> {
            Ok((
                corpus_tokens(cfg, corpus_path)?,
                test_sentences(cfg, open(test_path)?)?,
            ))
        },
        |r| r.as_ref().map_or(0, |(t, s)| t.len() + s.len()),
    )?;
    let model = time_stage(
        &mut timings,
        Stage::Train,
        || train_cbow(&tokens, &cfg.train),
        |_| tokens.len(),
    )?;
    let groups = reference_groups(cfg, &model)?;
    let scorer = AttentionScorer::new(&model, &groups, cfg.mode, cfg.combine)?;
    let annotated = time_stage(
        &mut timings,
        Stage::Annotate,
        || scorer.annotate_all(&sentences, cfg.threads),
        Vec::len,
    );
    let categories = cfg.categories();
    let assignments = time_stage(
        &mut timings,
        Stage::Classify,
        || assign_all(&annotated, cfg.aggregation, &categories),
        |r| r.as_ref().map_or(0, Vec::len),
    )?;
    if sentences.iter().all(|s| s.gold_category.is_some()) {
        time_stage(
            &mut timings,
            Stage::Evaluate,
            || evaluate(&assignments, &sentences, &categories, &cfg.unions),
            |_| sentences.len(),
        )?;
    }
    let report = runtime_report(&timings);
    write_timing_report(create(required(&cfg.paths.timing, "timing")?)?, &report)?;
    Ok(())
}
