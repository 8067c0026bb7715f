//! Pipeline configuration file.
//!
//! The file is TOML. Every section and key is optional except the reference
//! groups; relative paths are resolved against the directory holding the
//! config file.
//!
//! ```toml
//! seed = 1
//! threads = 1
//!
//! [paths]
//! raw_corpus = "corpus.txt"          # one review per line
//! filtered_corpus = "out/filtered.txt"
//! test_data = "test.tsv"             # sentence_text<TAB>gold_category
//! model = "out/model.txt"
//! groups = "out/groups.tsv"
//! annotated = "out/output1.tsv"
//! assignments = "out/output2.tsv"
//! lexicon = "out/lexicon.tsv"
//! report = "out/report.tsv"
//! plot = "out/plot.csv"
//! timing = "out/timing.tsv"
//!
//! [filter]
//! keywords = ["restaurant", "food"]
//!
//! [preprocess]
//! lowercase = true
//! strip_punctuation = true
//! remove_stopwords = true
//! stopwords = "stopwords.txt"        # omit for the built-in list
//! stemmer = "none"                   # or "snowball"
//! min_token_length = 1
//!
//! [train]
//! dimensions = 200
//! window = 5
//! negative_samples = 5
//! epochs = 15
//! min_count = 5
//! learning_rate = 0.025
//! subsample = 1e-3                   # omit to keep every occurrence
//!
//! [attention]
//! mode = "direct"                    # or "contextual"
//! context_weight = 0.5
//! group_combine = "centroid"         # or "max", "mean"
//! expand_k = 0
//!
//! [classify]
//! aggregation = "mean"               # or "max"
//! top_n = 50
//! aspect_weighting = "attention"     # or "frequency"
//!
//! [[groups]]
//! category = "food"
//! words = ["food", "pizza"]
//!
//! [[eval.unions]]
//! name = "taste+smell"
//! members = ["taste", "smell"]
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use suaex::corpus::parse_stopwords;
use suaex::{
    AggregationMode, AspectWeighting, GroupCombine, LabelUnion, PreprocessConfig, ReferenceGroup,
    SimilarityMode, StemmerKind, TrainConfig,
};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    seed: u64,
    threads: usize,
    paths: RawPaths,
    filter: RawFilter,
    preprocess: RawPreprocess,
    train: RawTrain,
    attention: RawAttention,
    classify: RawClassify,
    groups: Vec<RawGroup>,
    eval: RawEval,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            threads: 1,
            paths: RawPaths::default(),
            filter: RawFilter::default(),
            preprocess: RawPreprocess::default(),
            train: RawTrain::default(),
            attention: RawAttention::default(),
            classify: RawClassify::default(),
            groups: Vec::new(),
            eval: RawEval::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawPaths {
    raw_corpus: Option<PathBuf>,
    filtered_corpus: Option<PathBuf>,
    test_data: Option<PathBuf>,
    model: Option<PathBuf>,
    groups: Option<PathBuf>,
    annotated: Option<PathBuf>,
    assignments: Option<PathBuf>,
    lexicon: Option<PathBuf>,
    report: Option<PathBuf>,
    plot: Option<PathBuf>,
    timing: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawFilter {
    keywords: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawStemmer {
    #[default]
    None,
    Snowball,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawPreprocess {
    lowercase: bool,
    strip_punctuation: bool,
    remove_stopwords: bool,
    stopwords: Option<PathBuf>,
    stemmer: RawStemmer,
    min_token_length: usize,
}

impl Default for RawPreprocess {
    fn default() -> Self {
        let d = PreprocessConfig::default();
        Self {
            lowercase: d.lowercase,
            strip_punctuation: d.strip_punctuation,
            remove_stopwords: d.remove_stopwords,
            stopwords: None,
            stemmer: RawStemmer::None,
            min_token_length: d.min_token_length,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawTrain {
    dimensions: usize,
    window: usize,
    negative_samples: usize,
    epochs: usize,
    min_count: usize,
    learning_rate: f64,
    subsample: Option<f64>,
}

impl Default for RawTrain {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            dimensions: d.dimensions,
            window: d.window,
            negative_samples: d.negative_samples,
            epochs: d.epochs,
            min_count: d.min_count,
            learning_rate: d.initial_learning_rate,
            subsample: d.subsample,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawMode {
    #[default]
    Direct,
    Contextual,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawCombine {
    #[default]
    Centroid,
    Max,
    Mean,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawAttention {
    mode: RawMode,
    context_weight: f64,
    group_combine: RawCombine,
    expand_k: usize,
}

impl Default for RawAttention {
    fn default() -> Self {
        Self {
            mode: RawMode::Direct,
            context_weight: 0.5,
            group_combine: RawCombine::Centroid,
            expand_k: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawAggregation {
    Max,
    #[default]
    Mean,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawWeighting {
    #[default]
    Attention,
    Frequency,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawClassify {
    aggregation: RawAggregation,
    top_n: usize,
    aspect_weighting: RawWeighting,
}

impl Default for RawClassify {
    fn default() -> Self {
        Self {
            aggregation: RawAggregation::Mean,
            top_n: 50,
            aspect_weighting: RawWeighting::Attention,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    category: String,
    words: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawEval {
    unions: Vec<RawUnion>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUnion {
    name: String,
    members: Vec<String>,
}

/// File locations, already resolved against the config directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Paths {
    pub raw_corpus: Option<PathBuf>,
    pub filtered_corpus: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub groups: Option<PathBuf>,
    pub annotated: Option<PathBuf>,
    pub assignments: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub timing: Option<PathBuf>,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub keywords: Vec<String>,
    pub preprocess: PreprocessConfig,
    pub train: TrainConfig,
    pub mode: SimilarityMode,
    pub combine: GroupCombine,
    pub expand_k: usize,
    pub aggregation: AggregationMode,
    pub top_n: usize,
    pub aspect_weighting: AspectWeighting,
    pub groups: Vec<ReferenceGroup>,
    pub unions: Vec<LabelUnion>,
    pub threads: usize,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn invalid(e: suaex::Error) -> CliError {
    CliError::Config(e.to_string())
}

impl PipelineConfig {
    pub fn load(path: &Path, overrides: Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, overrides)
    }

    /// Parses and validates config text; relative paths are joined to `base`.
    pub fn parse(text: &str, base: &Path, overrides: Overrides) -> Result<Self, CliError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| config_error(e.message().to_owned()))?;
        let resolve =
            |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });

        let threads = overrides.threads.unwrap_or(raw.threads);
        if threads == 0 {
            return Err(config_error("threads must be at least 1"));
        }
        let seed = overrides.seed.unwrap_or(raw.seed);

        let stopword_list = match resolve(raw.preprocess.stopwords) {
            Some(p) => parse_stopwords(&std::fs::read_to_string(&p).map_err(|e| {
                config_error(format!("cannot read stopword list {}: {e}", p.display()))
            })?),
            None => PreprocessConfig::default().stopword_list,
        };
        let preprocess = PreprocessConfig {
            lowercase: raw.preprocess.lowercase,
            strip_punctuation: raw.preprocess.strip_punctuation,
            remove_stopwords: raw.preprocess.remove_stopwords,
            stopword_list,
            stemmer: match raw.preprocess.stemmer {
                RawStemmer::None => StemmerKind::None,
                RawStemmer::Snowball => StemmerKind::SuffixStripping,
            },
            min_token_length: raw.preprocess.min_token_length,
        };
        preprocess.validate().map_err(invalid)?;

        let train = TrainConfig {
            dimensions: raw.train.dimensions,
            window: raw.train.window,
            negative_samples: raw.train.negative_samples,
            epochs: raw.train.epochs,
            min_count: raw.train.min_count,
            initial_learning_rate: raw.train.learning_rate,
            seed,
            subsample: raw.train.subsample,
            threads,
        };
        train.validate().map_err(invalid)?;

        let mode = match raw.attention.mode {
            RawMode::Direct => SimilarityMode::Direct,
            RawMode::Contextual => SimilarityMode::Contextual {
                context_weight: raw.attention.context_weight,
            },
        };
        mode.validate().map_err(invalid)?;

        if raw.groups.is_empty() {
            return Err(config_error("at least one [[groups]] entry is required"));
        }
        let mut seen = HashSet::new();
        let mut groups = Vec::with_capacity(raw.groups.len());
        for g in raw.groups {
            if !seen.insert(g.category.clone()) {
                return Err(config_error(format!("duplicate category {:?}", g.category)));
            }
            let group = ReferenceGroup::new(g.category, g.words).map_err(invalid)?;
            groups.push(group.normalized(&preprocess).map_err(invalid)?);
        }

        let mut unions = Vec::with_capacity(raw.eval.unions.len());
        for u in raw.eval.unions {
            if let Some(m) = u.members.iter().find(|m| !seen.contains(*m)) {
                return Err(config_error(format!(
                    "union {:?} names unknown category {m:?}",
                    u.name
                )));
            }
            unions.push(LabelUnion {
                name: u.name,
                members: u.members,
            });
        }

        let p = raw.paths;
        Ok(Self {
            paths: Paths {
                raw_corpus: resolve(p.raw_corpus),
                filtered_corpus: resolve(p.filtered_corpus),
                test_data: resolve(p.test_data),
                model: resolve(p.model),
                groups: resolve(p.groups),
                annotated: resolve(p.annotated),
                assignments: resolve(p.assignments),
                lexicon: resolve(p.lexicon),
                report: resolve(p.report),
                plot: resolve(p.plot),
                timing: resolve(p.timing),
            },
            keywords: raw.filter.keywords,
            preprocess,
            train,
            mode,
            combine: match raw.attention.group_combine {
                RawCombine::Centroid => GroupCombine::Centroid,
                RawCombine::Max => GroupCombine::Max,
                RawCombine::Mean => GroupCombine::Mean,
            },
            expand_k: raw.attention.expand_k,
            aggregation: match raw.classify.aggregation {
                RawAggregation::Max => AggregationMode::Max,
                RawAggregation::Mean => AggregationMode::Mean,
            },
            top_n: raw.classify.top_n,
            aspect_weighting: match raw.classify.aspect_weighting {
                RawWeighting::Attention => AspectWeighting::AttentionMass,
                RawWeighting::Frequency => AspectWeighting::Frequency,
            },
            groups,
            unions,
            threads,
        })
    }

    pub fn categories(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.category.clone()).collect()
    }
}
