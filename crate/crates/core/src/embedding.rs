//! Domain-specific word embeddings.
//!
//! [`train_cbow`] learns vectors with the continuous bag-of-words objective
//! and negative sampling. [`EmbeddingModel`] is immutable once built and
//! serves lookups, cosine similarity and nearest-neighbour queries. Models
//! are persisted in the plain word2vec text format.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering as AtomicOrdering};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dimensions: usize,
    /// Maximum distance between the predicted word and a context word.
    pub window: usize,
    /// Noise words drawn per positive example; 0 disables the output update for noise.
    pub negative_samples: usize,
    pub epochs: usize,
    pub min_count: usize,
    pub initial_learning_rate: f64,
    pub seed: u64,
    /// Frequent-word subsampling threshold; `None` keeps every occurrence.
    pub subsample: Option<f64>,
    /// Worker threads. Anything above 1 trains with unsynchronized shared
    /// updates and gives up bit-reproducibility.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dimensions: 200,
            window: 5,
            negative_samples: 5,
            epochs: 15,
            min_count: 5,
            initial_learning_rate: 0.025,
            seed: 1,
            subsample: None,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_owned()));
        if self.dimensions == 0 {
            return fail("dimensions must be at least 1");
        }
        if self.window == 0 {
            return fail("window must be at least 1");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.min_count == 0 {
            return fail("min_count must be at least 1");
        }
        if self.threads == 0 {
            return fail("threads must be at least 1");
        }
        if !(self.initial_learning_rate.is_finite() && self.initial_learning_rate > 0.0) {
            return fail("initial_learning_rate must be positive");
        }
        if let Some(t) = self.subsample {
            if !(t.is_finite() && t > 0.0) {
                return fail("subsample threshold must be positive");
            }
        }
        Ok(())
    }
}

/// Vocabulary plus one dense vector per word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    words: Vec<String>,
    counts: Option<Vec<u64>>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
    norms: Vec<f64>,
    dimensions: usize,
}

impl EmbeddingModel {
    /// Builds a model from a word list and a row-major matrix.
    ///
    /// Fails on duplicate words, a matrix of the wrong size, or non-finite entries.
    pub fn new(words: Vec<String>, vectors: Vec<f64>, dimensions: usize) -> Result<Self> {
        Self::with_counts(words, None, vectors, dimensions)
    }

    pub fn with_counts(
        words: Vec<String>,
        counts: Option<Vec<u64>>,
        vectors: Vec<f64>,
        dimensions: usize,
    ) -> Result<Self> {
        let malformed = |reason: String| Error::MalformedModelFile { line: 0, reason };
        if dimensions == 0 {
            return Err(malformed("dimensions must be at least 1".into()));
        }
        if vectors.len() != words.len() * dimensions {
            return Err(malformed(format!(
                "{} words need {} components, got {}",
                words.len(),
                words.len() * dimensions,
                vectors.len()
            )));
        }
        if let Some(c) = &counts {
            if c.len() != words.len() {
                return Err(malformed("count list does not match vocabulary".into()));
            }
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(malformed("non-finite vector component".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(malformed(format!("duplicate word {w:?}")));
            }
        }
        let norms = vectors
            .chunks_exact(dimensions)
            .map(|row| dot(row, row).sqrt())
            .collect();
        Ok(Self {
            words,
            counts,
            index,
            vectors,
            norms,
            dimensions,
        })
    }

    pub fn dimensions(&self) -> usize {
        self.dimensions
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Training frequencies, when known. Models read from disk carry none.
    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.vectors[index * self.dimensions..(index + 1) * self.dimensions]
    }

    pub(crate) fn norm(&self, index: usize) -> f64 {
        self.norms[index]
    }

    pub fn vector(&self, word: &str) -> Result<&[f64]> {
        self.index_of(word)
            .map(|i| self.row(i))
            .ok_or_else(|| Error::OutOfVocabulary(word.to_owned()))
    }

    /// The same model with every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let vectors = self.vectors.iter().map(|v| v * factor).collect();
        Self::with_counts(
            self.words.clone(),
            self.counts.clone(),
            vectors,
            self.dimensions,
        )
    }

    /// The `k` words closest to `word` by cosine, excluding `word` itself.
    ///
    /// Sorted by descending cosine, ties broken by the word.
    pub fn nearest(&self, word: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let query = self
            .index_of(word)
            .ok_or_else(|| Error::OutOfVocabulary(word.to_owned()))?;
        if self.norms[query] == 0.0 {
            return Err(Error::ZeroNormVector);
        }
        Ok(self.nearest_to_vector(self.row(query), k, |i| i == query))
    }

    /// The `k` words closest to an arbitrary vector, skipping words for
    /// which `exclude` returns true and words with zero-norm vectors.
    pub fn nearest_to_vector(
        &self,
        query: &[f64],
        k: usize,
        exclude: impl Fn(usize) -> bool,
    ) -> Vec<(String, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let query_norm = dot(query, query).sqrt();
        if query_norm == 0.0 {
            return Vec::new();
        }
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .filter(|&i| !exclude(i) && self.norms[i] > 0.0)
            .map(|i| {
                let c = dot(query, self.row(i)) / (query_norm * self.norms[i]);
                (i, c.clamp(-1.0, 1.0))
            })
            .collect();
        scored.sort_by(|a, b| rank_order(a.1, &self.words[a.0], b.1, &self.words[b.0]));
        scored.truncate(k);
        scored
            .into_iter()
            .map(|(i, c)| (self.words[i].clone(), c))
            .collect()
    }

    /// Writes the word2vec text format: a `"<words> <dims>"` header, then
    /// one `word v1 ... vd` line per word.
    ///
    /// Components use the shortest decimal form that reads back to the same
    /// `f64`, so a save/load round trip is exact.
    pub fn write_text<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "{} {}", self.len(), self.dimensions)?;
        for (i, word) in self.words.iter().enumerate() {
            write!(writer, "{word}")?;
            for v in self.row(i) {
                write!(writer, " {v}")?;
            }
            writeln!(writer)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let malformed = |line: usize, reason: String| Error::MalformedModelFile { line, reason };
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| malformed(1, "missing header".into()))?;
        let header = header?;
        let mut fields = header.split_whitespace();
        let mut parse_header = |name: &str| -> Result<usize> {
            fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| malformed(1, format!("header lacks a valid {name}")))
        };
        let n_words = parse_header("vocabulary size")?;
        let dims = parse_header("dimension count")?;
        if fields.next().is_some() {
            return Err(malformed(1, "header has extra fields".into()));
        }
        if dims == 0 {
            return Err(malformed(1, "dimension count is zero".into()));
        }

        let mut words = Vec::with_capacity(n_words);
        let mut vectors = Vec::with_capacity(n_words * dims);
        let mut seen = HashMap::with_capacity(n_words);
        for (n, line) in lines {
            let line = line?;
            let line_no = n + 1;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else {
                continue;
            };
            if words.len() == n_words {
                return Err(malformed(line_no, format!("more than {n_words} rows")));
            }
            if seen.insert(word.to_owned(), line_no).is_some() {
                return Err(malformed(line_no, format!("duplicate word {word:?}")));
            }
            let start = vectors.len();
            for part in parts {
                let v: f64 = part
                    .parse()
                    .map_err(|_| malformed(line_no, format!("bad component {part:?}")))?;
                if !v.is_finite() {
                    return Err(malformed(line_no, "non-finite component".into()));
                }
                vectors.push(v);
            }
            if vectors.len() - start != dims {
                return Err(malformed(
                    line_no,
                    format!("expected {dims} components, got {}", vectors.len() - start),
                ));
            }
            words.push(word.to_owned());
        }
        if words.len() != n_words {
            return Err(malformed(
                0,
                format!("header declares {n_words} words, found {}", words.len()),
            ));
        }
        Self::new(words, vectors, dims)
    }
}

pub fn save_model(model: &EmbeddingModel, path: impl AsRef<Path>) -> Result<()> {
    model.write_text(BufWriter::new(File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EmbeddingModel> {
    EmbeddingModel::read_text(BufReader::new(File::open(path)?))
}

/// Total order used for ranked word lists: higher score first, then by word.
pub(crate) fn rank_order(score_a: f64, word_a: &str, score_b: f64, word_b: &str) -> Ordering {
    score_b
        .partial_cmp(&score_a)
        .unwrap_or(Ordering::Equal)
        .then_with(|| word_a.cmp(word_b))
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(u.len(), v.len()));
    }
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNormVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Trains CBOW embeddings with negative sampling.
///
/// The context representation is the mean of the context word vectors, the
/// effective window is drawn uniformly from `1..=window` per position, noise
/// words follow the unigram distribution raised to 0.75, and the learning
/// rate decays linearly to `1e-4 * initial` over all epochs. With
/// `threads == 1` the result depends only on the corpus and the config.
pub fn train_cbow<I, S, T>(corpus: I, cfg: &TrainConfig) -> Result<EmbeddingModel>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[T]>,
    T: AsRef<str>,
{
    cfg.validate()?;
    let sentences: Vec<Vec<String>> = corpus
        .into_iter()
        .map(|s| s.as_ref().iter().map(|t| t.as_ref().to_owned()).collect())
        .collect();
    let vocab = Vocabulary::build(&sentences, cfg.min_count)?;
    let encoded: Vec<Vec<u32>> = sentences
        .iter()
        .map(|s| {
            s.iter()
                .filter_map(|w| vocab.index.get(w).copied())
                .collect()
        })
        .filter(|s: &Vec<u32>| !s.is_empty())
        .collect();

    let dims = cfg.dimensions;
    let n = vocab.words.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let input: Vec<f64> = (0..n * dims)
        .map(|_| (rng.gen::<f64>() - 0.5) / dims as f64)
        .collect();
    let output = vec![0.0; n * dims];

    let noise = WeightedIndex::new(vocab.counts.iter().map(|&c| (c as f64).powf(0.75)))
        .expect("vocabulary counts are positive");
    let keep_prob = keep_probabilities(&vocab.counts, cfg.subsample);
    let total_words: usize = encoded.iter().map(Vec::len).sum();
    let schedule = Schedule {
        initial: cfg.initial_learning_rate,
        total: (total_words * cfg.epochs) as f64,
    };
    let job = Job {
        cfg,
        noise: &noise,
        keep_prob: &keep_prob,
        schedule,
    };

    let input = if cfg.threads == 1 {
        let mut weights = PlainWeights {
            input,
            output,
            dims,
        };
        let mut processed = 0usize;
        let mut worker = Worker::new(dims, rng);
        for _ in 0..cfg.epochs {
            for sentence in &encoded {
                let alpha = schedule.rate(processed);
                processed += sentence.len();
                worker.train_sentence(&mut weights, sentence, alpha, &job);
            }
        }
        weights.input
    } else {
        train_shared(&encoded, input, output, &job, rng.gen())
    };

    EmbeddingModel::with_counts(vocab.words, Some(vocab.counts), input, dims)
}

struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Words reaching `min_count`, by descending frequency then alphabetically.
    fn build(sentences: &[Vec<String>], min_count: usize) -> Result<Self> {
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for word in sentences.iter().flatten() {
            *freq.entry(word.as_str()).or_default() += 1;
        }
        let mut kept: Vec<(&str, u64)> = freq
            .into_iter()
            .filter(|&(_, c)| c >= min_count as u64)
            .collect();
        if kept.is_empty() {
            return Err(Error::EmptyVocabulary { min_count });
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let words: Vec<String> = kept.iter().map(|(w, _)| (*w).to_owned()).collect();
        let counts = kept.iter().map(|&(_, c)| c).collect();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Ok(Self {
            words,
            counts,
            index,
        })
    }
}

fn keep_probabilities(counts: &[u64], threshold: Option<f64>) -> Vec<f64> {
    let Some(t) = threshold else {
        return vec![1.0; counts.len()];
    };
    let total: u64 = counts.iter().sum();
    let scaled = t * total as f64;
    counts
        .iter()
        .map(|&c| {
            let c = c as f64;
            (((c / scaled).sqrt() + 1.0) * scaled / c).min(1.0)
        })
        .collect()
}

#[derive(Clone, Copy)]
struct Schedule {
    initial: f64,
    total: f64,
}

impl Schedule {
    fn rate(&self, processed: usize) -> f64 {
        let progress = processed as f64 / (self.total + 1.0);
        self.initial * (1.0 - progress).max(1e-4)
    }
}

struct Job<'a> {
    cfg: &'a TrainConfig,
    noise: &'a WeightedIndex<f64>,
    keep_prob: &'a [f64],
    schedule: Schedule,
}

#[derive(Clone, Copy)]
enum Layer {
    Input,
    Output,
}

/// Access to the two parameter matrices during training.
trait Weights {
    fn load(&self, layer: Layer, row: usize, out: &mut [f64]);
    fn add_scaled(&mut self, layer: Layer, row: usize, delta: &[f64], scale: f64);
}

struct PlainWeights {
    input: Vec<f64>,
    output: Vec<f64>,
    dims: usize,
}

impl PlainWeights {
    fn matrix(&self, layer: Layer) -> &[f64] {
        match layer {
            Layer::Input => &self.input,
            Layer::Output => &self.output,
        }
    }
}

impl Weights for PlainWeights {
    fn load(&self, layer: Layer, row: usize, out: &mut [f64]) {
        let d = self.dims;
        out.copy_from_slice(&self.matrix(layer)[row * d..(row + 1) * d]);
    }

    fn add_scaled(&mut self, layer: Layer, row: usize, delta: &[f64], scale: f64) {
        let d = self.dims;
        let m = match layer {
            Layer::Input => &mut self.input,
            Layer::Output => &mut self.output,
        };
        for (w, x) in m[row * d..(row + 1) * d].iter_mut().zip(delta) {
            *w += scale * x;
        }
    }
}

/// Matrices shared between training threads. Updates are unsynchronized
/// read-modify-write sequences; concurrent writers may overwrite each other.
struct SharedWeights<'a> {
    input: &'a [AtomicU64],
    output: &'a [AtomicU64],
    dims: usize,
}

impl SharedWeights<'_> {
    fn matrix(&self, layer: Layer) -> &[AtomicU64] {
        match layer {
            Layer::Input => self.input,
            Layer::Output => self.output,
        }
    }
}

impl Weights for SharedWeights<'_> {
    fn load(&self, layer: Layer, row: usize, out: &mut [f64]) {
        let d = self.dims;
        for (o, w) in out
            .iter_mut()
            .zip(&self.matrix(layer)[row * d..(row + 1) * d])
        {
            *o = f64::from_bits(w.load(AtomicOrdering::Relaxed));
        }
    }

    fn add_scaled(&mut self, layer: Layer, row: usize, delta: &[f64], scale: f64) {
        let d = self.dims;
        for (w, x) in self.matrix(layer)[row * d..(row + 1) * d].iter().zip(delta) {
            let current = f64::from_bits(w.load(AtomicOrdering::Relaxed));
            w.store((current + scale * x).to_bits(), AtomicOrdering::Relaxed);
        }
    }
}

fn train_shared(
    encoded: &[Vec<u32>],
    input: Vec<f64>,
    output: Vec<f64>,
    job: &Job<'_>,
    base_seed: u64,
) -> Vec<f64> {
    let to_atomic = |m: Vec<f64>| -> Vec<AtomicU64> {
        m.into_iter().map(|v| AtomicU64::new(v.to_bits())).collect()
    };
    let input = to_atomic(input);
    let output = to_atomic(output);
    let processed = AtomicUsize::new(0);
    let dims = job.cfg.dimensions;
    let threads = job.cfg.threads.min(encoded.len().max(1));
    let shard_len = encoded.len().div_ceil(threads).max(1);

    std::thread::scope(|scope| {
        for (t, shard) in encoded.chunks(shard_len).enumerate() {
            let input = &input;
            let output = &output;
            let processed = &processed;
            scope.spawn(move || {
                let mut weights = SharedWeights {
                    input,
                    output,
                    dims,
                };
                let rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(t as u64));
                let mut worker = Worker::new(dims, rng);
                for _ in 0..job.cfg.epochs {
                    for sentence in shard {
                        let done = processed.fetch_add(sentence.len(), AtomicOrdering::Relaxed);
                        let alpha = job.schedule.rate(done);
                        worker.train_sentence(&mut weights, sentence, alpha, job);
                    }
                }
            });
        }
    });

    input
        .into_iter()
        .map(|w| f64::from_bits(w.into_inner()))
        .collect()
}

/// Per-thread RNG and scratch buffers.
struct Worker {
    rng: ChaCha8Rng,
    hidden: Vec<f64>,
    hidden_grad: Vec<f64>,
    row: Vec<f64>,
    kept: Vec<u32>,
    context: Vec<u32>,
}

impl Worker {
    fn new(dims: usize, rng: ChaCha8Rng) -> Self {
        Self {
            rng,
            hidden: vec![0.0; dims],
            hidden_grad: vec![0.0; dims],
            row: vec![0.0; dims],
            kept: Vec::new(),
            context: Vec::new(),
        }
    }

    fn train_sentence<W: Weights>(
        &mut self,
        weights: &mut W,
        sentence: &[u32],
        alpha: f64,
        job: &Job<'_>,
    ) {
        self.kept.clear();
        for &w in sentence {
            let p = job.keep_prob[w as usize];
            if p >= 1.0 || self.rng.gen::<f64>() < p {
                self.kept.push(w);
            }
        }
        let window = job.cfg.window;
        for pos in 0..self.kept.len() {
            let reduce = self.rng.gen_range(0..window);
            let span = window - reduce;
            let lo = pos.saturating_sub(span);
            let hi = (pos + span).min(self.kept.len() - 1);
            self.context.clear();
            self.context
                .extend((lo..=hi).filter(|&i| i != pos).map(|i| self.kept[i]));
            if self.context.is_empty() {
                continue;
            }
            let target = self.kept[pos];
            self.step(weights, target, alpha, job);
        }
    }

    fn step<W: Weights>(&mut self, weights: &mut W, target: u32, alpha: f64, job: &Job<'_>) {
        self.hidden.iter_mut().for_each(|h| *h = 0.0);
        for &c in &self.context {
            weights.load(Layer::Input, c as usize, &mut self.row);
            for (h, r) in self.hidden.iter_mut().zip(&self.row) {
                *h += r;
            }
        }
        let scale = 1.0 / self.context.len() as f64;
        self.hidden.iter_mut().for_each(|h| *h *= scale);
        self.hidden_grad.iter_mut().for_each(|g| *g = 0.0);

        for d in 0..=job.cfg.negative_samples {
            let (word, label) = if d == 0 {
                (target, 1.0)
            } else {
                let w = job.noise.sample(&mut self.rng) as u32;
                if w == target {
                    continue;
                }
                (w, 0.0)
            };
            weights.load(Layer::Output, word as usize, &mut self.row);
            let f = dot(&self.hidden, &self.row);
            let g = (label - sigmoid(f)) * alpha;
            for (e, r) in self.hidden_grad.iter_mut().zip(&self.row) {
                *e += g * r;
            }
            weights.add_scaled(Layer::Output, word as usize, &self.hidden, g);
        }
        for &c in &self.context {
            weights.add_scaled(Layer::Input, c as usize, &self.hidden_grad, 1.0);
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
