//! Similarity as attention.
//!
//! Every token of a sentence is scored against each reference group by
//! cosine similarity in embedding space; a softmax over the in-vocabulary
//! tokens turns those scores into attention weights. Out-of-vocabulary
//! tokens are masked: similarity `-inf`, attention exactly 0.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::corpus::{PreprocessConfig, Sentence};
use crate::embedding::{dot, EmbeddingModel};
use crate::error::{Error, Result};

/// A category name and the words that stand for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceGroup {
    pub category: String,
    pub words: Vec<String>,
}

impl ReferenceGroup {
    pub fn new<S: Into<String>>(
        category: impl Into<String>,
        words: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let category = category.into();
        let words: Vec<String> = words.into_iter().map(Into::into).collect();
        if category.is_empty() {
            return Err(Error::InvalidConfig(
                "reference group without a category name".into(),
            ));
        }
        if words.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "reference group {category:?} has no words"
            )));
        }
        Ok(Self { category, words })
    }

    /// Runs every reference word through the corpus preprocessing, dropping
    /// duplicates and words that normalize away.
    pub fn normalized(&self, cfg: &PreprocessConfig) -> Result<Self> {
        let mut words: Vec<String> = Vec::new();
        for w in &self.words {
            if let Some(n) = cfg.normalize_token(w) {
                if !words.contains(&n) {
                    words.push(n);
                }
            }
        }
        if words.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "every reference word of {:?} is removed by preprocessing",
                self.category
            )));
        }
        Ok(Self {
            category: self.category.clone(),
            words,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SimilarityMode {
    /// Cosine between the token and the group representation.
    #[default]
    Direct,
    /// Cosine between the token and `w * group + (1 - w) * sentence_centroid`.
    Contextual { context_weight: f64 },
}

impl SimilarityMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SimilarityMode::Direct => Ok(()),
            SimilarityMode::Contextual { context_weight }
                if (0.0..=1.0).contains(&context_weight) =>
            {
                Ok(())
            }
            SimilarityMode::Contextual { context_weight } => Err(Error::InvalidConfig(format!(
                "context weight {context_weight} is outside [0, 1]"
            ))),
        }
    }
}

/// How the vectors of a multi-word group are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupCombine {
    /// Cosine against the mean of the group vectors.
    #[default]
    Centroid,
    /// Largest cosine against any single group word.
    Max,
    /// Mean of the cosines against each group word.
    Mean,
}

/// Per-token scores of one sentence for one category.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryScores {
    pub category: String,
    /// `-inf` at out-of-vocabulary positions.
    pub similarities: Vec<f64>,
    pub attentions: Vec<f64>,
    pub oov_mask: Vec<bool>,
}

impl CategoryScores {
    /// Position of the highest attention, first one on ties.
    pub fn argmax_attention(&self) -> Option<usize> {
        argmax(&self.attentions, &self.oov_mask)
    }

    pub fn argmax_similarity(&self) -> Option<usize> {
        argmax(&self.similarities, &self.oov_mask)
    }
}

fn argmax(values: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &oov)) in values.iter().zip(mask).enumerate() {
        if oov {
            continue;
        }
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// A test sentence with similarity and attention values for every category.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSentence {
    pub sentence: Sentence,
    /// In reference-group order.
    pub per_category: Vec<CategoryScores>,
    /// Set when the sentence has no in-vocabulary token.
    pub unclassifiable: bool,
}

impl AnnotatedSentence {
    pub fn category(&self, name: &str) -> Option<&CategoryScores> {
        self.per_category.iter().find(|c| c.category == name)
    }
}

/// Softmax over the non-masked similarities; masked positions get 0.
pub fn attention_weights(similarities: &[f64], oov_mask: &[bool]) -> Result<Vec<f64>> {
    if similarities.len() != oov_mask.len() {
        return Err(Error::DimensionMismatch(similarities.len(), oov_mask.len()));
    }
    let max = similarities
        .iter()
        .zip(oov_mask)
        .filter(|(_, &oov)| !oov)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllTokensOov);
    }
    let mut weights: Vec<f64> = similarities
        .iter()
        .zip(oov_mask)
        .map(|(&s, &oov)| if oov { 0.0 } else { (s - max).exp() })
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(weights)
}

/// A group resolved against a model: in-vocabulary rows and their centroid.
#[derive(Debug, Clone)]
struct PreparedGroup {
    category: String,
    rows: Vec<usize>,
    centroid: Vec<f64>,
}

impl PreparedGroup {
    fn new(model: &EmbeddingModel, group: &ReferenceGroup) -> Result<Self> {
        let rows: Vec<usize> = group
            .words
            .iter()
            .filter_map(|w| model.index_of(w))
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptyGroupInVocabulary(group.category.clone()));
        }
        let centroid = mean_of_rows(model, &rows);
        Ok(Self {
            category: group.category.clone(),
            rows,
            centroid,
        })
    }
}

fn mean_of_rows(model: &EmbeddingModel, rows: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; model.dimensions()];
    for &r in rows {
        for (a, v) in acc.iter_mut().zip(model.row(r)) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

fn blend(group: &[f64], context: &[f64], weight: f64) -> Vec<f64> {
    group
        .iter()
        .zip(context)
        .map(|(g, c)| weight * g + (1.0 - weight) * c)
        .collect()
}

/// Cosine of a token row against a vector; `None` when either norm is zero.
fn token_cosine(
    model: &EmbeddingModel,
    token: usize,
    reference: &[f64],
    reference_norm: f64,
) -> Option<f64> {
    let token_norm = model.norm(token);
    if token_norm == 0.0 || reference_norm == 0.0 {
        return None;
    }
    Some((dot(model.row(token), reference) / (token_norm * reference_norm)).clamp(-1.0, 1.0))
}

/// Reference vectors for one group, with the sentence context already mixed in.
struct References {
    vectors: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl References {
    fn new(vectors: Vec<Vec<f64>>) -> Self {
        let norms = vectors.iter().map(|v| dot(v, v).sqrt()).collect();
        Self { vectors, norms }
    }

    fn score(&self, model: &EmbeddingModel, token: usize, combine: GroupCombine) -> Option<f64> {
        let mut cosines = self
            .vectors
            .iter()
            .zip(&self.norms)
            .map(|(v, &n)| token_cosine(model, token, v, n));
        match combine {
            GroupCombine::Centroid => cosines.next().flatten(),
            GroupCombine::Max => cosines.try_fold(f64::NEG_INFINITY, |m, c| c.map(|c| m.max(c))),
            GroupCombine::Mean => {
                let n = self.vectors.len() as f64;
                cosines
                    .try_fold(0.0, |s, c| c.map(|c| s + c))
                    .map(|s| s / n)
            }
        }
    }
}

fn references(
    model: &EmbeddingModel,
    group: &PreparedGroup,
    mode: SimilarityMode,
    combine: GroupCombine,
    sentence_centroid: Option<&[f64]>,
) -> References {
    let bases: Vec<&[f64]> = match combine {
        GroupCombine::Centroid => vec![&group.centroid],
        GroupCombine::Max | GroupCombine::Mean => {
            group.rows.iter().map(|&r| model.row(r)).collect()
        }
    };
    let vectors = match (mode, sentence_centroid) {
        (SimilarityMode::Contextual { context_weight }, Some(ctx)) if context_weight < 1.0 => bases
            .into_iter()
            .map(|b| blend(b, ctx, context_weight))
            .collect(),
        _ => bases.into_iter().map(<[f64]>::to_vec).collect(),
    };
    References::new(vectors)
}

/// Similarity of `word` to a reference group.
///
/// In contextual mode the caller supplies the sentence centroid; without one
/// the group representation is used unmixed, which equals direct mode.
pub fn group_similarity(
    model: &EmbeddingModel,
    word: &str,
    group: &ReferenceGroup,
    mode: SimilarityMode,
    combine: GroupCombine,
    sentence_centroid: Option<&[f64]>,
) -> Result<f64> {
    mode.validate()?;
    let token = model
        .index_of(word)
        .ok_or_else(|| Error::OutOfVocabulary(word.to_owned()))?;
    let prepared = PreparedGroup::new(model, group)?;
    if let Some(ctx) = sentence_centroid {
        if ctx.len() != model.dimensions() {
            return Err(Error::DimensionMismatch(ctx.len(), model.dimensions()));
        }
    }
    references(model, &prepared, mode, combine, sentence_centroid)
        .score(model, token, combine)
        .ok_or(Error::ZeroNormVector)
}

/// Scores sentences against a fixed set of reference groups.
#[derive(Debug, Clone)]
pub struct AttentionScorer<'m> {
    model: &'m EmbeddingModel,
    groups: Vec<PreparedGroup>,
    mode: SimilarityMode,
    combine: GroupCombine,
}

impl<'m> AttentionScorer<'m> {
    /// Fails if there are no groups, a category repeats, or a group has no
    /// word in the vocabulary.
    pub fn new(
        model: &'m EmbeddingModel,
        groups: &[ReferenceGroup],
        mode: SimilarityMode,
        combine: GroupCombine,
    ) -> Result<Self> {
        mode.validate()?;
        if groups.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one reference group is required".into(),
            ));
        }
        for (i, g) in groups.iter().enumerate() {
            if groups[..i].iter().any(|h| h.category == g.category) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate category {:?}",
                    g.category
                )));
            }
        }
        let groups = groups
            .iter()
            .map(|g| PreparedGroup::new(model, g))
            .collect::<Result<_>>()?;
        Ok(Self {
            model,
            groups,
            mode,
            combine,
        })
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|g| g.category.as_str())
    }

    pub fn annotate(&self, sentence: &Sentence) -> AnnotatedSentence {
        let rows: Vec<Option<usize>> = sentence
            .tokens
            .iter()
            .map(|t| self.model.index_of(t).filter(|&i| self.model.norm(i) > 0.0))
            .collect();
        let present: Vec<usize> = rows.iter().flatten().copied().collect();
        let sentence_centroid = match self.mode {
            SimilarityMode::Contextual { .. } if !present.is_empty() => {
                Some(mean_of_rows(self.model, &present))
            }
            _ => None,
        };

        let per_category = self
            .groups
            .iter()
            .map(|group| {
                let refs = references(
                    self.model,
                    group,
                    self.mode,
                    self.combine,
                    sentence_centroid.as_deref(),
                );
                let scores: Vec<Option<f64>> = rows
                    .iter()
                    .map(|row| row.and_then(|r| refs.score(self.model, r, self.combine)))
                    .collect();
                let oov_mask: Vec<bool> = scores.iter().map(Option::is_none).collect();
                let similarities: Vec<f64> = scores
                    .iter()
                    .map(|s| s.unwrap_or(f64::NEG_INFINITY))
                    .collect();
                let attentions = attention_weights(&similarities, &oov_mask)
                    .unwrap_or_else(|_| vec![0.0; similarities.len()]);
                CategoryScores {
                    category: group.category.clone(),
                    similarities,
                    attentions,
                    oov_mask,
                }
            })
            .collect::<Vec<_>>();

        let unclassifiable = per_category.iter().all(|c| c.oov_mask.iter().all(|&m| m));
        AnnotatedSentence {
            sentence: sentence.clone(),
            per_category,
            unclassifiable,
        }
    }

    /// Annotates a batch, in parallel when `threads > 1`. Output order
    /// always follows input order.
    pub fn annotate_all(&self, sentences: &[Sentence], threads: usize) -> Vec<AnnotatedSentence> {
        if threads <= 1 {
            return sentences.iter().map(|s| self.annotate(s)).collect();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| sentences.par_iter().map(|s| self.annotate(s)).collect()),
            Err(_) => sentences.iter().map(|s| self.annotate(s)).collect(),
        }
    }
}

/// One-shot annotation with centroid group combination.
pub fn annotate(
    model: &EmbeddingModel,
    sentence: &Sentence,
    groups: &[ReferenceGroup],
    mode: SimilarityMode,
) -> Result<AnnotatedSentence> {
    Ok(AttentionScorer::new(model, groups, mode, GroupCombine::Centroid)?.annotate(sentence))
}

/// Adds the `k` words nearest to the centroid of the seed words.
pub fn expand_references(
    model: &EmbeddingModel,
    seeds: &ReferenceGroup,
    k: usize,
) -> Result<ReferenceGroup> {
    let prepared = PreparedGroup::new(model, seeds)?;
    let neighbours = model.nearest_to_vector(&prepared.centroid, k, |i| prepared.rows.contains(&i));
    let mut words = seeds.words.clone();
    words.extend(
        neighbours
            .into_iter()
            .map(|(w, _)| w)
            .filter(|w| !seeds.words.contains(w)),
    );
    Ok(ReferenceGroup {
        category: seeds.category.clone(),
        words,
    })
}

// ---------------------------------------------------------------------------
// Annotated test data file
// ---------------------------------------------------------------------------

/// Writes one row per (sentence, category):
/// `sentence_id<TAB>category<TAB>token:similarity:attention,...`
pub fn write_annotated<'a, W, I>(mut writer: W, annotated: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a AnnotatedSentence>,
{
    for a in annotated {
        for c in &a.per_category {
            write!(writer, "{}\t{}\t", a.sentence.id, c.category)?;
            for (i, token) in a.sentence.tokens.iter().enumerate() {
                if i > 0 {
                    write!(writer, ",")?;
                }
                write!(
                    writer,
                    "{}:{:.6}:{:.6}",
                    token, c.similarities[i], c.attentions[i]
                )?;
            }
            writeln!(writer)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Reads the annotated test data back. Rows for one sentence must be
/// consecutive; the sentence text is rebuilt from its tokens.
pub fn read_annotated<R: BufRead>(reader: R) -> Result<Vec<AnnotatedSentence>> {
    let mut out: Vec<AnnotatedSentence> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| Error::MalformedRecord {
            kind: "annotated data",
            line: n + 1,
            reason,
        };
        let mut cols = line.splitn(3, '\t');
        let (Some(id), Some(category), Some(body)) = (cols.next(), cols.next(), cols.next()) else {
            return Err(bad("expected three tab-separated columns".into()));
        };
        let mut tokens = Vec::new();
        let mut scores = CategoryScores {
            category: category.to_owned(),
            similarities: Vec::new(),
            attentions: Vec::new(),
            oov_mask: Vec::new(),
        };
        for entry in body.split(',').filter(|e| !e.is_empty()) {
            let mut parts = entry.rsplitn(3, ':');
            let (Some(att), Some(sim), Some(token)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(bad(format!("bad entry {entry:?}")));
            };
            let sim: f64 = sim
                .parse()
                .map_err(|_| bad(format!("bad similarity in {entry:?}")))?;
            let att: f64 = att
                .parse()
                .map_err(|_| bad(format!("bad attention in {entry:?}")))?;
            tokens.push(token.to_owned());
            scores.oov_mask.push(sim == f64::NEG_INFINITY);
            scores.similarities.push(sim);
            scores.attentions.push(att);
        }

        match out.last_mut() {
            Some(prev) if prev.sentence.id == id => {
                if prev.sentence.tokens != tokens {
                    return Err(bad(format!(
                        "tokens of sentence {id:?} differ between rows"
                    )));
                }
                if prev.category(category).is_some() {
                    return Err(bad(format!("category {category:?} repeated for {id:?}")));
                }
                prev.per_category.push(scores);
            }
            _ => {
                if out.iter().any(|a| a.sentence.id == id) {
                    return Err(bad(format!("rows of sentence {id:?} are not consecutive")));
                }
                let mut sentence = Sentence::new(id, tokens.join(" "));
                sentence.tokens = tokens;
                out.push(AnnotatedSentence {
                    sentence,
                    per_category: vec![scores],
                    unclassifiable: false,
                });
            }
        }
    }
    for a in &mut out {
        a.unclassifiable = a.per_category.iter().all(|c| c.oov_mask.iter().all(|&m| m));
    }
    Ok(out)
}
