//! Ingestion and preprocessing of review text.
//!
//! Raw documents are split into sentences, tokenized into runs of
//! letters, digits and apostrophes, and normalized (lowercasing,
//! stopword removal, suffix-stripping stemming, length filtering). The
//! same [`PreprocessConfig`] drives embedding training, reference words
//! and test sentences so that all three share one vocabulary.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rust_stemmers::{Algorithm, Stemmer as SnowballStemmer};

use crate::error::{Error, Result};

/// The bundled English stopword list, one word per line.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Abbreviations whose trailing period never ends a sentence.
const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "st", "jr", "sr", "vs", "mt", "ft", "no", "inc", "ltd", "co",
    "corp", "e.g", "i.e", "approx", "dept", "est", "fig", "gen", "gov", "lt", "sgt", "capt", "rev",
];

/// A document of free text, one line of a line corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
}

impl RawDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub original_text: String,
    pub tokens: Vec<String>,
    pub gold_category: Option<String>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, original_text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            original_text: original_text.into(),
            tokens: Vec::new(),
            gold_category: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StemmerKind {
    #[default]
    None,
    /// Snowball (Porter2) English suffix stripping.
    SuffixStripping,
}

impl StemmerKind {
    /// Stems `word` until it stops changing, so that stemming a stem is a no-op.
    pub fn stem(self, word: &str) -> String {
        match self {
            StemmerKind::None => word.to_owned(),
            StemmerKind::SuffixStripping => {
                let stemmer = SnowballStemmer::create(Algorithm::English);
                let mut current = word.to_owned();
                // Each pass only shortens or rewrites a suffix in place, so this converges fast.
                for _ in 0..16 {
                    let next = stemmer.stem(&current).into_owned();
                    if next == current {
                        break;
                    }
                    current = next;
                }
                current
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub remove_stopwords: bool,
    pub stopword_list: HashSet<String>,
    pub stemmer: StemmerKind,
    pub min_token_length: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
            remove_stopwords: true,
            stopword_list: parse_stopwords(DEFAULT_STOPWORDS),
            stemmer: StemmerKind::None,
            min_token_length: 1,
        }
    }
}

impl PreprocessConfig {
    /// A configuration that only tokenizes: no case folding, no filtering.
    pub fn identity() -> Self {
        Self {
            lowercase: false,
            strip_punctuation: false,
            remove_stopwords: false,
            stopword_list: HashSet::new(),
            stemmer: StemmerKind::None,
            min_token_length: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.remove_stopwords && self.stopword_list.is_empty() {
            return Err(Error::InvalidConfig(
                "stopword removal is enabled but the stopword list is empty".into(),
            ));
        }
        if self.min_token_length == 0 {
            return Err(Error::InvalidConfig(
                "min_token_length must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Tokenizes and normalizes a piece of text.
    pub fn process(&self, text: &str) -> Vec<String> {
        normalize(&tokenize(text), self)
    }

    /// Normalizes a single token, returning `None` if it is filtered out.
    pub fn normalize_token(&self, token: &str) -> Option<String> {
        let mut token = if self.lowercase {
            token.to_lowercase()
        } else {
            token.to_owned()
        };
        if self.strip_punctuation {
            token.retain(is_token_char);
        }
        if token.is_empty() || self.is_stopword(&token) {
            return None;
        }
        let token = self.stemmer.stem(&token);
        // A stem can collide with a stopword ("ours" -> "our"); dropping it keeps normalize idempotent.
        if self.is_stopword(&token) || token.chars().count() < self.min_token_length {
            return None;
        }
        Some(token)
    }

    fn is_stopword(&self, token: &str) -> bool {
        self.remove_stopwords && self.stopword_list.contains(token)
    }
}

/// Parses a stopword file: one token per line, blank lines and `#` comments ignored.
pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

/// True if the word that ends just before a period is a known abbreviation
/// or a single-letter initial.
fn ends_with_abbreviation(before_period: &str) -> bool {
    let word = before_period
        .rsplit(|c: char| c.is_whitespace() || c == '(' || c == '"')
        .next()
        .unwrap_or("");
    if word.is_empty() {
        return false;
    }
    let lower = word.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    let mut chars = word.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if c.is_alphabetic())
}

/// Splits a document into sentences on `.`, `!` and `?`.
///
/// A terminator only ends a sentence when followed by whitespace or the end
/// of the text; periods after abbreviations such as "Dr." never do. Sentence
/// ids are `<doc id>-<ordinal>`, counting from 1.
pub fn split_sentences(doc: &RawDocument) -> Vec<Sentence> {
    let text = doc.text.as_str();
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();

    while let Some((i, c)) = iter.next() {
        if !is_terminator(c) {
            continue;
        }
        let mut end = i + c.len_utf8();
        let mut only_periods = c == '.';
        while let Some(&(j, next)) = iter.peek() {
            if is_terminator(next) || is_closer(next) {
                only_periods &= next == '.' || is_closer(next);
                end = j + next.len_utf8();
                iter.next();
            } else {
                break;
            }
        }
        let at_boundary = match iter.peek() {
            None => true,
            Some(&(_, next)) => next.is_whitespace(),
        };
        if !at_boundary {
            continue;
        }
        if only_periods && c == '.' && ends_with_abbreviation(&text[start..i]) {
            continue;
        }
        pieces.push(&text[start..end]);
        start = end;
    }
    pieces.push(&text[start..]);

    pieces
        .into_iter()
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .enumerate()
        .map(|(n, p)| Sentence::new(format!("{}-{}", doc.id, n + 1), p))
        .collect()
}

/// Splits text into maximal runs of letters, digits and apostrophes.
///
/// Runs made only of apostrophes (stray quote marks) are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !is_token_char(c))
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .map(str::to_owned)
        .collect()
}

/// Normalizes tokens: lowercase, strip punctuation, drop stopwords, stem,
/// then drop tokens shorter than `min_token_length`. Idempotent.
pub fn normalize(tokens: &[String], cfg: &PreprocessConfig) -> Vec<String> {
    tokens
        .iter()
        .filter_map(|t| cfg.normalize_token(t))
        .collect()
}

/// Whole-token keyword matcher for domain filtering.
#[derive(Debug, Clone)]
pub struct KeywordFilter {
    keywords: HashSet<String>,
    stemmer: StemmerKind,
}

impl KeywordFilter {
    /// Keywords are lowercased, and stemmed when `stemmer` is enabled so that
    /// both sides of the match go through the same transformation.
    pub fn new<I, S>(keywords: I, stemmer: StemmerKind) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let keywords = keywords
            .into_iter()
            .map(|k| stemmer.stem(&k.as_ref().to_lowercase()))
            .filter(|k| !k.is_empty())
            .collect();
        Self { keywords, stemmer }
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn matches(&self, doc: &RawDocument) -> bool {
        if self.keywords.is_empty() {
            return true;
        }
        tokenize(&doc.text.to_lowercase())
            .iter()
            .any(|t| self.keywords.contains(&self.stemmer.stem(t)))
    }
}

/// Keeps the documents that mention at least one keyword, in input order.
pub fn filter_corpus<'a, I>(
    docs: I,
    filter: &'a KeywordFilter,
) -> impl Iterator<Item = RawDocument> + 'a
where
    I: IntoIterator<Item = RawDocument>,
    I::IntoIter: 'a,
{
    docs.into_iter().filter(move |d| filter.matches(d))
}

/// Reads a line corpus. Document ids are 1-based line numbers.
pub fn read_line_corpus<R: BufRead>(reader: R) -> Result<Vec<RawDocument>> {
    reader
        .lines()
        .enumerate()
        .map(|(n, line)| Ok(RawDocument::new((n + 1).to_string(), line?)))
        .collect()
}

pub fn write_line_corpus<'a, W, I>(mut writer: W, docs: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a RawDocument>,
{
    for doc in docs {
        writeln!(writer, "{}", doc.text)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads test data: `sentence_text<TAB>gold_category`, header optional.
///
/// Sentence ids are 1-based row numbers, not counting the header. A missing
/// or empty second column leaves `gold_category` unset.
pub fn read_test_data<R: BufRead>(reader: R) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let mut cols = line.split('\t');
        let text = cols.next().unwrap_or("");
        if n == 0 && text == "sentence_text" {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let gold = cols.next().map(str::trim).filter(|g| !g.is_empty());
        if cols.next().is_some() {
            return Err(Error::MalformedRecord {
                kind: "test data",
                line: n + 1,
                reason: "expected at most two tab-separated columns".into(),
            });
        }
        let mut sentence = Sentence::new((sentences.len() + 1).to_string(), text);
        sentence.gold_category = gold.map(str::to_owned);
        sentences.push(sentence);
    }
    Ok(sentences)
}
