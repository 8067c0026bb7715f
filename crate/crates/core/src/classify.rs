//! Category attribution and aspect extraction.
//!
//! Sentence scores aggregate per-token similarities (not attention
//! weights, which are normalized within each category and so are not
//! comparable across categories). The best-scoring category wins, with
//! ties going to the earliest category in group order.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::attention::{AnnotatedSentence, CategoryScores};
use crate::embedding::rank_order;
use crate::error::{Error, Result};

/// Label written for sentences without any in-vocabulary token.
pub const UNCLASSIFIABLE: &str = "__unclassifiable__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AggregationMode {
    Max,
    #[default]
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryAssignment {
    pub sentence_id: String,
    /// `None` for unclassifiable sentences.
    pub category: Option<String>,
    pub score: Option<f64>,
    /// Score of every category, in group order.
    pub per_category_scores: Vec<(String, f64)>,
    pub unclassifiable: bool,
}

impl CategoryAssignment {
    fn unclassifiable(sentence_id: &str) -> Self {
        Self {
            sentence_id: sentence_id.to_owned(),
            category: None,
            score: None,
            per_category_scores: Vec::new(),
            unclassifiable: true,
        }
    }
}

fn aggregate(scores: &CategoryScores, agg: AggregationMode) -> Option<f64> {
    let mut present = scores
        .similarities
        .iter()
        .zip(&scores.oov_mask)
        .filter(|(_, &oov)| !oov)
        .map(|(&s, _)| s)
        .peekable();
    present.peek()?;
    Some(match agg {
        AggregationMode::Max => present.fold(f64::NEG_INFINITY, f64::max),
        AggregationMode::Mean => {
            let (sum, n) = present.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
            sum / n as f64
        }
    })
}

/// Aggregated similarity of a sentence to one category.
pub fn sentence_score(
    annotated: &AnnotatedSentence,
    category: &str,
    agg: AggregationMode,
) -> Result<f64> {
    let scores = annotated
        .category(category)
        .ok_or_else(|| Error::UnknownCategory(category.to_owned()))?;
    if annotated.unclassifiable {
        return Err(Error::UnclassifiableSentence(annotated.sentence.id.clone()));
    }
    aggregate(scores, agg)
        .ok_or_else(|| Error::UnclassifiableSentence(annotated.sentence.id.clone()))
}

/// Picks the category with the highest sentence score.
///
/// An empty `group_order` means the annotation's own category order.
pub fn assign_category(
    annotated: &AnnotatedSentence,
    agg: AggregationMode,
    group_order: &[String],
) -> Result<CategoryAssignment> {
    let id = annotated.sentence.id.as_str();
    if annotated.unclassifiable {
        return Ok(CategoryAssignment::unclassifiable(id));
    }
    let order: Vec<&str> = if group_order.is_empty() {
        annotated
            .per_category
            .iter()
            .map(|c| c.category.as_str())
            .collect()
    } else {
        group_order.iter().map(String::as_str).collect()
    };

    let mut per_category_scores = Vec::with_capacity(order.len());
    for category in order {
        match sentence_score(annotated, category, agg) {
            Ok(s) => per_category_scores.push((category.to_owned(), s)),
            Err(Error::UnclassifiableSentence(_)) => {
                return Ok(CategoryAssignment::unclassifiable(id))
            }
            Err(e) => return Err(e),
        }
    }
    let mut best = 0;
    for (i, (_, s)) in per_category_scores.iter().enumerate() {
        if *s > per_category_scores[best].1 {
            best = i;
        }
    }
    let (category, score) = per_category_scores
        .get(best)
        .cloned()
        .ok_or_else(|| Error::InvalidConfig("no categories to assign".into()))?;
    Ok(CategoryAssignment {
        sentence_id: id.to_owned(),
        category: Some(category),
        score: Some(score),
        per_category_scores,
        unclassifiable: false,
    })
}

pub fn assign_all(
    annotated: &[AnnotatedSentence],
    agg: AggregationMode,
    group_order: &[String],
) -> Result<Vec<CategoryAssignment>> {
    annotated
        .iter()
        .map(|a| assign_category(a, agg, group_order))
        .collect()
}

/// What an extracted aspect word is credited with each time it is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AspectWeighting {
    /// Its attention value in that sentence.
    #[default]
    AttentionMass,
    /// One per selection.
    Frequency,
}

/// Ranked aspect words per category, in group order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AspectLexicon {
    pub categories: Vec<(String, Vec<(String, f64)>)>,
}

impl AspectLexicon {
    pub fn get(&self, category: &str) -> Option<&[(String, f64)]> {
        self.categories
            .iter()
            .find(|(c, _)| c == category)
            .map(|(_, words)| words.as_slice())
    }
}

/// Credits the highest-attention token of each classified sentence (for the
/// category it was assigned) to that category, and keeps the `top_n` words
/// with the most credit per category.
pub fn extract_aspects(
    annotated: &[AnnotatedSentence],
    assignments: &[CategoryAssignment],
    categories: &[String],
    top_n: usize,
    weighting: AspectWeighting,
) -> Result<AspectLexicon> {
    if annotated.len() != assignments.len() {
        return Err(Error::InvalidConfig(format!(
            "{} annotated sentences but {} assignments",
            annotated.len(),
            assignments.len()
        )));
    }
    let mut credit: HashMap<&str, HashMap<&str, f64>> = HashMap::new();
    for (a, assignment) in annotated.iter().zip(assignments) {
        if a.sentence.id != assignment.sentence_id {
            return Err(Error::MissingPrediction(a.sentence.id.clone()));
        }
        let Some(category) = assignment.category.as_deref() else {
            continue;
        };
        let scores = a
            .category(category)
            .ok_or_else(|| Error::UnknownCategory(category.to_owned()))?;
        let Some(pos) = scores.argmax_attention() else {
            continue;
        };
        let amount = match weighting {
            AspectWeighting::AttentionMass => scores.attentions[pos],
            AspectWeighting::Frequency => 1.0,
        };
        *credit
            .entry(category)
            .or_default()
            .entry(a.sentence.tokens[pos].as_str())
            .or_default() += amount;
    }

    let categories = categories
        .iter()
        .map(|c| {
            let mut words: Vec<(String, f64)> = credit
                .get(c.as_str())
                .map(|m| m.iter().map(|(w, v)| ((*w).to_owned(), *v)).collect())
                .unwrap_or_default();
            words.sort_by(|a, b| rank_order(a.1, &a.0, b.1, &b.0));
            words.truncate(top_n);
            (c.clone(), words)
        })
        .collect();
    Ok(AspectLexicon { categories })
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

/// Writes `sentence_id<TAB>category<TAB>score<TAB>cat1=s1;cat2=s2;...`.
pub fn write_assignments<'a, W, I>(mut writer: W, assignments: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a CategoryAssignment>,
{
    for a in assignments {
        let category = a.category.as_deref().unwrap_or(UNCLASSIFIABLE);
        let score = a
            .score
            .map_or_else(|| "nan".to_owned(), |s| format!("{s:.6}"));
        let all: Vec<String> = a
            .per_category_scores
            .iter()
            .map(|(c, s)| format!("{c}={s:.6}"))
            .collect();
        writeln!(
            writer,
            "{}\t{}\t{}\t{}",
            a.sentence_id,
            category,
            score,
            all.join(";")
        )?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_assignments<R: BufRead>(reader: R) -> Result<Vec<CategoryAssignment>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| Error::MalformedRecord {
            kind: "category assignments",
            line: n + 1,
            reason,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, category, score, all] = cols[..] else {
            return Err(bad("expected four tab-separated columns".into()));
        };
        if category == UNCLASSIFIABLE {
            out.push(CategoryAssignment::unclassifiable(id));
            continue;
        }
        let score: f64 = score
            .parse()
            .map_err(|_| bad(format!("bad score {score:?}")))?;
        let per_category_scores = all
            .split(';')
            .filter(|e| !e.is_empty())
            .map(|entry| {
                let (c, s) = entry
                    .rsplit_once('=')
                    .ok_or_else(|| bad(format!("bad category score {entry:?}")))?;
                let s: f64 = s
                    .parse()
                    .map_err(|_| bad(format!("bad category score {entry:?}")))?;
                Ok((c.to_owned(), s))
            })
            .collect::<Result<_>>()?;
        out.push(CategoryAssignment {
            sentence_id: id.to_owned(),
            category: Some(category.to_owned()),
            score: Some(score),
            per_category_scores,
            unclassifiable: false,
        });
    }
    Ok(out)
}

/// Writes `category<TAB>rank<TAB>word<TAB>weight`, ranks counting from 1.
pub fn write_lexicon<W: Write>(mut writer: W, lexicon: &AspectLexicon) -> Result<()> {
    for (category, words) in &lexicon.categories {
        for (rank, (word, weight)) in words.iter().enumerate() {
            writeln!(writer, "{category}\t{}\t{word}\t{weight:.6}", rank + 1)?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::corpus::Sentence;

    fn scores(category: &str, sims: &[f64]) -> CategoryScores {
        let oov_mask: Vec<bool> = sims.iter().map(|s| *s == f64::NEG_INFINITY).collect();
        let attentions = crate::attention::attention_weights(sims, &oov_mask)
            .unwrap_or_else(|_| vec![0.0; sims.len()]);
        CategoryScores {
            category: category.into(),
            similarities: sims.to_vec(),
            attentions,
            oov_mask,
        }
    }

    fn annotated(id: &str, tokens: &[&str], cats: &[(&str, &[f64])]) -> AnnotatedSentence {
        let mut sentence = Sentence::new(id, tokens.join(" "));
        sentence.tokens = tokens.iter().map(|t| t.to_string()).collect();
        let per_category: Vec<_> = cats.iter().map(|(c, s)| scores(c, s)).collect();
        let unclassifiable = per_category.iter().all(|c| c.oov_mask.iter().all(|&m| m));
        AnnotatedSentence {
            sentence,
            per_category,
            unclassifiable,
        }
    }

    fn order(cats: &[&str]) -> Vec<String> {
        cats.iter().map(|c| c.to_string()).collect()
    }

    #[test]
    fn aggregation_examples() {
        let a = annotated("1", &["x", "y"], &[("food", &[0.8, 0.2])]);
        assert_eq!(
            sentence_score(&a, "food", AggregationMode::Max).unwrap(),
            0.8
        );
        assert_eq!(
            sentence_score(&a, "food", AggregationMode::Mean).unwrap(),
            0.5
        );
        let c = annotated("2", &["x", "y", "z"], &[("food", &[0.6, 0.6, 0.6])]);
        for agg in [AggregationMode::Max, AggregationMode::Mean] {
            assert!((sentence_score(&c, "food", agg).unwrap() - 0.6).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregation_skips_oov() {
        let a = annotated(
            "1",
            &["x", "the", "y"],
            &[("food", &[0.8, f64::NEG_INFINITY, 0.2])],
        );
        assert_eq!(
            sentence_score(&a, "food", AggregationMode::Mean).unwrap(),
            0.5
        );
    }

    #[test]
    fn score_errors() {
        let a = annotated("1", &["x"], &[("food", &[0.8])]);
        assert!(matches!(
            sentence_score(&a, "staff", AggregationMode::Max),
            Err(Error::UnknownCategory(_))
        ));
        let u = annotated("2", &["x"], &[("food", &[f64::NEG_INFINITY])]);
        assert!(matches!(
            sentence_score(&u, "food", AggregationMode::Max),
            Err(Error::UnclassifiableSentence(_))
        ));
    }

    #[test]
    fn assigns_argmax_category() {
        let a = annotated(
            "1",
            &["x"],
            &[("food", &[0.8]), ("staff", &[0.3]), ("ambience", &[0.1])],
        );
        let got = assign_category(
            &a,
            AggregationMode::Mean,
            &order(&["food", "staff", "ambience"]),
        )
        .unwrap();
        assert_eq!(got.category.as_deref(), Some("food"));
        assert_eq!(got.score, Some(0.8));
        assert_eq!(got.per_category_scores.len(), 3);
    }

    #[test]
    fn ties_go_to_earliest_group() {
        let a = annotated("1", &["x"], &[("staff", &[0.5]), ("food", &[0.5])]);
        let got = assign_category(&a, AggregationMode::Max, &order(&["food", "staff"])).unwrap();
        assert_eq!(got.category.as_deref(), Some("food"));
        let got = assign_category(&a, AggregationMode::Max, &order(&["staff", "food"])).unwrap();
        assert_eq!(got.category.as_deref(), Some("staff"));
        let got = assign_category(&a, AggregationMode::Max, &[]).unwrap();
        assert_eq!(got.category.as_deref(), Some("staff"));
    }

    #[test]
    fn all_oov_is_unclassifiable() {
        let u = annotated("9", &["x", "y"], &[("food", &[f64::NEG_INFINITY; 2])]);
        let got = assign_category(&u, AggregationMode::Mean, &order(&["food"])).unwrap();
        assert!(got.unclassifiable);
        assert_eq!(got.category, None);
        let missing = annotated("3", &["x"], &[("food", &[0.1])]);
        assert!(assign_category(&missing, AggregationMode::Mean, &order(&["staff"])).is_err());
    }

    #[test]
    fn single_group_takes_every_classifiable_sentence() {
        for sims in [[0.1, -0.9], [-0.5, -0.4], [0.9, 0.99]] {
            let a = annotated("1", &["x", "y"], &[("only", &sims)]);
            let got = assign_category(&a, AggregationMode::Mean, &order(&["only"])).unwrap();
            assert_eq!(got.category.as_deref(), Some("only"));
        }
    }

    #[test]
    fn single_sentence_lexicon() {
        let a = annotated("1", &["pizza", "good"], &[("food", &[0.9, 0.1])]);
        let assignment = assign_category(&a, AggregationMode::Mean, &[]).unwrap();
        let lex = extract_aspects(
            std::slice::from_ref(&a),
            std::slice::from_ref(&assignment),
            &order(&["food"]),
            10,
            AspectWeighting::AttentionMass,
        )
        .unwrap();
        let words = lex.get("food").unwrap();
        assert_eq!(words.len(), 1);
        assert_eq!(words[0].0, "pizza");
        assert_eq!(words[0].1, a.per_category[0].attentions[0]);
    }

    #[test]
    fn lexicon_ranking_and_truncation() {
        let cats = order(&["food", "staff"]);
        let sentences = vec![
            annotated(
                "1",
                &["pizza", "x"],
                &[("food", &[0.9, 0.1]), ("staff", &[0.0, 0.0])],
            ),
            annotated(
                "2",
                &["pasta", "x"],
                &[("food", &[0.9, 0.1]), ("staff", &[0.0, 0.0])],
            ),
            annotated(
                "3",
                &["pizza", "y"],
                &[("food", &[0.8, 0.7]), ("staff", &[0.0, 0.0])],
            ),
            annotated(
                "4",
                &["the"],
                &[
                    ("food", &[f64::NEG_INFINITY]),
                    ("staff", &[f64::NEG_INFINITY]),
                ],
            ),
        ];
        let assignments = assign_all(&sentences, AggregationMode::Mean, &cats).unwrap();
        let lex = extract_aspects(
            &sentences,
            &assignments,
            &cats,
            5,
            AspectWeighting::Frequency,
        )
        .unwrap();
        let food = lex.get("food").unwrap();
        assert_eq!(food[0], ("pizza".into(), 2.0));
        assert_eq!(food[1], ("pasta".into(), 1.0));
        assert!(lex.get("staff").unwrap().is_empty());

        let none = extract_aspects(
            &sentences,
            &assignments,
            &cats,
            0,
            AspectWeighting::AttentionMass,
        )
        .unwrap();
        assert!(none.categories.iter().all(|(_, w)| w.is_empty()));
        assert_eq!(none.categories.len(), 2);
    }

    #[test]
    fn misaligned_streams_are_rejected() {
        let a = annotated("1", &["pizza"], &[("food", &[0.9])]);
        let mut assignment = assign_category(&a, AggregationMode::Mean, &[]).unwrap();
        assignment.sentence_id = "2".into();
        assert!(extract_aspects(
            std::slice::from_ref(&a),
            &[assignment],
            &order(&["food"]),
            3,
            AspectWeighting::Frequency
        )
        .is_err());
        assert!(
            extract_aspects(&[a], &[], &order(&["food"]), 3, AspectWeighting::Frequency).is_err()
        );
    }

    #[test]
    fn assignment_file_round_trip() {
        let a = annotated("1", &["x"], &[("food", &[0.8]), ("staff", &[0.25])]);
        let u = annotated(
            "2",
            &["x"],
            &[
                ("food", &[f64::NEG_INFINITY]),
                ("staff", &[f64::NEG_INFINITY]),
            ],
        );
        let assignments = assign_all(&[a, u], AggregationMode::Mean, &[]).unwrap();
        let mut buf = Vec::new();
        write_assignments(&mut buf, &assignments).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "1\tfood\t0.800000\tfood=0.800000;staff=0.250000\n2\t__unclassifiable__\tnan\t\n"
        );
        assert_eq!(read_assignments(buf.as_slice()).unwrap(), assignments);
        assert!(read_assignments("1\tfood\n".as_bytes()).is_err());
        assert!(read_assignments("1\tfood\tx\t\n".as_bytes()).is_err());
    }

    #[test]
    fn lexicon_file_format() {
        let lex = AspectLexicon {
            categories: vec![(
                "food".into(),
                vec![("pizza".into(), 1.5), ("menu".into(), 0.25)],
            )],
        };
        let mut buf = Vec::new();
        write_lexicon(&mut buf, &lex).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "food\t1\tpizza\t1.500000\nfood\t2\tmenu\t0.250000\n"
        );
    }
}
