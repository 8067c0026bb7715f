//! Quality metrics and stage timing.

use std::collections::HashMap;
use std::io::Write;
use std::time::{Duration, Instant};

use crate::classify::CategoryAssignment;
use crate::corpus::Sentence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Per-category single-label counts, in category order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub categories: Vec<(String, Counts)>,
}

impl ConfusionCounts {
    pub fn get(&self, category: &str) -> Option<Counts> {
        self.categories
            .iter()
            .find(|(c, _)| c == category)
            .map(|(_, counts)| *counts)
    }

    pub fn total(&self) -> Counts {
        self.categories
            .iter()
            .fold(Counts::default(), |acc, (_, c)| Counts {
                tp: acc.tp + c.tp,
                fp: acc.fp + c.fp,
                fn_: acc.fn_ + c.fn_,
            })
    }
}

fn gold_label(sentence: &Sentence) -> Result<&str> {
    sentence
        .gold_category
        .as_deref()
        .ok_or_else(|| Error::UnknownGoldLabel {
            sentence_id: sentence.id.clone(),
            label: String::new(),
        })
}

fn index_predictions(pred: &[CategoryAssignment]) -> HashMap<&str, &CategoryAssignment> {
    pred.iter().map(|p| (p.sentence_id.as_str(), p)).collect()
}

/// Single-label counting. An unclassifiable prediction is a false negative
/// for the gold category and a false positive for nothing.
pub fn confusion_counts(
    pred: &[CategoryAssignment],
    gold: &[Sentence],
    categories: &[String],
) -> Result<ConfusionCounts> {
    let by_id = index_predictions(pred);
    let position: HashMap<&str, usize> = categories
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut counts = vec![Counts::default(); categories.len()];

    for sentence in gold {
        let label = gold_label(sentence)?;
        let &g = position.get(label).ok_or_else(|| Error::UnknownGoldLabel {
            sentence_id: sentence.id.clone(),
            label: label.to_owned(),
        })?;
        let p = by_id
            .get(sentence.id.as_str())
            .ok_or_else(|| Error::MissingPrediction(sentence.id.clone()))?;
        match p.category.as_deref() {
            None => counts[g].fn_ += 1,
            Some(c) if c == label => counts[g].tp += 1,
            Some(c) => {
                let &pi = position
                    .get(c)
                    .ok_or_else(|| Error::UnknownCategory(c.to_owned()))?;
                counts[pi].fp += 1;
                counts[g].fn_ += 1;
            }
        }
    }
    Ok(ConfusionCounts {
        categories: categories.iter().cloned().zip(counts).collect(),
    })
}

/// Several categories scored as one, e.g. taste and smell as "taste+smell".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelUnion {
    pub name: String,
    pub members: Vec<String>,
}

impl LabelUnion {
    fn covers(&self, label: &str) -> bool {
        label == self.name || self.members.iter().any(|m| m == label)
    }
}

/// Counts for a union: gold and predicted labels that are members (or the
/// union name itself) are merged into the union before counting.
pub fn union_counts(
    pred: &[CategoryAssignment],
    gold: &[Sentence],
    union: &LabelUnion,
) -> Result<Counts> {
    let by_id = index_predictions(pred);
    let mut counts = Counts::default();
    for sentence in gold {
        let label = gold_label(sentence)?;
        let p = by_id
            .get(sentence.id.as_str())
            .ok_or_else(|| Error::MissingPrediction(sentence.id.clone()))?;
        let gold_in = union.covers(label);
        let pred_in = p.category.as_deref().is_some_and(|c| union.covers(c));
        match (gold_in, pred_in) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fn_ += 1,
            (false, true) => counts.fp += 1,
            (false, false) => {}
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricRow {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a zero denominator forced a metric to 0.
    pub degenerate: bool,
}

impl MetricRow {
    /// Builds a row from P and R, deriving F1 as their harmonic mean.
    pub fn from_precision_recall(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            degenerate: false,
        }
    }
}

pub fn precision_recall_f1(counts: Counts) -> MetricRow {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            (0.0, true)
        } else {
            (num as f64 / den as f64, false)
        }
    };
    let (precision, p_degenerate) = ratio(counts.tp, counts.tp + counts.fp);
    let (recall, r_degenerate) = ratio(counts.tp, counts.tp + counts.fn_);
    MetricRow {
        degenerate: p_degenerate || r_degenerate,
        ..MetricRow::from_precision_recall(precision, recall)
    }
}

/// Unweighted mean of P, R and F1 taken independently.
pub fn macro_average(rows: &[MetricRow]) -> Result<MetricRow> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&MetricRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(MetricRow {
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
        degenerate: rows.iter().any(|r| r.degenerate),
    })
}

/// Per-category rows, union rows, and the macro average over the plain categories.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<(String, MetricRow)>,
    pub union_rows: Vec<(String, MetricRow)>,
    pub macro_row: MetricRow,
}

/// Scores predictions against gold labels.
///
/// Gold labels may be configured categories or union names; sentences
/// labelled with a union name only count toward that union's row.
pub fn evaluate(
    pred: &[CategoryAssignment],
    gold: &[Sentence],
    categories: &[String],
    unions: &[LabelUnion],
) -> Result<EvalReport> {
    let (union_gold, plain_gold): (Vec<Sentence>, Vec<Sentence>) =
        gold.iter().cloned().partition(|s| {
            s.gold_category.as_deref().is_some_and(|g| {
                unions.iter().any(|u| u.name == g) && !categories.iter().any(|c| c == g)
            })
        });
    let counts = confusion_counts(pred, &plain_gold, categories)?;
    let rows: Vec<(String, MetricRow)> = counts
        .categories
        .iter()
        .map(|(c, counts)| (c.clone(), precision_recall_f1(*counts)))
        .collect();
    let metric_rows: Vec<MetricRow> = rows.iter().map(|(_, r)| *r).collect();
    let macro_row = macro_average(&metric_rows)?;
    let all_gold: Vec<Sentence> = plain_gold.into_iter().chain(union_gold).collect();
    let union_rows = unions
        .iter()
        .map(|u| {
            Ok((
                u.name.clone(),
                precision_recall_f1(union_counts(pred, &all_gold, u)?),
            ))
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        rows,
        union_rows,
        macro_row,
    })
}

/// Writes `category<TAB>P<TAB>R<TAB>F1`, then union rows, then `__macro__`.
pub fn write_eval_report<W: Write>(mut writer: W, report: &EvalReport) -> Result<()> {
    writeln!(writer, "category\tP\tR\tF1")?;
    let rows = report
        .rows
        .iter()
        .chain(&report.union_rows)
        .map(|(c, r)| (c.as_str(), r))
        .chain(std::iter::once(("__macro__", &report.macro_row)));
    for (category, r) in rows {
        writeln!(
            writer,
            "{category}\t{:.6}\t{:.6}\t{:.6}",
            r.precision, r.recall, r.f1
        )?;
    }
    writer.flush()?;
    Ok(())
}

/// Long-format CSV for bar charts: `category,metric,value`.
pub fn write_plot_data<W: Write>(mut writer: W, report: &EvalReport) -> Result<()> {
    writeln!(writer, "category,metric,value")?;
    let rows = report
        .rows
        .iter()
        .chain(&report.union_rows)
        .map(|(c, r)| (c.as_str(), r))
        .chain(std::iter::once(("__macro__", &report.macro_row)));
    for (category, r) in rows {
        for (metric, value) in [
            ("precision", r.precision),
            ("recall", r.recall),
            ("f1", r.f1),
        ] {
            writeln!(writer, "{category},{metric},{value:.6}")?;
        }
    }
    writer.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Timing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Preprocess,
    Train,
    Annotate,
    Classify,
    Evaluate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::Train => "train",
            Stage::Annotate => "annotate",
            Stage::Classify => "classify",
            Stage::Evaluate => "evaluate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTiming {
    pub stage: Stage,
    pub duration: Duration,
    pub sentences: usize,
}

/// Runs `f` and records its wall-clock time on the monotonic clock.
pub fn time_stage<T>(
    timings: &mut Vec<StageTiming>,
    stage: Stage,
    f: impl FnOnce() -> T,
    count: impl FnOnce(&T) -> usize,
) -> T {
    let start = Instant::now();
    let out = f();
    let duration = start.elapsed();
    timings.push(StageTiming {
        stage,
        duration,
        sentences: count(&out),
    });
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageStats {
    pub name: String,
    pub seconds: f64,
    pub sentences: usize,
    /// Sentences per second; `None` when either the count or the time is zero.
    pub throughput: Option<f64>,
}

impl StageStats {
    fn new(name: &str, duration: Duration, sentences: usize) -> Self {
        let seconds = duration.as_secs_f64();
        let throughput = (seconds > 0.0 && sentences > 0).then(|| sentences as f64 / seconds);
        Self {
            name: name.to_owned(),
            seconds,
            sentences,
            throughput,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub stages: Vec<StageStats>,
    /// Annotate and classify together: the similarity-as-attention cost,
    /// separate from training and I/O.
    pub attention: StageStats,
}

pub fn runtime_report(timings: &[StageTiming]) -> TimingReport {
    let stages = timings
        .iter()
        .map(|t| StageStats::new(t.stage.name(), t.duration, t.sentences))
        .collect();
    let attention_stages = timings
        .iter()
        .filter(|t| matches!(t.stage, Stage::Annotate | Stage::Classify));
    let duration = attention_stages.clone().map(|t| t.duration).sum();
    let sentences = attention_stages
        .filter(|t| t.stage == Stage::Annotate)
        .map(|t| t.sentences)
        .sum();
    TimingReport {
        stages,
        attention: StageStats::new("attention", duration, sentences),
    }
}

/// Writes `stage<TAB>seconds<TAB>sentences<TAB>throughput`, with the
/// combined `attention` row last.
pub fn write_timing_report<W: Write>(mut writer: W, report: &TimingReport) -> Result<()> {
    writeln!(writer, "stage\tseconds\tsentences\tthroughput")?;
    for s in report
        .stages
        .iter()
        .chain(std::iter::once(&report.attention))
    {
        let throughput = s
            .throughput
            .map_or_else(|| "undefined".to_owned(), |t| format!("{t:.3}"));
        writeln!(
            writer,
            "{}\t{:.6}\t{}\t{}",
            s.name, s.seconds, s.sentences, throughput
        )?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    use proptest::prelude::*;

    fn cats(names: &[&str]) -> Vec<String> {
        names.iter().map(|c| c.to_string()).collect()
    }

    fn gold(id: &str, label: &str) -> Sentence {
        let mut s = Sentence::new(id, "");
        s.gold_category = Some(label.into());
        s
    }

    fn pred(id: &str, label: Option<&str>) -> CategoryAssignment {
        CategoryAssignment {
            sentence_id: id.into(),
            category: label.map(str::to_owned),
            score: label.map(|_| 0.5),
            per_category_scores: Vec::new(),
            unclassifiable: label.is_none(),
        }
    }

    #[test]
    fn counts_match_and_mismatch() {
        let c = confusion_counts(
            &[pred("1", Some("A"))],
            &[gold("1", "A")],
            &cats(&["A", "B"]),
        )
        .unwrap();
        assert_eq!(
            c.get("A"),
            Some(Counts {
                tp: 1,
                fp: 0,
                fn_: 0
            })
        );
        let c = confusion_counts(
            &[pred("1", Some("A"))],
            &[gold("1", "B")],
            &cats(&["A", "B"]),
        )
        .unwrap();
        assert_eq!(
            c.get("A"),
            Some(Counts {
                tp: 0,
                fp: 1,
                fn_: 0
            })
        );
        assert_eq!(
            c.get("B"),
            Some(Counts {
                tp: 0,
                fp: 0,
                fn_: 1
            })
        );
    }

    #[test]
    fn unclassifiable_counts_as_false_negative_only() {
        let c =
            confusion_counts(&[pred("1", None)], &[gold("1", "B")], &cats(&["A", "B"])).unwrap();
        assert_eq!(
            c.total(),
            Counts {
                tp: 0,
                fp: 0,
                fn_: 1
            }
        );
    }

    #[test]
    fn counting_errors() {
        let categories = cats(&["A"]);
        assert!(matches!(
            confusion_counts(&[], &[gold("1", "A")], &categories),
            Err(Error::MissingPrediction(id)) if id == "1"
        ));
        assert!(matches!(
            confusion_counts(&[pred("1", Some("A"))], &[gold("1", "Z")], &categories),
            Err(Error::UnknownGoldLabel { .. })
        ));
        let unlabeled = Sentence::new("1", "");
        assert!(confusion_counts(&[pred("1", Some("A"))], &[unlabeled], &categories).is_err());
    }

    #[test]
    fn metric_examples() {
        let r = precision_recall_f1(Counts {
            tp: 9,
            fp: 1,
            fn_: 1,
        });
        assert!((r.precision - 0.9).abs() < 1e-12);
        assert!((r.recall - 0.9).abs() < 1e-12);
        assert!((r.f1 - 0.9).abs() < 1e-12);
        assert!(!r.degenerate);

        let zero = precision_recall_f1(Counts::default());
        assert_eq!((zero.precision, zero.recall, zero.f1), (0.0, 0.0, 0.0));
        assert!(zero.degenerate);
    }

    #[test]
    fn f1_from_published_precision_recall() {
        // CitySearch food row: P 0.917, R 0.900, printed F1 0.908.
        let r = MetricRow::from_precision_recall(0.917, 0.900);
        assert!((r.f1 - 0.908).abs() <= 0.002);
    }

    #[test]
    fn macro_examples() {
        let row = MetricRow::from_precision_recall(0.7, 0.4);
        let m = macro_average(&[row, row, row]).unwrap();
        assert!((m.precision - row.precision).abs() < 1e-12);
        assert!((m.recall - row.recall).abs() < 1e-12);
        assert!((m.f1 - row.f1).abs() < 1e-12);
        let a = MetricRow {
            precision: 1.0,
            recall: 0.0,
            f1: 0.0,
            degenerate: false,
        };
        let b = MetricRow {
            precision: 0.0,
            recall: 1.0,
            f1: 0.0,
            degenerate: false,
        };
        let m = macro_average(&[a, b]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.0));
        assert!(matches!(macro_average(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn macro_of_published_restaurant_rows() {
        let rows = [
            (0.953, 0.674, 0.789),
            (0.882, 0.714, 0.789),
            (0.627, 0.967, 0.760),
        ]
        .map(|(p, r, f1)| MetricRow {
            precision: p,
            recall: r,
            f1,
            degenerate: false,
        });
        let m = macro_average(&rows).unwrap();
        // (0.953 + 0.882 + 0.627) / 3 etc.
        assert!((m.precision - 2.462 / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.355 / 3.0).abs() < 1e-12);
        assert!((m.f1 - 2.338 / 3.0).abs() < 1e-12);
        assert!((m.precision - 0.821).abs() < 5e-4);
        assert!((m.recall - 0.785).abs() < 5e-4);
        assert!((m.f1 - 0.779).abs() < 5e-4);
    }

    #[test]
    fn union_rows_merge_members() {
        let categories = cats(&["taste", "smell", "look"]);
        let union = LabelUnion {
            name: "taste+smell".into(),
            members: cats(&["taste", "smell"]),
        };
        let gold_set = vec![
            gold("1", "taste+smell"),
            gold("2", "taste+smell"),
            gold("3", "look"),
            gold("4", "smell"),
        ];
        let preds = vec![
            pred("1", Some("smell")),
            pred("2", Some("look")),
            pred("3", Some("taste")),
            pred("4", Some("taste")),
        ];
        assert_eq!(
            union_counts(&preds, &gold_set, &union).unwrap(),
            Counts {
                tp: 2,
                fp: 1,
                fn_: 1
            }
        );
        let report =
            evaluate(&preds, &gold_set, &categories, std::slice::from_ref(&union)).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.union_rows[0].0, "taste+smell");
        // Union-labelled gold sentences stay out of the plain rows.
        let look = report.rows.iter().find(|(c, _)| c == "look").unwrap().1;
        assert_eq!(look.recall, 0.0);
        assert!(evaluate(&preds, &gold_set, &categories, &[]).is_err());
    }

    #[test]
    fn report_formats() {
        let report = evaluate(
            &[pred("1", Some("A"))],
            &[gold("1", "A")],
            &cats(&["A", "B"]),
            &[],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_eval_report(&mut buf, &report).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "category\tP\tR\tF1\n\
             A\t1.000000\t1.000000\t1.000000\n\
             B\t0.000000\t0.000000\t0.000000\n\
             __macro__\t0.500000\t0.500000\t0.500000\n"
        );
        let mut csv = Vec::new();
        write_plot_data(&mut csv, &report).unwrap();
        assert!(String::from_utf8(csv)
            .unwrap()
            .starts_with("category,metric,value\nA,precision,1.000000\n"));
    }

    #[test]
    fn zero_duration_has_undefined_throughput() {
        let report = runtime_report(&[StageTiming {
            stage: Stage::Annotate,
            duration: Duration::ZERO,
            sentences: 0,
        }]);
        assert_eq!(report.stages[0].throughput, None);
        assert_eq!(report.attention.throughput, None);
        let mut buf = Vec::new();
        write_timing_report(&mut buf, &report).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .contains("annotate\t0.000000\t0\tundefined\n"));
    }

    #[test]
    fn attention_row_combines_annotate_and_classify() {
        let report = runtime_report(&[
            StageTiming {
                stage: Stage::Train,
                duration: Duration::from_secs(10),
                sentences: 100,
            },
            StageTiming {
                stage: Stage::Annotate,
                duration: Duration::from_secs(2),
                sentences: 3328,
            },
            StageTiming {
                stage: Stage::Classify,
                duration: Duration::from_secs(1),
                sentences: 3328,
            },
        ]);
        assert_eq!(report.attention.sentences, 3328);
        assert!((report.attention.seconds - 3.0).abs() < 1e-12);
        assert!((report.attention.throughput.unwrap() - 3328.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn timed_stage_counts_are_deterministic() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for timings in [&mut a, &mut b] {
            time_stage(timings, Stage::Annotate, || vec![0u8; 3328], Vec::len);
        }
        assert_eq!(a[0].sentences, b[0].sentences);
    }

    fn row_strategy() -> impl Strategy<Value = MetricRow> {
        (0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(p, r)| MetricRow::from_precision_recall(p, r))
    }

    proptest! {
        #[test]
        fn adding_true_positive_never_lowers_metrics(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
            let before = precision_recall_f1(Counts { tp, fp, fn_ });
            let after = precision_recall_f1(Counts { tp: tp + 1, fp, fn_ });
            prop_assert!(after.precision >= before.precision);
            prop_assert!(after.recall >= before.recall);
            prop_assert!(after.f1 >= before.f1);
        }

        #[test]
        fn macro_is_permutation_invariant(rows in prop::collection::vec(row_strategy(), 1..8), seed in any::<u64>()) {
            let mut shuffled = rows.clone();
            let n = shuffled.len();
            for i in 0..n {
                shuffled.swap(i, (seed as usize).wrapping_add(i * 7) % n);
            }
            let a = macro_average(&rows).unwrap();
            let b = macro_average(&shuffled).unwrap();
            prop_assert!((a.precision - b.precision).abs() < 1e-12);
            prop_assert!((a.recall - b.recall).abs() < 1e-12);
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        }

        #[test]
        fn every_gold_sentence_is_tp_or_fn(labels in prop::collection::vec((0usize..3, prop::option::of(0usize..3)), 0..60)) {
            let categories = cats(&["a", "b", "c"]);
            let gold_set: Vec<_> = labels.iter().enumerate().map(|(i, (g, _))| gold(&i.to_string(), &categories[*g])).collect();
            let preds: Vec<_> = labels.iter().enumerate().map(|(i, (_, p))| pred(&i.to_string(), p.map(|p| categories[p].as_str()))).collect();
            let total = confusion_counts(&preds, &gold_set, &categories).unwrap().total();
            prop_assert_eq!(total.tp + total.fn_, gold_set.len());
            let classified = labels.iter().filter(|(_, p)| p.is_some()).count();
            prop_assert_eq!(total.tp + total.fp, classified);
        }
    }
}
