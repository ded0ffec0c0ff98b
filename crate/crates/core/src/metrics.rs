//! Classification reports: per-class precision/recall/F1, confusion matrix
//! and false-classification analysis.
//!
//! Percentages in the false-classification table follow two different
//! denominators: false positives are a share of the whole test set, false
//! negatives a share of the class support. Both are labelled in every output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{BeatClass, BeatDataset};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Scalar;
use crate::train::predict_dataset;

pub const REPORT_SCHEMA: &str = "ecgnet.eval-report/1";

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_predictions(
        n_classes: usize,
        truth: &[usize],
        predicted: &[usize],
    ) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape {
                op: "confusion matrix",
                dim: "predictions",
                expected: truth.len(),
                actual: predicted.len(),
            });
        }
        let mut m = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::invalid(
                    "confusion matrix",
                    format!("class index {} out of range", t.max(p)),
                ));
            }
            m.counts[t][p] += 1;
        }
        Ok(m)
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_classes();
        if n == 0 || self.counts.iter().any(|r| r.len() != n) {
            return Err(Error::invalid(
                "confusion matrix",
                "matrix must be square and non-empty",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusedWith {
    pub class: String,
    pub count: u64,
}

/// One row of the false-classification table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorAnalysis {
    pub class: String,
    pub false_positives: u64,
    /// `100 * FP / total test beats`
    pub fp_percent_of_total: f64,
    /// False positives split by their true class.
    pub fp_by_true_class: Vec<ConfusedWith>,
    pub false_negatives: u64,
    /// `100 * FN / class support`
    pub fn_percent_of_support: f64,
    /// False negatives split by the class they were predicted as.
    pub fn_by_predicted_class: Vec<ConfusedWith>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub classes: Vec<String>,
    pub total: u64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub confusion: ConfusionMatrix,
    pub errors: Vec<ErrorAnalysis>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `100 * count / denominator`, 0 for an empty denominator.
pub fn percent(count: u64, denominator: u64) -> f64 {
    100.0 * ratio(count, denominator)
}

/// Two-decimal rendering used in the text and CSV outputs.
pub fn format_percent(p: f64) -> String {
    format!("{p:.2}")
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl EvalReport {
    pub fn from_confusion(classes: Vec<String>, confusion: ConfusionMatrix) -> Result<Self> {
        confusion.validate()?;
        let n = confusion.n_classes();
        if classes.len() != n {
            return Err(Error::Shape {
                op: "EvalReport",
                dim: "class names",
                expected: n,
                actual: classes.len(),
            });
        }
        let total = confusion.total();
        if total == 0 {
            return Err(Error::Dataset(
                "cannot evaluate on an empty test set".into(),
            ));
        }
        let mut per_class = Vec::with_capacity(n);
        let mut errors = Vec::with_capacity(n);
        for c in 0..n {
            let tp = confusion.counts[c][c];
            let support = confusion.support(c);
            let predicted = confusion.predicted(c);
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            per_class.push(ClassMetrics {
                class: classes[c].clone(),
                precision,
                recall,
                f1: harmonic(precision, recall),
                support,
            });
            let others = (0..n).filter(|&o| o != c);
            let fp_by_true_class: Vec<ConfusedWith> = others
                .clone()
                .map(|o| ConfusedWith {
                    class: classes[o].clone(),
                    count: confusion.counts[o][c],
                })
                .collect();
            let fn_by_predicted_class: Vec<ConfusedWith> = others
                .map(|o| ConfusedWith {
                    class: classes[o].clone(),
                    count: confusion.counts[c][o],
                })
                .collect();
            let fp = predicted - tp;
            let fneg = support - tp;
            errors.push(ErrorAnalysis {
                class: classes[c].clone(),
                false_positives: fp,
                fp_percent_of_total: percent(fp, total),
                fp_by_true_class,
                false_negatives: fneg,
                fn_percent_of_support: percent(fneg, support),
                fn_by_predicted_class,
            });
        }
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
        let weighted = |f: fn(&ClassMetrics) -> f64| {
            per_class
                .iter()
                .map(|m| f(m) * m.support as f64)
                .sum::<f64>()
                / total as f64
        };
        let macro_avg = Averages {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
            support: total,
        };
        let weighted_avg = Averages {
            precision: weighted(|m| m.precision),
            recall: weighted(|m| m.recall),
            f1: weighted(|m| m.f1),
            support: total,
        };
        Ok(EvalReport {
            schema: REPORT_SCHEMA.to_string(),
            classes,
            total,
            accuracy: ratio(confusion.trace(), total),
            per_class,
            macro_avg,
            weighted_avg,
            confusion,
            errors,
        })
    }

    /// Report over the five beat classes.
    pub fn for_beat_classes(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        let classes = BeatClass::ALL
            .iter()
            .map(|c| c.name().to_string())
            .collect();
        Self::from_confusion(
            classes,
            ConfusionMatrix::from_predictions(BeatClass::ALL.len(), truth, predicted)?,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: EvalReport = serde_json::from_str(text)?;
        if report.schema != REPORT_SCHEMA {
            return Err(Error::Config(format!(
                "report schema {:?} is not {REPORT_SCHEMA:?}",
                report.schema
            )));
        }
        Ok(report)
    }

    /// Classification report as CSV: one row per class, then accuracy,
    /// macro and weighted averages.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,precision,recall,f1,support\n");
        for m in &self.per_class {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{}",
                m.class, m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(s, "accuracy,,,{:.6},{}", self.accuracy, self.total);
        for (name, a) in [
            ("macro avg", &self.macro_avg),
            ("weighted avg", &self.weighted_avg),
        ] {
            let _ = writeln!(
                s,
                "{name},{:.6},{:.6},{:.6},{}",
                a.precision, a.recall, a.f1, a.support
            );
        }
        s
    }

    /// False-classification table as CSV.
    pub fn errors_csv(&self) -> String {
        let mut s = String::from("class,fp,fp_percent_of_total,fp_by_true_class,fn,fn_percent_of_support,fn_by_predicted_class\n");
        for e in &self.errors {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                e.class,
                e.false_positives,
                format_percent(e.fp_percent_of_total),
                breakdown(&e.fp_by_true_class, ";"),
                e.false_negatives,
                format_percent(e.fn_percent_of_support),
                breakdown(&e.fn_by_predicted_class, ";")
            );
        }
        s
    }

    pub fn confusion_csv(&self) -> String {
        let mut s = format!("true\\predicted,{}\n", self.classes.join(","));
        for (name, row) in self.classes.iter().zip(&self.confusion.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "{name},{}", cells.join(","));
        }
        s
    }

    /// Plain-text tables: classification report, confusion matrix and
    /// false-classification analysis.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Classification report");
        let _ = writeln!(
            s,
            "{:<14} {:>9} {:>9} {:>9} {:>9}",
            "Class", "Precision", "Recall", "F1-Score", "Support"
        );
        for m in &self.per_class {
            let _ = writeln!(
                s,
                "{:<14} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                m.class, m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(
            s,
            "{:<14} {:>9} {:>9} {:>9.2} {:>9}",
            "Accuracy", "", "", self.accuracy, self.total
        );
        for (name, a) in [
            ("Macro Avg", &self.macro_avg),
            ("Weighted Avg", &self.weighted_avg),
        ] {
            let _ = writeln!(
                s,
                "{:<14} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                name, a.precision, a.recall, a.f1, a.support
            );
        }
        let _ = writeln!(s, "Total Support: {}", self.total);
        let _ = writeln!(s);
        let _ = writeln!(s, "Confusion matrix (rows: true, columns: predicted)");
        let _ = write!(s, "{:<8}", "");
        for c in &self.classes {
            let _ = write!(s, " {c:>7}");
        }
        let _ = writeln!(s);
        for (name, row) in self.classes.iter().zip(&self.confusion.counts) {
            let _ = write!(s, "{name:<8}");
            for v in row {
                let _ = write!(s, " {v:>7}");
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "False classifications (FP % of all {} test beats; FN % of class support)",
            self.total
        );
        let _ = writeln!(
            s,
            "{:<8} {:>5} {:>6}  {:<34} {:>5} {:>6}  FN breakdown (predicted class)",
            "Class",
            "FP",
            "FP %",
            "FP breakdown (true class)",
            "FN",
            "FN %",
        );
        for e in &self.errors {
            let _ = writeln!(
                s,
                "{:<8} {:>5} {:>6}  {:<34} {:>5} {:>6}  {}",
                e.class,
                e.false_positives,
                format_percent(e.fp_percent_of_total),
                breakdown(&e.fp_by_true_class, ", "),
                e.false_negatives,
                format_percent(e.fn_percent_of_support),
                breakdown(&e.fn_by_predicted_class, ", ")
            );
        }
        s
    }
}

fn breakdown(items: &[ConfusedWith], sep: &str) -> String {
    items
        .iter()
        .map(|c| format!("{}:{}", c.class, c.count))
        .collect::<Vec<_>>()
        .join(sep)
}

/// Predicts every beat and builds the report.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    data: &BeatDataset,
    threads: usize,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Dataset(
            "cannot evaluate on an empty test set".into(),
        ));
    }
    let probs = predict_dataset(model, data, threads)?;
    let predicted: Vec<usize> = probs
        .iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map_or(0, |(i, _)| i)
        })
        .collect();
    EvalReport::for_beat_classes(&data.label_indices(), &predicted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    Csv,
    TextTable,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "text" | "text-table" => Ok(ReportFormat::TextTable),
            other => Err(Error::Config(format!(
                "unknown report format {other:?} (json, csv, text-table)"
            ))),
        }
    }
}

/// Writes the report into `dir`; returns the paths written.
pub fn emit_report(
    report: &EvalReport,
    format: ReportFormat,
    dir: impl AsRef<Path>,
) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let files: Vec<(&str, String)> = match format {
        ReportFormat::Json => vec![("report.json", report.to_json())],
        ReportFormat::Csv => vec![
            ("classification_report.csv", report.to_csv()),
            ("confusion_matrix.csv", report.confusion_csv()),
            ("false_classifications.csv", report.errors_csv()),
        ],
        ReportFormat::TextTable => vec![("report.txt", report.to_text())],
    };
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_class() -> EvalReport {
        let m = ConfusionMatrix {
            counts: vec![vec![2, 1], vec![0, 3]],
        };
        EvalReport::from_confusion(vec!["a".into(), "b".into()], m).unwrap()
    }

    #[test]
    fn hand_enumerated_two_class() {
        // truth a,a,a,b,b,b predicted a,a,b,b,b,b
        let r = two_class();
        let truth = [0, 0, 0, 1, 1, 1];
        let pred = [0, 0, 1, 1, 1, 1];
        for c in 0..2 {
            let tp = truth
                .iter()
                .zip(&pred)
                .filter(|(t, p)| **t == c && **p == c)
                .count() as f64;
            let fp = truth
                .iter()
                .zip(&pred)
                .filter(|(t, p)| **t != c && **p == c)
                .count() as f64;
            let fneg = truth
                .iter()
                .zip(&pred)
                .filter(|(t, p)| **t == c && **p != c)
                .count() as f64;
            assert_eq!(r.per_class[c].precision, tp / (tp + fp));
            assert_eq!(r.per_class[c].recall, tp / (tp + fneg));
        }
        assert_eq!(r.per_class[0].precision, 1.0);
        assert!((r.per_class[0].recall - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class[1].precision, 0.75);
        assert_eq!(r.accuracy, 5.0 / 6.0);
        assert_eq!(r.errors[0].false_negatives, 1);
        assert_eq!(r.errors[1].false_positives, 1);
        assert_eq!(
            ConfusionMatrix::from_predictions(2, &truth, &pred).unwrap(),
            r.confusion
        );
    }

    #[test]
    fn perfect_predictor() {
        let truth: Vec<usize> = (0..50).map(|i| i % 5).collect();
        let r = EvalReport::for_beat_classes(&truth, &truth).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for (c, m) in r.per_class.iter().enumerate() {
            assert_eq!(
                (m.precision, m.recall, m.f1, m.support),
                (1.0, 1.0, 1.0, 10)
            );
            for (o, v) in r.confusion.counts[c].iter().enumerate() {
                assert_eq!(*v, if o == c { 10 } else { 0 });
            }
        }
        assert_eq!(r.macro_avg.f1, 1.0);
    }

    #[test]
    fn empty_and_malformed_rejected() {
        assert!(EvalReport::for_beat_classes(&[], &[]).is_err());
        assert!(EvalReport::from_confusion(
            vec!["a".into()],
            ConfusionMatrix {
                counts: vec![vec![1, 2]]
            }
        )
        .is_err());
        assert!(ConfusionMatrix::from_predictions(2, &[0, 1], &[0]).is_err());
        assert!(ConfusionMatrix::from_predictions(2, &[0, 2], &[0, 1]).is_err());
    }

    #[test]
    fn csv_rows_and_json_round_trip() {
        let truth: Vec<usize> = (0..40).map(|i| i % 5).collect();
        let pred: Vec<usize> = (0..40)
            .map(|i| if i % 7 == 0 { (i + 1) % 5 } else { i % 5 })
            .collect();
        let r = EvalReport::for_beat_classes(&truth, &pred).unwrap();
        assert_eq!(r.to_csv().lines().count(), 1 + 5 + 3);
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
        let bad = r.to_json().replace(REPORT_SCHEMA, "other/9");
        assert!(EvalReport::from_json(&bad).is_err());
        assert_eq!(r.errors_csv().lines().count(), 6);
        assert_eq!(r.confusion_csv().lines().count(), 6);
    }

    #[test]
    fn zero_predictions_for_a_class() {
        let r = EvalReport::for_beat_classes(&[0, 1, 2, 3, 4], &[0, 0, 0, 0, 0]).unwrap();
        assert_eq!(r.per_class[1].precision, 0.0);
        assert_eq!(r.per_class[1].f1, 0.0);
    }

    proptest! {
        #[test]
        fn prop_report_invariants(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..300)) {
            let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let r = EvalReport::for_beat_classes(&truth, &pred).unwrap();
            prop_assert_eq!(r.accuracy, r.confusion.trace() as f64 / r.total as f64);
            for (c, m) in r.per_class.iter().enumerate() {
                prop_assert_eq!(r.confusion.counts[c].iter().sum::<u64>(), m.support);
                let e = &r.errors[c];
                prop_assert_eq!(e.fp_by_true_class.iter().map(|x| x.count).sum::<u64>(), e.false_positives);
                prop_assert_eq!(e.fn_by_predicted_class.iter().map(|x| x.count).sum::<u64>(), e.false_negatives);
            }
            let weighted: f64 = r.per_class.iter().map(|m| m.f1 * m.support as f64).sum::<f64>() / r.total as f64;
            prop_assert!((weighted - r.weighted_avg.f1).abs() < 1e-12);
        }
    }
}
