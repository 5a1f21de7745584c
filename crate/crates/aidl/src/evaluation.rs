//! Confusion matrix, rate metrics, per-category recall, threshold sweeps,
//! and the side-by-side model comparison table.
//!
//! The positive class is "attack": a false positive is a normal connection
//! that raised an alarm. Rates follow the conventional definitions
//! FPR = FP/(FP+TN), FNR = FN/(FN+TP), accuracy = (TP+TN)/total and
//! detection rate = TP/(TP+FN); a rate whose denominator is zero is
//! reported as absent rather than coerced to 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::AttackCategory;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("threshold sweep needs at least 2 points, got {0}")]
    SweepTooSmall(usize),
}

/// One scored sample: classifier output, ground truth, and the attack
/// category used for the per-category breakdown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredSample {
    pub score: f64,
    pub is_attack: bool,
    pub category: AttackCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_positives: u64,
    pub true_negatives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_positives + self.true_negatives + self.false_positives + self.false_negatives
    }

    pub fn fp_rate(&self) -> Option<f64> {
        ratio(self.false_positives, self.false_positives + self.true_negatives)
    }

    pub fn fn_rate(&self) -> Option<f64> {
        ratio(self.false_negatives, self.false_negatives + self.true_positives)
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.true_positives + self.true_negatives, self.total())
    }

    pub fn detection_rate(&self) -> Option<f64> {
        ratio(self.true_positives, self.true_positives + self.false_negatives)
    }
}

fn ratio(numerator: u64, denominator: u64) -> Option<f64> {
    if denominator == 0 {
        None
    } else {
        Some(numerator as f64 / denominator as f64)
    }
}

/// Recall over the attacks of one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRecall {
    pub category: AttackCategory,
    pub attacks: u64,
    pub detected: u64,
    pub recall: f64,
}

/// Full evaluation of one model at one decision threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Row label in comparison tables, e.g. "Deep learning (LSTM)".
    pub model: String,
    pub threshold: f64,
    pub matrix: ConfusionMatrix,
    pub fp_rate: Option<f64>,
    pub fn_rate: Option<f64>,
    pub accuracy: Option<f64>,
    pub detection_rate: Option<f64>,
    pub category_recall: Vec<CategoryRecall>,
    /// Checksum of the encoding schema the scores were produced with, when
    /// known; guards against evaluating with a refitted schema.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_checksum: Option<String>,
}

/// Count a scored sample set at a threshold; the decision is
/// `score > threshold`.
pub fn evaluate(
    samples: &[ScoredSample],
    threshold: f64,
    model: &str,
) -> Result<EvalReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut matrix = ConfusionMatrix::default();
    let mut per_category: std::collections::BTreeMap<AttackCategory, (u64, u64)> =
        std::collections::BTreeMap::new();
    for sample in samples {
        let flagged = sample.score > threshold;
        match (flagged, sample.is_attack) {
            (true, true) => matrix.true_positives += 1,
            (true, false) => matrix.false_positives += 1,
            (false, true) => matrix.false_negatives += 1,
            (false, false) => matrix.true_negatives += 1,
        }
        if sample.is_attack {
            let entry = per_category.entry(sample.category).or_insert((0, 0));
            entry.0 += 1;
            if flagged {
                entry.1 += 1;
            }
        }
    }
    let category_recall = per_category
        .into_iter()
        .map(|(category, (attacks, detected))| CategoryRecall {
            category,
            attacks,
            detected,
            recall: detected as f64 / attacks as f64,
        })
        .collect();

    Ok(EvalReport {
        model: model.to_string(),
        threshold,
        fp_rate: matrix.fp_rate(),
        fn_rate: matrix.fn_rate(),
        accuracy: matrix.accuracy(),
        detection_rate: matrix.detection_rate(),
        matrix,
        category_recall,
        schema_checksum: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub fp_rate: Option<f64>,
    pub detection_rate: Option<f64>,
}

/// Evaluate at `n` evenly spaced thresholds spanning the score range. As
/// the threshold rises the false-positive rate is non-increasing.
pub fn threshold_sweep(samples: &[ScoredSample], n: usize) -> Result<Vec<SweepPoint>, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if n < 2 {
        return Err(EvalError::SweepTooSmall(n));
    }
    let min = samples.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
    let max = samples.iter().map(|s| s.score).fold(f64::NEG_INFINITY, f64::max);
    let mut points = Vec::with_capacity(n);
    for k in 0..n {
        let threshold = min + (max - min) * k as f64 / (n - 1) as f64;
        let report = evaluate(samples, threshold, "sweep")?;
        points.push(SweepPoint {
            threshold,
            fp_rate: report.fp_rate,
            detection_rate: report.detection_rate,
        });
    }
    Ok(points)
}

/// Side-by-side comparison of evaluation reports, one row per model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub methodology: String,
    pub fp_rate: Option<f64>,
    pub fn_rate: Option<f64>,
    pub accuracy: Option<f64>,
}

const COMPARE_HEADERS: [&str; 4] = [
    "Methodology",
    "False-positive FP",
    "False negative FN",
    "Accuracy",
];

fn fmt_rate(rate: Option<f64>) -> String {
    match rate {
        Some(v) => format!("{v:.4}"),
        None => "n/a".to_string(),
    }
}

/// Build the comparison from reports, preserving their order.
pub fn compare(reports: &[EvalReport]) -> Result<ComparisonTable, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(ComparisonTable {
        rows: reports
            .iter()
            .map(|r| ComparisonRow {
                methodology: r.model.clone(),
                fp_rate: r.fp_rate,
                fn_rate: r.fn_rate,
                accuracy: r.accuracy,
            })
            .collect(),
    })
}

impl ComparisonTable {
    /// Aligned plain text. Columns are separated by two spaces; the first
    /// column widens to the longest methodology name; rates print to four
    /// decimals; lines carry no trailing spaces.
    pub fn to_text(&self) -> String {
        let name_width = self
            .rows
            .iter()
            .map(|r| r.methodology.len())
            .chain(std::iter::once(COMPARE_HEADERS[0].len()))
            .max()
            .unwrap_or(0);
        let widths = [
            name_width,
            COMPARE_HEADERS[1].len(),
            COMPARE_HEADERS[2].len(),
            COMPARE_HEADERS[3].len(),
        ];
        let mut out = String::new();
        let push_row = |cells: [String; 4], out: &mut String| {
            let mut line = String::new();
            for (i, cell) in cells.iter().enumerate() {
                line.push_str(cell);
                if i < 3 {
                    for _ in cell.len()..widths[i] + 2 {
                        line.push(' ');
                    }
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        };
        push_row(COMPARE_HEADERS.map(str::to_string), &mut out);
        for row in &self.rows {
            push_row(
                [
                    row.methodology.clone(),
                    fmt_rate(row.fp_rate),
                    fmt_rate(row.fn_rate),
                    fmt_rate(row.accuracy),
                ],
                &mut out,
            );
        }
        out
    }

    /// CSV with the same numbers the text rendering shows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("methodology,fp_rate,fn_rate,accuracy\n");
        for row in &self.rows {
            let name = if row.methodology.contains([',', '"']) {
                format!("\"{}\"", row.methodology.replace('"', "\"\""))
            } else {
                row.methodology.clone()
            };
            out.push_str(&format!(
                "{name},{},{},{}\n",
                fmt_rate(row.fp_rate),
                fmt_rate(row.fn_rate),
                fmt_rate(row.accuracy)
            ));
        }
        out
    }
}
