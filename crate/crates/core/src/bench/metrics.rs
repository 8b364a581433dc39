//! Confusion-matrix metrics over Yes/No predictions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{Answer, DatasetTag, Mode, Split};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub item_id: String,
    /// Absent exactly when `error` is present.
    pub predicted: Option<Answer>,
    pub gold: Answer,
    pub outcome_ref: String,
    pub mode: Mode,
    pub error: Option<String>,
    pub dataset: DatasetTag,
    pub split: Split,
}

impl ResultRecord {
    pub fn is_error(&self) -> bool {
        self.error.is_some() || self.predicted.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub errors: usize,
    pub total: usize,
}

impl Counts {
    /// Items that produced a prediction.
    pub fn answered(&self) -> usize {
        self.total - self.errors
    }
}

/// Percentages in [0, 100]; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub yes_ratio: Option<f64>,
    pub counts: Counts,
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

pub fn f1_from(precision: f64, recall: f64) -> Option<f64> {
    let sum = precision + recall;
    (sum > 0.0).then(|| 2.0 * precision * recall / sum)
}

pub fn compute_metrics(results: &[ResultRecord]) -> MetricsReport {
    let mut c = Counts {
        total: results.len(),
        ..Counts::default()
    };
    for r in results {
        match (r.is_error(), r.predicted, r.gold) {
            (true, _, _) => c.errors += 1,
            (false, Some(Answer::Yes), Answer::Yes) => c.tp += 1,
            (false, Some(Answer::Yes), Answer::No) => c.fp += 1,
            (false, Some(Answer::No), Answer::No) => c.tn += 1,
            (false, Some(Answer::No), Answer::Yes) => c.fn_ += 1,
            (false, None, _) => unreachable!("records without a prediction are errors"),
        }
    }
    let answered = c.answered();
    let precision = pct(c.tp, c.tp + c.fp);
    let recall = pct(c.tp, c.tp + c.fn_);
    MetricsReport {
        accuracy: pct(c.tp + c.tn, answered),
        precision,
        recall,
        f1: precision.zip(recall).and_then(|(p, r)| f1_from(p, r)),
        yes_ratio: pct(c.tp + c.fp, answered),
        counts: c,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".to_string())
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 5] = ["Accuracy", "Precision", "Recall", "F1 Score", "Yes-ratio"];

    pub fn values(&self) -> [Option<f64>; 5] {
        [self.accuracy, self.precision, self.recall, self.f1, self.yes_ratio]
    }

    /// Header and one row of the five metrics, right-aligned, two decimals.
    pub fn table(rows: &[(String, MetricsReport)]) -> String {
        let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(8);
        let mut out = format!("{:<label_w$}", "");
        for c in Self::COLUMNS {
            out.push_str(&format!("  {c:>10}"));
        }
        out.push('\n');
        for (label, m) in rows {
            out.push_str(&format!("{label:<label_w$}"));
            for v in m.values() {
                out.push_str(&format!("  {:>10}", cell(v)));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self, label: &str) -> String {
        let c = &self.counts;
        format!(
            "{}\nTP {}  FP {}  TN {}  FN {}  errors {}  total {}\n",
            Self::table(&[(label.to_string(), *self)]),
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            c.errors,
            c.total
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("creativity scoring needs POPE-C results; {0} records are not POPE-C")]
    NotCreative(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CreativityReport {
    pub ratio: Option<f64>,
    pub yes: usize,
    pub answered: usize,
    pub errors: usize,
}

/// Share of POPE-C items answered Yes, errors excluded.
pub fn creativity_ratio(results: &[ResultRecord]) -> Result<CreativityReport, MetricsError> {
    let foreign = results.iter().filter(|r| r.dataset != DatasetTag::PopeC).count();
    if foreign > 0 {
        return Err(MetricsError::NotCreative(foreign));
    }
    let errors = results.iter().filter(|r| r.is_error()).count();
    let answered = results.len() - errors;
    let yes = results
        .iter()
        .filter(|r| !r.is_error() && r.predicted == Some(Answer::Yes))
        .count();
    Ok(CreativityReport {
        ratio: pct(yes, answered),
        yes,
        answered,
        errors,
    })
}

/// Suite fails when more than this share of items errored.
pub const MAX_ERROR_SHARE: f64 = 0.05;

pub fn error_budget_exceeded(counts: &Counts) -> bool {
    counts.total > 0 && counts.errors as f64 > MAX_ERROR_SHARE * counts.total as f64
}
