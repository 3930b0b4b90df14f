//! Metrics with BOT as the positive class, per-creator-category accuracy,
//! leaderboards and heatmap exports.
//!
//! Balanced accuracy is the mean of the two class recalls. Leaderboards rank
//! by it (ties: higher F1, then model name). Exported numbers are rounded
//! half-to-even at four decimals.

mod heatmap;
mod leaderboard;

use std::collections::{BTreeMap, HashMap};
use std::io;

use serde::{Deserialize, Serialize};

use crate::corpus::{CreatorCategory, Document, Label};

pub use heatmap::{heatmap_csv, heatmap_export, heatmap_svg, ramp_color, HeatmapFormat, RAMP_HIGH, RAMP_LOW};
pub use leaderboard::{leaderboard, Leaderboard, LeaderboardRow, LEADERBOARD_CSV_HEADER};

/// Version of the report JSON written by this build.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Column order of grouped reports and heatmaps.
pub const GROUP_COLUMNS: [&str; 5] = ["ALL", "GPT2", "HUMAN", "OTHERS", "RNN"];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("no prediction for document `{0}`")]
    MissingPrediction(String),
    #[error("heatmap needs at least one row")]
    EmptyHeatmap,
    #[error("report schema_version {found} is not supported (expected {expected})")]
    SchemaMismatch { found: u64, expected: u32 },
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, truth: Label, predicted: Label) {
        match (truth.is_bot(), predicted.is_bot()) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }
}

pub fn confusion(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        cm.add(t, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
    /// Metrics whose ratio was 0/0 and were reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricSet, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    let mut degenerate = Vec::new();
    let mut ratio = |name: &str, num: f64, den: f64| {
        if den == 0.0 {
            degenerate.push(name.to_string());
            0.0
        } else {
            num / den
        }
    };
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let recall = ratio("recall", tp, tp + fn_);
    let specificity = ratio("specificity", tn, tn + fp);
    let precision = ratio("precision", tp, tp + fp);
    let f1 = ratio("f1", 2.0 * precision * recall, precision + recall);
    Ok(MetricSet {
        accuracy: (tp + tn) / total as f64,
        balanced_accuracy: (recall + specificity) / 2.0,
        precision,
        recall,
        specificity,
        f1,
        degenerate,
    })
}

/// Correct predictions out of `n` documents in one group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCount {
    pub n: usize,
    pub correct: usize,
}

impl GroupCount {
    /// `None` for an empty group.
    pub fn accuracy(&self) -> Option<f64> {
        (self.n > 0).then(|| self.correct as f64 / self.n as f64)
    }
}

/// Accuracy per creator category plus ALL.
///
/// For bot categories the accuracy is the detection recall inside the
/// category; for HUMAN it is the specificity.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedReport {
    pub model: String,
    pub preprocessing: String,
    pub groups: BTreeMap<String, GroupCount>,
}

impl GroupedReport {
    pub fn from_counts(model: &str, preprocessing: &str, per_category: &[(CreatorCategory, GroupCount)]) -> Self {
        let mut groups: BTreeMap<String, GroupCount> =
            GROUP_COLUMNS.iter().map(|c| (c.to_string(), GroupCount::default())).collect();
        for &(cat, gc) in per_category {
            let g = groups.get_mut(cat.as_str()).expect("category column");
            g.n += gc.n;
            g.correct += gc.correct;
            let all = groups.get_mut("ALL").expect("ALL column");
            all.n += gc.n;
            all.correct += gc.correct;
        }
        GroupedReport {
            model: model.to_string(),
            preprocessing: preprocessing.to_string(),
            groups,
        }
    }

    pub fn get(&self, column: &str) -> GroupCount {
        self.groups.get(column).copied().unwrap_or_default()
    }

    pub fn accuracy(&self, column: &str) -> Option<f64> {
        self.get(column).accuracy()
    }

    /// Row label used in heatmaps: `{model}_{preprocessing}`.
    pub fn label(&self) -> String {
        format!("{}_{}", self.model, self.preprocessing)
    }

    /// JSON form `{ "ALL": {"n", "correct", "accuracy"}, ... }`.
    pub fn groups_json(&self) -> serde_json::Value {
        let mut m = serde_json::Map::new();
        for c in GROUP_COLUMNS {
            let g = self.get(c);
            m.insert(
                c.to_string(),
                serde_json::json!({"n": g.n, "correct": g.correct, "accuracy": g.accuracy()}),
            );
        }
        serde_json::Value::Object(m)
    }
}

pub fn grouped_accuracy(
    docs: &[&Document],
    predictions: &HashMap<String, Label>,
    model: &str,
    preprocessing: &str,
) -> Result<GroupedReport, EvalError> {
    let mut per: BTreeMap<CreatorCategory, GroupCount> = BTreeMap::new();
    for d in docs {
        let p = predictions
            .get(&d.doc_id)
            .ok_or_else(|| EvalError::MissingPrediction(d.doc_id.clone()))?;
        let g = per.entry(d.creator_category).or_default();
        g.n += 1;
        g.correct += usize::from(*p == d.label);
    }
    let counts: Vec<(CreatorCategory, GroupCount)> = per.into_iter().collect();
    Ok(GroupedReport::from_counts(model, preprocessing, &counts))
}

/// Everything the evaluation stage records about one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub preprocessing: String,
    pub metrics: MetricSet,
    pub grouped: GroupedReport,
    pub confusion: ConfusionMatrix,
    pub n_eval: usize,
    pub split_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ReportJson {
    schema_version: u32,
    model: String,
    preprocessing: String,
    metrics: MetricSet,
    grouped: BTreeMap<String, GroupCount>,
    confusion: ConfusionMatrix,
    n_eval: usize,
    split_seed: u64,
}

impl EvalReport {
    pub fn build(
        docs: &[&Document],
        predictions: &HashMap<String, Label>,
        model: &str,
        preprocessing: &str,
        split_seed: u64,
    ) -> Result<EvalReport, EvalError> {
        let grouped = grouped_accuracy(docs, predictions, model, preprocessing)?;
        let truth: Vec<Label> = docs.iter().map(|d| d.label).collect();
        let pred: Vec<Label> = docs.iter().map(|d| predictions[&d.doc_id]).collect();
        let cm = confusion(&truth, &pred)?;
        Ok(EvalReport {
            model: model.to_string(),
            preprocessing: preprocessing.to_string(),
            metrics: metrics(&cm)?,
            grouped,
            confusion: cm,
            n_eval: docs.len(),
            split_seed,
        })
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(ReportJson {
            schema_version: REPORT_SCHEMA_VERSION,
            model: self.model.clone(),
            preprocessing: self.preprocessing.clone(),
            metrics: self.metrics.clone(),
            grouped: BTreeMap::new(),
            confusion: self.confusion,
            n_eval: self.n_eval,
            split_seed: self.split_seed,
        })
        .expect("report serializes");
        v["grouped"] = self.grouped.groups_json();
        let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
        s.push('\n');
        s
    }

    /// Parses a report; other schema versions are a [`EvalError::SchemaMismatch`].
    pub fn from_json(json: &str) -> Result<EvalReport, EvalError> {
        let raw: serde_json::Value =
            serde_json::from_str(json).map_err(|e| EvalError::MalformedReport(e.to_string()))?;
        let found = raw
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| EvalError::MalformedReport("missing schema_version".into()))?;
        if found != u64::from(REPORT_SCHEMA_VERSION) {
            return Err(EvalError::SchemaMismatch {
                found,
                expected: REPORT_SCHEMA_VERSION,
            });
        }
        let r: ReportJson = serde_json::from_value(raw).map_err(|e| EvalError::MalformedReport(e.to_string()))?;
        for c in GROUP_COLUMNS {
            if !r.grouped.contains_key(c) {
                return Err(EvalError::MalformedReport(format!("grouped section lacks {c}")));
            }
        }
        Ok(EvalReport {
            grouped: GroupedReport {
                model: r.model.clone(),
                preprocessing: r.preprocessing.clone(),
                groups: r.grouped,
            },
            model: r.model,
            preprocessing: r.preprocessing,
            metrics: r.metrics,
            confusion: r.confusion,
            n_eval: r.n_eval,
            split_seed: r.split_seed,
        })
    }

    pub fn leaderboard_row(&self) -> LeaderboardRow {
        LeaderboardRow {
            model: self.model.clone(),
            preprocessing: self.preprocessing.clone(),
            metrics: self.metrics.clone(),
        }
    }
}

/// Half-to-even rounding at four decimals, formatted with four digits.
pub fn round4(x: f64) -> String {
    format!("{:.4}", (x * 1e4).round_ties_even() / 1e4)
}
