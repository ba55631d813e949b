//! Macro-averaged classification metrics and confusion matrices.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{truth} true labels, {pred} predictions")]
    Length { truth: usize, pred: usize },
    #[error("score matrix has {got} values, expected {rows} × {cols}")]
    Scores { got: usize, rows: usize, cols: usize },
    #[error("label {label} outside 0..{classes}")]
    Label { label: usize, classes: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub support: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub scenario: String,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// `None` when no class has both positives and negatives.
    pub macro_auc: Option<f64>,
    pub classes: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub normalized_confusion: Vec<Vec<f64>>,
    pub per_class: Vec<ClassMetrics>,
    pub meta: Option<RunMeta>,
}

impl EvalReport {
    pub fn class(&self, name: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.class == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Confusion matrix as CSV: header `true,<class>...`, one row per true
    /// class.
    pub fn write_confusion_csv<W: Write>(&self, w: W) -> Result<(), MetricsError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["true".to_string()];
        header.extend(self.classes.iter().cloned());
        out.write_record(&header)?;
        for (name, row) in self.classes.iter().zip(&self.confusion) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(u64::to_string));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// One-vs-rest AUC by the rank-sum statistic; `None` without both
/// positives and negatives.
pub fn auc_one_vs_rest(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let p = positive.iter().filter(|&&x| x).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return None;
    }
    let ranks = average_ranks(scores);
    let sum: f64 = ranks.iter().zip(positive).filter(|(_, &x)| x).map(|(r, _)| r).sum();
    Some((sum - (p * (p + 1)) as f64 / 2.0) / (p as f64 * n as f64))
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Metrics for `truth`/`pred` over `class_names.len()` classes.
///
/// `scores` is row-major `N × classes`. Classes absent from `truth` get no
/// per-class metrics and are left out of the macro averages.
pub fn evaluate(truth: &[usize], pred: &[usize], scores: &[f64], class_names: &[String]) -> Result<EvalReport, MetricsError> {
    let m = class_names.len();
    let n = truth.len();
    if pred.len() != n {
        return Err(MetricsError::Length { truth: n, pred: pred.len() });
    }
    if n == 0 || m == 0 {
        return Err(MetricsError::Empty);
    }
    if scores.len() != n * m {
        return Err(MetricsError::Scores { got: scores.len(), rows: n, cols: m });
    }
    if let Some(&label) = truth.iter().chain(pred).find(|&&l| l >= m) {
        return Err(MetricsError::Label { label, classes: m });
    }
    let mut confusion = vec![vec![0u64; m]; m];
    for (&t, &p) in truth.iter().zip(pred) {
        confusion[t][p] += 1;
    }
    let correct: u64 = (0..m).map(|c| confusion[c][c]).sum();
    let mut per_class = Vec::with_capacity(m);
    for c in 0..m {
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = (0..m).map(|t| confusion[t][c]).sum();
        if support == 0 {
            log::warn!("class {} has no true samples; excluded from macro averages", class_names[c]);
            per_class.push(ClassMetrics {
                class: class_names[c].clone(),
                support,
                precision: None,
                recall: None,
                f1: None,
                auc: None,
            });
            continue;
        }
        let tp = confusion[c][c] as f64;
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = tp / support as f64;
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        let positive: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        let col: Vec<f64> = (0..n).map(|i| scores[i * m + c]).collect();
        per_class.push(ClassMetrics {
            class: class_names[c].clone(),
            support,
            precision: Some(precision),
            recall: Some(recall),
            f1: Some(f1),
            auc: auc_one_vs_rest(&positive, &col),
        });
    }
    let normalized_confusion = confusion
        .iter()
        .map(|row| {
            let s: u64 = row.iter().sum();
            row.iter().map(|&v| if s == 0 { 0.0 } else { v as f64 / s as f64 }).collect()
        })
        .collect();
    Ok(EvalReport {
        accuracy: correct as f64 / n as f64,
        macro_precision: mean(per_class.iter().filter_map(|c| c.precision)).unwrap_or(0.0),
        macro_recall: mean(per_class.iter().filter_map(|c| c.recall)).unwrap_or(0.0),
        macro_f1: mean(per_class.iter().filter_map(|c| c.f1)).unwrap_or(0.0),
        macro_auc: mean(per_class.iter().filter_map(|c| c.auc)),
        classes: class_names.to_vec(),
        confusion,
        normalized_confusion,
        per_class,
        meta: None,
    })
}
