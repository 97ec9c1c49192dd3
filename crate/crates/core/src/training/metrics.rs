//! Confusion matrices, macro scores and one-vs-rest AUC.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self { counts: vec![vec![0; num_classes]; num_classes] }
    }

    pub fn from_counts(counts: Vec<Vec<usize>>) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) {
            return Err(dim_err!("confusion matrix must be square"));
        }
        Ok(Self { counts })
    }

    pub fn from_predictions(labels: &[usize], predictions: &[usize], num_classes: usize) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(dim_err!("{} labels for {} predictions", labels.len(), predictions.len()));
        }
        let mut m = Self::new(num_classes);
        for (&t, &p) in labels.iter().zip(predictions) {
            if t >= num_classes || p >= num_classes {
                return Err(Error::Validation(format!("class index out of range for {num_classes} classes")));
            }
            m.counts[t][p] += 1;
        }
        Ok(m)
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    /// Members of class `c`.
    pub fn support(&self, c: usize) -> usize {
        self.counts[c].iter().sum()
    }

    pub fn predicted(&self, c: usize) -> usize {
        self.counts.iter().map(|r| r[c]).sum()
    }

    /// 0 when nothing was predicted as `c`.
    pub fn precision(&self, c: usize) -> f64 {
        match self.predicted(c) {
            0 => 0.0,
            p => self.counts[c][c] as f64 / p as f64,
        }
    }

    pub fn recall(&self, c: usize) -> f64 {
        match self.support(c) {
            0 => 0.0,
            s => self.counts[c][c] as f64 / s as f64,
        }
    }

    /// `2PR / (P + R)`, 0 when `P + R = 0`.
    pub fn f1(&self, c: usize) -> f64 {
        let (p, r) = (self.precision(c), self.recall(c));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Macro one-vs-rest AUC; absent without scores or with a single class
    /// present.
    pub auc: Option<f64>,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    pub seconds_per_epoch: Option<f64>,
}

impl MetricsReport {
    /// Macro scores over the classes that have members. Classes absent from
    /// the labels are left out of the means with a warning.
    pub fn from_confusion(confusion: ConfusionMatrix, class_names: &[String]) -> Result<Self> {
        let k = confusion.num_classes();
        if class_names.len() != k {
            return Err(dim_err!("{} class names for {k} classes", class_names.len()));
        }
        if confusion.total() == 0 {
            return Err(Error::Validation("cannot score an empty test set".into()));
        }
        let per_class: Vec<ClassMetrics> = (0..k)
            .map(|c| ClassMetrics {
                name: class_names[c].clone(),
                support: confusion.support(c),
                precision: confusion.precision(c),
                recall: confusion.recall(c),
                f1: confusion.f1(c),
                auc: None,
            })
            .collect();
        let present: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.support > 0).collect();
        for m in per_class.iter().filter(|m| m.support == 0) {
            log::warn!("class {} has no test members; excluded from macro scores", m.name);
        }
        let mean = |f: fn(&ClassMetrics) -> f64| present.iter().map(|m| f(m)).sum::<f64>() / present.len() as f64;
        Ok(Self {
            accuracy: confusion.accuracy(),
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
            auc: None,
            per_class,
            confusion,
            seconds_per_epoch: None,
        })
    }

    /// Scores `(N, K)` class probabilities (or any monotone scores) against
    /// `labels`. Predictions take the first maximal column.
    pub fn from_scores(scores: &Tensor, labels: &[usize], class_names: &[String]) -> Result<Self> {
        if scores.rank() != 2 || scores.shape()[0] != labels.len() {
            return Err(dim_err!("scores {:?} for {} labels", scores.shape(), labels.len()));
        }
        let k = scores.shape()[1];
        let preds: Vec<usize> = scores.data().chunks(k).map(argmax).collect();
        let mut report = Self::from_confusion(ConfusionMatrix::from_predictions(labels, &preds, k)?, class_names)?;
        let mut aucs = Vec::new();
        for c in 0..k {
            let column: Vec<f64> = scores.data().iter().skip(c).step_by(k).copied().collect();
            let positive: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            let auc = roc_auc(&column, &positive);
            report.per_class[c].auc = auc;
            aucs.extend(auc);
        }
        if !aucs.is_empty() {
            report.auc = Some(aucs.iter().sum::<f64>() / aucs.len() as f64);
        }
        Ok(report)
    }
}

/// Index of the first maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Area under the ROC curve by trapezoidal integration. Tied scores form one
/// diagonal step, which counts a tied positive/negative pair as one half.
/// `None` without both positives and negatives.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let (tp0, fp0) = (tp, fp);
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
    }
    Some(area / (pos * neg) as f64)
}

/// Mean with sample and population standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// `n - 1` denominator; 0 for a single value.
    pub std: f64,
    pub population_std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        Self {
            mean,
            std: if values.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 },
            population_std: (ss / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub folds: Vec<MetricsReport>,
    pub accuracy: Summary,
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
    pub auc: Option<Summary>,
}

impl FoldReport {
    pub fn from_folds(folds: Vec<MetricsReport>) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::Validation("no folds to summarise".into()));
        }
        let col = |f: fn(&MetricsReport) -> f64| Summary::of(&folds.iter().map(f).collect::<Vec<_>>());
        let aucs: Option<Vec<f64>> = folds.iter().map(|r| r.auc).collect();
        Ok(Self {
            accuracy: col(|r| r.accuracy),
            precision: col(|r| r.precision),
            recall: col(|r| r.recall),
            f1: col(|r| r.f1),
            auc: aucs.map(|a| Summary::of(&a)),
            folds,
        })
    }
}
