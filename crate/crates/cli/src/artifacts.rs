//! Run manifests, history files and result tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use edgeattn::training::{EpochRecord, FoldRun, History, Summary};
use edgeattn::{FoldReport, MetricsReport};
use serde::Serialize;

use crate::config::RunConfig;

pub const TOOL: &str = "edgeattn";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Dataset facts recorded with every run.
#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub samples: usize,
    pub class_names: Vec<String>,
    pub class_counts: Vec<usize>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub variant: String,
    pub param_count: usize,
    pub config: RunConfig,
    pub data: DataSummary,
    pub history: Option<History>,
    pub metrics: Option<MetricsReport>,
    pub folds: Option<Vec<FoldRun>>,
    pub fold_report: Option<FoldReport>,
    /// Mean wall-clock seconds per completed epoch.
    pub seconds_per_epoch: f64,
    pub artifacts: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, variant: &str, param_count: usize, data: DataSummary) -> Self {
        Self {
            tool: TOOL.to_owned(),
            version: VERSION.to_owned(),
            command: command.to_owned(),
            seed: config.seed,
            variant: variant.to_owned(),
            param_count,
            config: config.clone(),
            data,
            history: None,
            metrics: None,
            folds: None,
            fold_report: None,
            seconds_per_epoch: 0.0,
            artifacts: Vec::new(),
        }
    }
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes).with_context(|| format!("writing {}", tmp.display()))?;
    f.sync_all()?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// One JSON record per line. `fold` is added when the epochs belong to a
/// cross-validation fold.
pub fn write_history(path: &Path, runs: &[(Option<usize>, &[EpochRecord])]) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        #[serde(skip_serializing_if = "Option::is_none")]
        fold: Option<usize>,
        #[serde(flatten)]
        record: &'a EpochRecord,
    }
    let mut out = String::new();
    for (fold, records) in runs {
        for record in records.iter() {
            out.push_str(&serde_json::to_string(&Line { fold: *fold, record })?);
            out.push('\n');
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Row of the variant comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub variant: String,
    pub param_count: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub seconds_per_epoch: f64,
    pub epochs: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map_or("n/a".to_owned(), |v| format!("{v:.4}"))
}

pub fn comparison_markdown(rows: &[ComparisonRow]) -> String {
    let mut s = String::from(
        "| Variant | Params | Accuracy | Precision | Recall | F1 | AUC | Epochs | Secs/Ep |\n\
         |---|---:|---:|---:|---:|---:|---:|---:|---:|\n",
    );
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {} | {} | {:.3} |\n",
            r.variant,
            r.param_count,
            r.accuracy,
            r.precision,
            r.recall,
            r.f1,
            opt(r.auc),
            r.epochs,
            r.seconds_per_epoch
        ));
    }
    s
}

fn mean_std(s: &Summary) -> String {
    format!("{:.4} ± {:.4}", s.mean, s.std)
}

/// Per-fold rows followed by a mean ± sample-std row.
pub fn folds_markdown(report: &FoldReport) -> String {
    let mut s = String::from("| Fold | Accuracy | Precision | Recall | F1 | AUC |\n|---|---:|---:|---:|---:|---:|\n");
    for (i, f) in report.folds.iter().enumerate() {
        s.push_str(&format!(
            "| {} | {:.4} | {:.4} | {:.4} | {:.4} | {} |\n",
            i + 1,
            f.accuracy,
            f.precision,
            f.recall,
            f.f1,
            opt(f.auc)
        ));
    }
    s.push_str(&format!(
        "| Mean ± std | {} | {} | {} | {} | {} |\n",
        mean_std(&report.accuracy),
        mean_std(&report.precision),
        mean_std(&report.recall),
        mean_std(&report.f1),
        report.auc.as_ref().map_or("n/a".to_owned(), mean_std)
    ));
    s
}
