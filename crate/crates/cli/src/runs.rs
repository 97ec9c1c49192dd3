//! `train`, `ablate` and `crossval`.

use std::path::{Path, PathBuf};

use anyhow::Result;
use edgeattn::model::{save_model, Variant};
use edgeattn::training::{crossval, evaluate, stratified_split, train, EpochRecord, Split};
use edgeattn::{Dataset, Model};
use log::{info, warn};
use serde::Serialize;

use crate::artifacts::{
    comparison_markdown, folds_markdown, write_atomic, write_history, write_json, ComparisonRow, DataSummary,
    RunManifest,
};
use crate::config::RunConfig;

pub const MODEL_FILE: &str = "model.eam";

struct Prepared {
    data: Dataset,
    split: Split,
    train: Dataset,
    val: Dataset,
    test: Dataset,
}

impl Prepared {
    fn summary(&self) -> DataSummary {
        DataSummary {
            samples: self.data.len(),
            class_names: self.data.class_names.clone(),
            class_counts: self.data.class_counts(),
            train: self.train.len(),
            val: self.val.len(),
            test: self.test.len(),
        }
    }
}

fn prepare(config: &RunConfig) -> Result<Prepared> {
    let data = config.load_data()?;
    info!("dataset: {} samples, classes {:?}", data.len(), data.class_names);
    let split = stratified_split(&data.labels, &config.split)?;
    let train = data.subset(&split.train)?;
    let val = if split.val.is_empty() {
        warn!("split has no validation part; early stopping monitors the training set");
        train.clone()
    } else {
        data.subset(&split.val)?
    };
    let test = data.subset(&split.test)?;
    Ok(Prepared { data, split, train, val, test })
}

/// Trains one variant and writes model, history and manifest under `dir`.
fn fit(config: &RunConfig, command: &str, variant: Variant, p: &Prepared, dir: &Path) -> Result<RunManifest> {
    let mut model = Model::new(config.graph(variant)?, config.seed);
    info!("{variant}: {} parameters", model.param_count());
    let history = train(&mut model, &p.train, &p.val, &config.train)?;
    let mut report = evaluate(&model, &p.test)?;
    report.seconds_per_epoch = Some(history.seconds_per_epoch());
    info!("{variant}: test accuracy {:.4}, macro F1 {:.4}", report.accuracy, report.f1);

    let model_path = dir.join(MODEL_FILE);
    let history_path = dir.join("history.jsonl");
    std::fs::create_dir_all(dir)?;
    save_model(&model, &model_path)?;
    write_history(&history_path, &[(None, &history.epochs)])?;

    let mut manifest = RunManifest::new(command, config, variant.name(), model.param_count(), p.summary());
    manifest.seconds_per_epoch = history.seconds_per_epoch();
    manifest.history = Some(history);
    manifest.metrics = Some(report);
    manifest.artifacts = vec![model_path, history_path];
    Ok(manifest)
}

#[derive(Serialize)]
struct SplitRecord<'a> {
    seed: u64,
    train: &'a [usize],
    val: &'a [usize],
    test: &'a [usize],
}

fn write_split(config: &RunConfig, split: &Split, dir: &Path) -> Result<PathBuf> {
    let path = dir.join("split.json");
    write_json(&path, &SplitRecord { seed: config.seed, train: &split.train, val: &split.val, test: &split.test })?;
    Ok(path)
}

fn finish(mut manifest: RunManifest, extra: Vec<PathBuf>, dir: &Path) -> Result<RunManifest> {
    let config_path = dir.join("config.toml");
    write_atomic(&config_path, manifest.config.to_toml().as_bytes())?;
    let path = dir.join("manifest.json");
    manifest.artifacts.extend(extra);
    manifest.artifacts.push(config_path);
    manifest.artifacts.push(path.clone());
    write_json(&path, &manifest)?;
    Ok(manifest)
}

pub fn cmd_train(config: &RunConfig) -> Result<RunManifest> {
    config.validate()?;
    let p = prepare(config)?;
    let out = &config.out;
    let split = write_split(config, &p.split, out)?;
    let manifest = fit(config, "train", config.model.variant, &p, out)?;
    finish(manifest, vec![split], out)
}

/// Runs every variant on one shared split and writes a comparison table.
pub fn cmd_ablate(config: &RunConfig) -> Result<Vec<RunManifest>> {
    config.validate()?;
    for v in Variant::ALL {
        config.graph(v)?;
    }
    let p = prepare(config)?;
    let out = &config.out;
    let split = write_split(config, &p.split, out)?;
    let mut manifests = Vec::new();
    let mut rows = Vec::new();
    for v in Variant::ALL {
        let dir = out.join(v.name());
        let m = finish(fit(config, "ablate", v, &p, &dir)?, vec![split.clone()], &dir)?;
        let r = m.metrics.as_ref().expect("fit records metrics");
        rows.push(ComparisonRow {
            variant: v.name().to_owned(),
            param_count: m.param_count,
            accuracy: r.accuracy,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            auc: r.auc,
            seconds_per_epoch: m.seconds_per_epoch,
            epochs: m.history.as_ref().map_or(0, |h| h.epochs.len()),
        });
        manifests.push(m);
    }
    let table = comparison_markdown(&rows);
    write_atomic(&out.join("comparison.md"), table.as_bytes())?;
    write_json(&out.join("comparison.json"), &rows)?;
    println!("{table}");
    Ok(manifests)
}

pub fn cmd_crossval(config: &RunConfig, k: usize) -> Result<RunManifest> {
    config.validate()?;
    let data = config.load_data()?;
    let variant = config.model.variant;
    let graph = config.graph(variant)?;
    let factory = |fold: usize| {
        info!("fold {}/{k}", fold + 1);
        Ok(Model::new(graph.clone(), config.seed))
    };
    let (report, runs) = crossval(&factory, &data, k, config.crossval_val_fraction, &config.train)?;
    let out = &config.out;
    let history_path = out.join("history.jsonl");
    let histories: Vec<(Option<usize>, &[EpochRecord])> =
        runs.iter().map(|r| (Some(r.fold), r.history.epochs.as_slice())).collect();
    write_history(&history_path, &histories)?;
    let table = folds_markdown(&report);
    let table_path = out.join("folds.md");
    write_atomic(&table_path, table.as_bytes())?;
    println!("{table}");

    let epochs: usize = runs.iter().map(|r| r.history.epochs.len()).sum();
    let seconds: f64 = runs.iter().flat_map(|r| &r.history.epochs).map(|e| e.seconds).sum();
    let summary = DataSummary {
        samples: data.len(),
        class_names: data.class_names.clone(),
        class_counts: data.class_counts(),
        train: 0,
        val: 0,
        test: 0,
    };
    let mut manifest = RunManifest::new("crossval", config, variant.name(), graph.param_count(), summary);
    manifest.seconds_per_epoch = if epochs == 0 { 0.0 } else { seconds / epochs as f64 };
    manifest.fold_report = Some(report);
    manifest.folds = Some(runs);
    manifest.artifacts = vec![history_path];
    finish(manifest, vec![table_path], out)
}
