//! Mini-batch training with Adam, a step-then-decay learning rate, early
//! stopping on validation loss, and evaluation.

mod metrics;
mod split;

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{dim_err, Error, Result};
use crate::model::{Mode, Model, ParamStore};
use crate::seed::rng_for;
use crate::tape::softmax_cross_entropy;
use crate::tensor::Tensor;

pub use metrics::{argmax, roc_auc, ClassMetrics, ConfusionMatrix, FoldReport, MetricsReport, Summary};
pub use split::{apportion, stratified_kfold, stratified_split, Split, SplitSpec};

const EVAL_CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    #[default]
    ValidationLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub base_lr: f64,
    /// Epochs held at `base_lr` before decay starts.
    pub fixed_epochs: usize,
    pub decay_factor: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub monitor: Monitor,
    pub seed: u64,
    /// Fraction of the earliest backbone blocks excluded from updates.
    pub freeze_fraction: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-4,
            fixed_epochs: 2,
            decay_factor: 0.97,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            monitor: Monitor::ValidationLoss,
            seed: 0,
            freeze_fraction: 0.0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad(format!("decay_factor must be in (0, 1], got {}", self.decay_factor));
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.freeze_fraction) {
            return bad(format!("freeze_fraction must be in [0, 1], got {}", self.freeze_fraction));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return bad("adam needs beta1, beta2 in [0, 1) and epsilon > 0".into());
        }
        Ok(())
    }
}

/// Learning rate for a 1-based `epoch`.
pub fn lr_at_epoch(config: &TrainConfig, epoch: usize) -> f64 {
    if epoch <= config.fixed_epochs {
        config.base_lr
    } else {
        config.base_lr * config.decay_factor.powi((epoch - config.fixed_epochs) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best monitored loss; stops after `patience` epochs in a row
/// without strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, stale: 0 }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.stale = 0;
            StopDecision::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were restored.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn seconds_per_epoch(&self) -> f64 {
        if self.epochs.is_empty() {
            return 0.0;
        }
        self.epochs.iter().map(|e| e.seconds).sum::<f64>() / self.epochs.len() as f64
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

/// Parameter-name prefixes of the frozen leading blocks.
fn frozen_prefixes(model: &Model, fraction: f64) -> Vec<String> {
    let n = (fraction * model.graph.blocks().len() as f64).round() as usize;
    (1..=n).map(|b| format!("block{b}.")).collect()
}

struct Adam {
    config: AdamConfig,
    step: i32,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, moments: HashMap::new() }
    }

    fn apply(&mut self, params: &mut ParamStore, grads: &[(String, Tensor)], lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for (name, g) in grads {
            let (m, v) =
                self.moments.entry(name.clone()).or_insert_with(|| (vec![0.0; g.numel()], vec![0.0; g.numel()]));
            let Some(w) = params.data_mut(name) else { continue };
            for i in 0..w.len() {
                let gi = g.data()[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + epsilon);
            }
        }
    }
}

fn check_compatible(model: &Model, data: &Dataset) -> Result<()> {
    if model.graph.num_classes() != data.num_classes() {
        return Err(Error::Validation(format!(
            "model has {} classes, dataset has {}",
            model.graph.num_classes(),
            data.num_classes()
        )));
    }
    if model.graph.input_shape() != data.sample_shape() {
        return Err(dim_err!(
            "model expects {:?} samples, dataset holds {:?}",
            model.graph.input_shape(),
            data.sample_shape()
        ));
    }
    Ok(())
}

/// Eval-mode logits `(N, K)` for every sample, in chunks.
pub fn predict_logits(model: &Model, images: &Tensor) -> Result<Tensor> {
    let n = images.nchw()[0];
    let k = model.graph.num_classes();
    let mut out = Vec::with_capacity(n * k);
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        out.extend_from_slice(model.logits(&images.select_batch(&idx)?)?.data());
    }
    Tensor::new(&[n, k], out)
}

/// Mean cross-entropy and accuracy in eval mode.
pub fn loss_and_accuracy(model: &Model, data: &Dataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Validation("cannot score an empty dataset".into()));
    }
    let logits = predict_logits(model, &data.images)?;
    let (_, loss) = softmax_cross_entropy(&logits, &data.labels)?;
    let k = logits.shape()[1];
    let hits = logits.data().chunks(k).zip(&data.labels).filter(|(row, &l)| argmax(row) == l).count();
    Ok((loss, hits as f64 / data.len() as f64))
}

/// Full metrics report on `test` using softmax probabilities as scores.
pub fn evaluate(model: &Model, test: &Dataset) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::Validation("cannot evaluate on an empty test set".into()));
    }
    check_compatible(model, test)?;
    let logits = predict_logits(model, &test.images)?;
    let (probs, _) = softmax_cross_entropy(&logits, &test.labels)?;
    MetricsReport::from_scores(&probs, &test.labels, &test.class_names)
}

/// Trains `model` in place; see [`train_with`].
pub fn train(model: &mut Model, train_set: &Dataset, val_set: &Dataset, config: &TrainConfig) -> Result<History> {
    train_with(model, train_set, val_set, config, &mut |_| {})
}

/// Trains `model` in place and calls `on_epoch` after every epoch. Stops at
/// `max_epochs` or when validation loss has not improved for `patience`
/// epochs; the best-validation weights are restored either way.
pub fn train_with(
    model: &mut Model,
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<History> {
    config.validate()?;
    check_compatible(model, train_set)?;
    check_compatible(model, val_set)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Validation("training and validation sets must be non-empty".into()));
    }
    for (name, set) in [("training", train_set), ("validation", val_set)] {
        if !set.images.is_finite() {
            return Err(Error::Validation(format!("{name} set contains non-finite pixel values")));
        }
    }
    let frozen = frozen_prefixes(model, config.freeze_fraction);
    let trainable = |name: &str| !frozen.iter().any(|p| name.starts_with(p.as_str()));
    let mut adam = Adam::new(config.adam);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.params.clone();
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let lr = lr_at_epoch(config, epoch);
        order.shuffle(&mut rng_for(config.seed, &format!("train.shuffle.{epoch}")));
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let (x, y) = train_set.batch(batch)?;
            let mut pass = model.forward(&x, Mode::Train, &trainable)?;
            let logits = pass.logits();
            let (loss, probs) = pass.tape.softmax_cross_entropy(logits, &y)?;
            let value = pass.tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Divergence { epoch, detail: format!("training loss became {value}") });
            }
            loss_sum += value * batch.len() as f64;
            let k = probs.shape()[1];
            hits += probs.data().chunks(k).zip(&y).filter(|(r, &l)| argmax(r) == l).count();
            let mut grads = pass.tape.backward(loss)?;
            let updates: Vec<(String, Tensor)> =
                pass.params.iter().filter_map(|(name, v)| grads.take(*v).map(|g| (name.clone(), g))).collect();
            if let Some((name, _)) = updates.iter().find(|(_, g)| !g.is_finite()) {
                return Err(Error::Divergence { epoch, detail: format!("non-finite gradient for {name}") });
            }
            adam.apply(&mut model.params, &updates, lr);
            model.update_running_stats(&pass);
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_accuracy) = loss_and_accuracy(model, val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, detail: format!("validation loss became {val_loss}") });
        }
        let record = EpochRecord {
            epoch,
            lr,
            train_loss,
            train_accuracy: hits as f64 / train_set.len() as f64,
            val_loss,
            val_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: lr {lr:.3e} train loss {train_loss:.4} acc {:.3} val loss {val_loss:.4} acc {val_accuracy:.3}",
            record.train_accuracy
        );
        on_epoch(&record);
        history.epochs.push(record);
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best = model.params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                history.stopped_early = true;
                break;
            }
        }
    }
    model.params = best;
    history.best_epoch = stopper.best_epoch();
    Ok(history)
}

/// One fold's outcome inside [`crossval`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRun {
    pub fold: usize,
    pub history: History,
    pub report: MetricsReport,
}

/// Stratified k-fold cross-validation. `factory(fold)` builds a fresh model;
/// each fold's training part is split again into train and validation with
/// `val_fraction` of its samples held out for early stopping. A fold too small
/// for that inner split monitors its own training part instead.
pub fn crossval(
    factory: &dyn Fn(usize) -> Result<Model>,
    dataset: &Dataset,
    k: usize,
    val_fraction: f64,
    config: &TrainConfig,
) -> Result<(FoldReport, Vec<FoldRun>)> {
    let folds = stratified_kfold(&dataset.labels, k, config.seed)?;
    let mut runs = Vec::with_capacity(k);
    for (f, (train_idx, test_idx)) in folds.iter().enumerate() {
        let pool = dataset.subset(train_idx)?;
        let inner_spec =
            SplitSpec::two_way(1.0 - val_fraction, val_fraction).with_seed(config.seed.wrapping_add(f as u64));
        let (tr, va) = match stratified_split(&pool.labels, &inner_spec) {
            Ok(inner) if !inner.test.is_empty() && !inner.train.is_empty() => {
                (pool.subset(&inner.train)?, pool.subset(&inner.test)?)
            }
            _ => {
                log::warn!("fold {} is too small to hold out validation data; monitoring its training part", f + 1);
                (pool.clone(), pool)
            }
        };
        let te = dataset.subset(test_idx)?;
        let mut model = factory(f)?;
        let history = train(&mut model, &tr, &va, config)?;
        let mut report = evaluate(&model, &te)?;
        report.seconds_per_epoch = Some(history.seconds_per_epoch());
        log::info!("fold {}: accuracy {:.4}", f + 1, report.accuracy);
        runs.push(FoldRun { fold: f + 1, history, report });
    }
    let report = FoldReport::from_folds(runs.iter().map(|r| r.report.clone()).collect())?;
    Ok((report, runs))
}
