//! Stratified partitions.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Partition ratios, either `[train, test]` or `[train, val, test]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub ratios: Vec<f64>,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self::three_way(0.65, 0.15, 0.20)
    }
}

impl SplitSpec {
    pub fn three_way(train: f64, val: f64, test: f64) -> Self {
        Self { ratios: vec![train, val, test], stratified: true, seed: 0 }
    }

    pub fn two_way(train: f64, test: f64) -> Self {
        Self { ratios: vec![train, test], stratified: true, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.ratios.len()) {
            return Err(Error::Config(format!("split needs 2 or 3 ratios, got {}", self.ratios.len())));
        }
        if self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config(format!("split ratios {:?} must lie in [0, 1]", self.ratios)));
        }
        let total: f64 = self.ratios.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// Sorted index lists. `val` is empty for a two-way split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Largest-remainder apportionment of `n` items over `ratios`. Ties in the
/// remainder go to the earlier part.
pub fn apportion(n: usize, ratios: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = n.saturating_sub(counts.iter().sum());
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn class_members(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    members
}

fn assemble(parts: Vec<Vec<usize>>) -> Split {
    let mut parts: Vec<Vec<usize>> = parts
        .into_iter()
        .map(|mut p| {
            p.sort_unstable();
            p
        })
        .collect();
    let test = parts.pop().unwrap_or_default();
    let (train, val) = match parts.len() {
        2 => {
            let val = parts.pop().unwrap();
            (parts.pop().unwrap(), val)
        }
        _ => (parts.pop().unwrap_or_default(), Vec::new()),
    };
    Split { train, val, test }
}

/// Splits `labels` by `spec`. With `stratified` set each class is shuffled
/// and apportioned on its own, so every part holds each class within one
/// sample of its exact share.
pub fn stratified_split(labels: &[usize], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let parts_n = spec.ratios.len();
    let mut parts = vec![Vec::new(); parts_n];
    if spec.stratified {
        for (c, mut members) in class_members(labels).into_iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            if members.len() < parts_n {
                return Err(Error::Validation(format!(
                    "class {c} has {} samples, a {parts_n}-way stratified split needs at least {parts_n}",
                    members.len()
                )));
            }
            members.shuffle(&mut rng_for(spec.seed, &format!("split.class.{c}")));
            let mut start = 0;
            for (part, n) in parts.iter_mut().zip(apportion(members.len(), &spec.ratios)) {
                part.extend_from_slice(&members[start..start + n]);
                start += n;
            }
        }
    } else {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng_for(spec.seed, "split.all"));
        let mut start = 0;
        for (part, n) in parts.iter_mut().zip(apportion(all.len(), &spec.ratios)) {
            part.extend_from_slice(&all[start..start + n]);
            start += n;
        }
    }
    Ok(assemble(parts))
}

/// `k` `(train, test)` pairs whose test parts partition the index set. Each
/// class is shuffled and dealt round-robin; the starting fold rotates from
/// class to class so fold totals stay balanced too.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for (c, mut members) in class_members(labels).into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::Validation(format!(
                "class {c} has {} samples, {k}-fold needs at least {k}",
                members.len()
            )));
        }
        members.shuffle(&mut rng_for(seed, &format!("kfold.class.{c}")));
        for (j, idx) in members.iter().enumerate() {
            folds[(j + offset) % k].push(*idx);
        }
        offset = (offset + members.len()) % k;
    }
    Ok((0..k)
        .map(|f| {
            let mut test = folds[f].clone();
            test.sort_unstable();
            let mut train: Vec<usize> =
                folds.iter().enumerate().filter(|&(g, _)| g != f).flat_map(|(_, v)| v.iter().copied()).collect();
            train.sort_unstable();
            (train, test)
        })
        .collect())
}
