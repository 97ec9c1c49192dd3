//! Edge attention branches.
//!
//! A branch taps a backbone block output, extracts edges with a strided
//! Max-Min pool, optionally refines them with a few convolutions, and ends in
//! one convolution whose filter count sets how much of the classifier input
//! the branch owns. Its globally pooled output is concatenated next to the
//! backbone's pooled features; the backbone path itself is never modified.

use serde::{Deserialize, Serialize};

use crate::conv::ConvSpec;
use crate::error::{Error, Result};
use crate::model::graph::{AttachedBranch, NetworkGraph};
use crate::pooling::{PoolKind, PoolSpec};

/// Where a branch originates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AttachPoint {
    /// `k`-th block output counted from the end; 2 is the second-last block.
    FromEnd(usize),
    /// Explicit tap label such as `block_2`.
    Tap(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteriorConvs {
    /// Three same-padded 3x3 convolutions whose widths shrink geometrically
    /// from the tap's channel count towards the final filter count.
    Default,
    /// Pool straight into the final convolution.
    None,
    Custom(Vec<ConvSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EamConfig {
    pub attach: AttachPoint,
    pub pool: PoolSpec,
    pub interior: InteriorConvs,
    /// Fixed filter count for the final convolution; derived from the ratio
    /// when absent.
    pub final_filters: Option<usize>,
    pub ratio_denominator: usize,
    /// Clamp a derived filter count of zero up to one instead of failing.
    pub allow_min_one: bool,
    pub interior_batchnorm: bool,
    pub final_kernel: usize,
}

impl Default for EamConfig {
    fn default() -> Self {
        Self {
            attach: AttachPoint::FromEnd(2),
            pool: PoolSpec::maxmin(5, 2),
            interior: InteriorConvs::Default,
            final_filters: None,
            ratio_denominator: 16,
            allow_min_one: false,
            interior_batchnorm: false,
            final_kernel: 3,
        }
    }
}

impl EamConfig {
    pub fn at(attach: AttachPoint) -> Self {
        Self { attach, ..Self::default() }
    }

    pub fn with_interior(mut self, interior: InteriorConvs) -> Self {
        self.interior = interior;
        self
    }

    /// Final filter count for a backbone whose last block emits
    /// `base_final_channels`.
    pub fn resolve_final_filters(&self, base_final_channels: usize) -> Result<usize> {
        if let Some(f) = self.final_filters {
            if f == 0 {
                return Err(Error::Config("final_filters must be positive".into()));
            }
            return Ok(f);
        }
        if self.ratio_denominator == 0 {
            return Err(Error::Config("ratio_denominator must be positive".into()));
        }
        match base_final_channels / self.ratio_denominator {
            0 if self.allow_min_one => Ok(1),
            0 => Err(Error::Config(format!(
                "{base_final_channels} base channels / {} leaves no attention filters; \
                 set allow_min_one or final_filters",
                self.ratio_denominator
            ))),
            f => Ok(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchLayer {
    Pool(PoolSpec),
    Conv(ConvSpec),
    Gap,
}

/// Resolved branch: `[pool, interior convs..., final conv, gap]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EamBranch {
    pub in_channels: usize,
    pub layers: Vec<BranchLayer>,
    pub out_channels: usize,
}

impl EamBranch {
    pub fn pool(&self) -> &PoolSpec {
        match &self.layers[0] {
            BranchLayer::Pool(p) => p,
            _ => unreachable!("branches start with a pool"),
        }
    }

    pub fn convs(&self) -> impl Iterator<Item = &ConvSpec> {
        self.layers.iter().filter_map(|l| match l {
            BranchLayer::Conv(c) => Some(c),
            _ => None,
        })
    }

    pub fn interior_count(&self) -> usize {
        self.convs().count() - 1
    }

    pub fn final_conv(&self) -> &ConvSpec {
        self.convs().last().expect("branches hold a final conv")
    }

    pub fn param_count(&self) -> usize {
        self.convs().map(ConvSpec::param_count).sum()
    }
}

fn default_interior(from: usize, to: usize, batchnorm: bool) -> Vec<ConvSpec> {
    let ratio = to as f64 / from as f64;
    let mut prev = from;
    (1..=3)
        .map(|k| {
            let width = ((from as f64) * ratio.powf(k as f64 / 4.0)).round().max(1.0) as usize;
            let spec = ConvSpec::same3x3(prev, width).with_batchnorm(batchnorm);
            prev = width;
            spec
        })
        .collect()
}

/// Resolves `config` into a concrete layer list for a tap with
/// `base_channels_at_attach` channels.
pub fn build_eam(base_channels_at_attach: usize, base_final_channels: usize, config: &EamConfig) -> Result<EamBranch> {
    if base_channels_at_attach == 0 || base_final_channels == 0 {
        return Err(Error::Config("channel counts must be positive".into()));
    }
    config.pool.validate()?;
    if !matches!(config.pool.kind, PoolKind::MaxMin | PoolKind::Max) {
        return Err(Error::Config(format!(
            "edge attention pools must be maxmin (or max for ablation), got {}",
            config.pool.kind
        )));
    }
    if config.final_kernel == 0 || config.final_kernel.is_multiple_of(2) {
        return Err(Error::Config("final_kernel must be a positive odd size".into()));
    }
    let filters = config.resolve_final_filters(base_final_channels)?;
    let interior = match &config.interior {
        InteriorConvs::Default => default_interior(base_channels_at_attach, filters, config.interior_batchnorm),
        InteriorConvs::None => Vec::new(),
        InteriorConvs::Custom(list) => list.clone(),
    };
    let mut layers = vec![BranchLayer::Pool(config.pool)];
    let mut channels = base_channels_at_attach;
    for (i, spec) in interior.into_iter().enumerate() {
        spec.validate()?;
        if spec.in_channels != channels {
            return Err(Error::Config(format!(
                "interior conv {} expects {} channels, receives {channels}",
                i + 1,
                spec.in_channels
            )));
        }
        // n - k + 2p + 1 <= n keeps the branch from growing spatially.
        if 2 * spec.padding + 1 > spec.kernel.0.min(spec.kernel.1) {
            return Err(Error::Config(format!(
                "interior conv {} would enlarge the feature map (kernel {:?}, padding {})",
                i + 1,
                spec.kernel,
                spec.padding
            )));
        }
        channels = spec.out_channels;
        layers.push(BranchLayer::Conv(spec));
    }
    let final_conv = ConvSpec::new(channels, filters, config.final_kernel).with_padding(config.final_kernel / 2);
    layers.push(BranchLayer::Conv(final_conv));
    layers.push(BranchLayer::Gap);
    Ok(EamBranch { in_channels: base_channels_at_attach, layers, out_channels: filters })
}

fn resolve_tap(graph: &NetworkGraph, attach: &AttachPoint) -> Result<String> {
    let available = || graph.taps().collect::<Vec<_>>().join(", ");
    match attach {
        AttachPoint::FromEnd(k) => graph.tap_from_end(*k).map(str::to_owned).ok_or_else(|| {
            Error::Config(format!(
                "no block {k} from the end (backbone has {} blocks; taps: {})",
                graph.blocks().len(),
                available()
            ))
        }),
        AttachPoint::Tap(label) => graph
            .tap_node(label)
            .map(|_| label.clone())
            .ok_or_else(|| Error::Config(format!("unknown tap {label}; available: {}", available()))),
    }
}

/// Adds one branch per config, labelled `eam1`, `eam2`, ... after any
/// existing branches. An empty list returns the graph unchanged.
pub fn attach_branches(backbone: &NetworkGraph, configs: &[EamConfig]) -> Result<NetworkGraph> {
    let base_final = backbone.base_channels();
    let offset = backbone.branches().len();
    let mut extra = Vec::with_capacity(configs.len());
    for (i, config) in configs.iter().enumerate() {
        let tap = resolve_tap(backbone, &config.attach)?;
        let [c, _, _] = backbone.tap_shape(&tap).expect("resolved tap exists");
        extra.push(AttachedBranch {
            label: format!("eam{}", offset + i + 1),
            tap,
            branch: build_eam(c, base_final, config)?,
        });
    }
    if extra.is_empty() {
        return Ok(backbone.clone());
    }
    backbone.with_branches(extra)
}

/// Same config with Max-Min pooling replaced by max pooling of the same
/// window and stride.
pub fn ablation_swap_pool(config: &EamConfig) -> Result<EamConfig> {
    if config.pool.kind != PoolKind::MaxMin {
        return Err(Error::Usage(format!("ablation swap expects a maxmin pool, got {}", config.pool.kind)));
    }
    let mut swapped = config.clone();
    swapped.pool.kind = PoolKind::Max;
    Ok(swapped)
}

/// Applies the ablation swap to every branch already attached to `graph`.
pub fn swap_branch_pools(graph: &NetworkGraph) -> Result<NetworkGraph> {
    let mut branches = graph.branches().to_vec();
    for ab in &mut branches {
        for layer in &mut ab.branch.layers {
            if let BranchLayer::Pool(p) = layer {
                if p.kind != PoolKind::MaxMin {
                    return Err(Error::Usage(format!("branch {} already uses a {} pool", ab.label, p.kind)));
                }
                p.kind = PoolKind::Max;
            }
        }
    }
    graph.replace_branches(branches)
}
