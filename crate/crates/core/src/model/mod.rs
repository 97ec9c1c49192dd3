//! Backbones, experiment variants and the forward pass.

pub mod graph;
mod io;
pub mod params;

use serde::{Deserialize, Serialize};

use crate::eam::{ablation_swap_pool, attach_branches, AttachPoint, EamConfig, InteriorConvs};
use crate::error::{dim_err, Error, Result};
use crate::tape::{BatchStats, Tape, Var};
use crate::tensor::Tensor;

pub use graph::{tap_label, AttachedBranch, BlockSpec, GraphNode, NetworkGraph, NodeKind};
pub use io::{load_model, save_model, MODEL_MAGIC};
pub use params::{Init, ParamDecl, ParamEntry, ParamStore};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// Builds `blocks -> GAP -> classifier` with taps `block_1..block_k`.
pub fn build_backbone(blocks: Vec<BlockSpec>, num_classes: usize, input_shape: [usize; 3]) -> Result<NetworkGraph> {
    if blocks.len() < 3 {
        return Err(Error::Config(format!(
            "a backbone needs at least 3 blocks so that the second- and third-last taps exist, got {}",
            blocks.len()
        )));
    }
    NetworkGraph::assemble(input_shape, blocks, Vec::new(), num_classes)
}

/// Like [`build_backbone`] but without the minimum block count, for shallow
/// experiments where only single-branch variants are needed.
pub fn build_shallow_backbone(
    blocks: Vec<BlockSpec>,
    num_classes: usize,
    input_shape: [usize; 3],
) -> Result<NetworkGraph> {
    if blocks.is_empty() {
        return Err(Error::Config("a backbone needs at least one block".into()));
    }
    NetworkGraph::assemble(input_shape, blocks, Vec::new(), num_classes)
}

/// Standard blocks with the given widths, `convs_per_block` 3x3 convs each.
pub fn standard_blocks(in_channels: usize, widths: &[usize], convs_per_block: usize) -> Vec<BlockSpec> {
    let mut prev = in_channels;
    widths
        .iter()
        .map(|&w| {
            let b = BlockSpec::standard(prev, w, convs_per_block);
            prev = w;
            b
        })
        .collect()
}

/// Four blocks of 16/32/64/128 channels with two convolutions each.
pub fn default_blocks(in_channels: usize) -> Vec<BlockSpec> {
    standard_blocks(in_channels, &[16, 32, 64, 128], 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    Eam,
    Eam2,
    Eam2MaxpoolAblation,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::Eam, Variant::Eam2, Variant::Eam2MaxpoolAblation];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Eam => "eam",
            Variant::Eam2 => "eam2",
            Variant::Eam2MaxpoolAblation => "eam2_maxpool_ablation",
        }
    }

    /// Branch configs this variant attaches, derived from `template`.
    pub fn configs(&self, template: &EamConfig) -> Result<Vec<EamConfig>> {
        let second_last = EamConfig { attach: AttachPoint::FromEnd(2), ..template.clone() };
        let third_last =
            EamConfig { attach: AttachPoint::FromEnd(3), interior: InteriorConvs::None, ..template.clone() };
        Ok(match self {
            Variant::Baseline => vec![],
            Variant::Eam => vec![second_last],
            Variant::Eam2 => vec![third_last, second_last],
            Variant::Eam2MaxpoolAblation => vec![ablation_swap_pool(&third_last)?, ablation_swap_pool(&second_last)?],
        })
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| Error::Config(format!("unknown variant {s}")))
    }
}

pub fn make_variant(backbone: &NetworkGraph, variant: Variant) -> Result<NetworkGraph> {
    make_variant_with(backbone, variant, &EamConfig::default())
}

/// [`make_variant`] with branch settings (pool, interior convs, ratio) taken
/// from `template`; its attach point is overridden per variant.
pub fn make_variant_with(backbone: &NetworkGraph, variant: Variant, template: &EamConfig) -> Result<NetworkGraph> {
    if matches!(variant, Variant::Eam2 | Variant::Eam2MaxpoolAblation) && backbone.blocks().len() < 3 {
        return Err(Error::Config(format!(
            "variant {variant} needs a third-last block tap, but the backbone only has taps: {}",
            backbone.taps().collect::<Vec<_>>().join(", ")
        )));
    }
    attach_branches(backbone, &variant.configs(template)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm.
    Train,
    /// Running statistics in batch norm.
    Eval,
}

/// A graph together with its parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub graph: NetworkGraph,
    pub params: ParamStore,
}

/// Recorded forward pass; `nodes[i]` is the output of graph node `i`.
pub struct ForwardPass {
    pub tape: Tape,
    pub nodes: Vec<Var>,
    pub params: Vec<(String, Var)>,
    pub input: Var,
    bn_stats: Vec<(String, BatchStats)>,
    logits: usize,
    features: usize,
}

impl ForwardPass {
    pub fn logits(&self) -> Var {
        self.nodes[self.logits]
    }

    pub fn features(&self) -> Var {
        self.nodes[self.features]
    }
}

impl Model {
    pub fn new(graph: NetworkGraph, seed: u64) -> Self {
        let params = ParamStore::initialize(&graph.param_decls(), seed);
        Self { graph, params }
    }

    /// Pairs a graph with existing values, checking every declared slot.
    pub fn with_params(graph: NetworkGraph, params: ParamStore) -> Result<Self> {
        for d in graph.param_decls() {
            let t = params.require(&d.name)?;
            if t.shape() != d.shape.as_slice() {
                return Err(dim_err!("parameter {} has shape {:?}, graph declares {:?}", d.name, t.shape(), d.shape));
            }
        }
        Ok(Self { graph, params })
    }

    /// Moves to a new graph, keeping every parameter whose name and shape
    /// survive and drawing the rest from `seed`.
    pub fn regraft(&self, graph: NetworkGraph, seed: u64) -> Self {
        let params = ParamStore::carry_over(&graph.param_decls(), &self.params, seed);
        Self { graph, params }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let [c, h, w] = self.graph.input_shape();
        let s = x.shape();
        if s.len() != 4 || s[1..] != [c, h, w] {
            return Err(dim_err!("model expects (N, {c}, {h}, {w}) input, got {s:?}"));
        }
        Ok(())
    }

    /// Runs the graph on `x`, recording every operation. Parameters for which
    /// `trainable(name)` holds are marked as requiring gradients; `x` keeps its
    /// own flag.
    pub fn forward(&self, x: &Tensor, mode: Mode, trainable: &dyn Fn(&str) -> bool) -> Result<ForwardPass> {
        self.check_input(x)?;
        let mut tape = Tape::new();
        let mut param_vars: Vec<(String, Var)> = Vec::new();
        let mut bn_stats = Vec::new();
        let mut leaf = |tape: &mut Tape, name: String| -> Result<Var> {
            let value = self.params.require(&name)?;
            let wants = self.params.is_trainable(&name) && trainable(&name);
            let v = tape.leaf(value.clone().with_requires_grad(wants));
            param_vars.push((name, v));
            Ok(v)
        };
        let mut vars: Vec<Var> = Vec::with_capacity(self.graph.nodes().len());
        let input = tape.leaf(x.clone());
        for node in self.graph.nodes() {
            let inp = |k: usize| vars[node.inputs[k]];
            let out = match &node.kind {
                NodeKind::Input => input,
                NodeKind::Conv(spec) => {
                    let w = leaf(&mut tape, format!("{}.weight", node.name))?;
                    let b = leaf(&mut tape, format!("{}.bias", node.name))?;
                    let mut y = tape.conv2d(inp(0), w, Some(b), spec)?;
                    if spec.use_batchnorm {
                        let gamma = leaf(&mut tape, format!("{}.bn.gamma", node.name))?;
                        let beta = leaf(&mut tape, format!("{}.bn.beta", node.name))?;
                        let running = match mode {
                            Mode::Train => None,
                            Mode::Eval => Some((
                                self.params.require(&format!("{}.bn.running_mean", node.name))?.data(),
                                self.params.require(&format!("{}.bn.running_var", node.name))?.data(),
                            )),
                        };
                        let (z, stats) = tape.batch_norm(y, gamma, beta, running, BN_EPS)?;
                        if let Some(s) = stats {
                            bn_stats.push((node.name.clone(), s));
                        }
                        y = z;
                    }
                    if spec.applies_relu() {
                        y = tape.relu(y)?;
                    }
                    y
                }
                NodeKind::Pool(spec) => tape.pool(inp(0), spec)?,
                NodeKind::Gap => tape.global_average_pool(inp(0))?,
                NodeKind::Concat => {
                    let xs: Vec<Var> = node.inputs.iter().map(|&i| vars[i]).collect();
                    tape.concat_channels(&xs)?
                }
                NodeKind::Classifier { .. } => {
                    let w = leaf(&mut tape, format!("{}.weight", node.name))?;
                    let b = leaf(&mut tape, format!("{}.bias", node.name))?;
                    tape.linear(inp(0), w, Some(b))?
                }
            };
            vars.push(out);
        }
        Ok(ForwardPass {
            tape,
            nodes: vars,
            params: param_vars,
            input,
            bn_stats,
            logits: self.graph.logits_node(),
            features: self.graph.features_node(),
        })
    }

    /// Folds the batch statistics of a training pass into the running
    /// averages.
    pub fn update_running_stats(&mut self, pass: &ForwardPass) {
        for (name, stats) in &pass.bn_stats {
            for (suffix, batch) in [("bn.running_mean", &stats.mean), ("bn.running_var", &stats.var)] {
                if let Some(run) = self.params.data_mut(&format!("{name}.{suffix}")) {
                    for (r, b) in run.iter_mut().zip(batch) {
                        *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
                    }
                }
            }
        }
    }

    /// Logits `(N, classes)` in eval mode.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let pass = self.forward(x, Mode::Eval, &|_| false)?;
        Ok(pass.tape.value(pass.logits()).clone())
    }

    /// Classifier input `(N, F, 1, 1)` in eval mode.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        let pass = self.forward(x, Mode::Eval, &|_| false)?;
        Ok(pass.tape.value(pass.features()).clone())
    }

    /// Trainable scalars held by the parameter store.
    pub fn param_count(&self) -> usize {
        self.params.trainable_count()
    }
}
