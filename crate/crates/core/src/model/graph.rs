use serde::{Deserialize, Serialize};

use crate::conv::{Activation, ConvSpec};
use crate::eam::{BranchLayer, EamBranch};
use crate::error::{Error, Result};
use crate::model::params::{Init, ParamDecl};
use crate::pooling::PoolSpec;

/// One backbone stage: a run of convolutions followed by a down-sampling pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub convs: Vec<ConvSpec>,
    #[serde(default = "default_downsample")]
    pub downsample: PoolSpec,
}

fn default_downsample() -> PoolSpec {
    PoolSpec::max(2, 2)
}

impl BlockSpec {
    /// `count` same-padded 3x3 ReLU convolutions then 2x2/2 max pooling.
    pub fn standard(in_channels: usize, out_channels: usize, count: usize) -> Self {
        let convs = (0..count)
            .map(|i| ConvSpec::same3x3(if i == 0 { in_channels } else { out_channels }, out_channels))
            .collect();
        Self { convs, downsample: default_downsample() }
    }

    pub fn out_channels(&self) -> Option<usize> {
        self.convs.last().map(|c| c.out_channels)
    }
}

/// A branch hooked onto a backbone tap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttachedBranch {
    pub label: String,
    pub tap: String,
    pub branch: EamBranch,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Input,
    /// Convolution with bias, optional batch norm, then activation.
    Conv(ConvSpec),
    Pool(PoolSpec),
    Gap,
    Concat,
    /// Dense layer from the concatenated features to class logits.
    Classifier {
        in_features: usize,
        num_classes: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub name: String,
    pub kind: NodeKind,
    /// Indices of producer nodes; always smaller than this node's index.
    pub inputs: Vec<usize>,
    /// Output `(C, H, W)` for a single sample.
    pub shape: [usize; 3],
}

/// Layer DAG: backbone blocks, optional parallel branches, and a classifier
/// over the concatenation of every globally pooled path.
///
/// The node list is derived from the block and branch descriptions, so the
/// graph is acyclic and topologically ordered by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GraphDescription", try_from = "GraphDescription")]
pub struct NetworkGraph {
    input_shape: [usize; 3],
    blocks: Vec<BlockSpec>,
    branches: Vec<AttachedBranch>,
    num_classes: usize,
    nodes: Vec<GraphNode>,
    taps: Vec<(String, usize)>,
    features: usize,
    logits: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDescription {
    input_shape: [usize; 3],
    blocks: Vec<BlockSpec>,
    branches: Vec<AttachedBranch>,
    num_classes: usize,
}

impl From<NetworkGraph> for GraphDescription {
    fn from(g: NetworkGraph) -> Self {
        Self { input_shape: g.input_shape, blocks: g.blocks, branches: g.branches, num_classes: g.num_classes }
    }
}

impl TryFrom<GraphDescription> for NetworkGraph {
    type Error = Error;
    fn try_from(d: GraphDescription) -> Result<Self> {
        NetworkGraph::assemble(d.input_shape, d.blocks, d.branches, d.num_classes)
    }
}

pub fn tap_label(block: usize) -> String {
    format!("block_{block}")
}

impl NetworkGraph {
    pub(crate) fn assemble(
        input_shape: [usize; 3],
        blocks: Vec<BlockSpec>,
        branches: Vec<AttachedBranch>,
        num_classes: usize,
    ) -> Result<Self> {
        if input_shape.contains(&0) {
            return Err(Error::Config(format!("input shape {input_shape:?} has a zero extent")));
        }
        if num_classes < 2 {
            return Err(Error::Config("a classifier needs at least two classes".into()));
        }
        let mut nodes =
            vec![GraphNode { name: "input".into(), kind: NodeKind::Input, inputs: vec![], shape: input_shape }];
        let mut taps = Vec::new();
        let mut cur = 0usize;
        for (bi, block) in blocks.iter().enumerate() {
            let b = bi + 1;
            if block.convs.is_empty() {
                return Err(Error::Config(format!("block {b} has no convolutions")));
            }
            for (ci, spec) in block.convs.iter().enumerate() {
                let name = format!("block{b}.conv{}", ci + 1);
                cur = push_conv(&mut nodes, cur, name, spec)?;
            }
            let [c, h, w] = nodes[cur].shape;
            let (oh, ow) = block.downsample.output_dims(h, w).map_err(|_| {
                Error::Config(format!("block {b} down-sampling collapses the {h}x{w} feature map below 1x1"))
            })?;
            nodes.push(GraphNode {
                name: format!("block{b}.pool"),
                kind: NodeKind::Pool(block.downsample),
                inputs: vec![cur],
                shape: [c, oh, ow],
            });
            cur = nodes.len() - 1;
            taps.push((tap_label(b), cur));
        }
        let base_channels = nodes[cur].shape[0];
        nodes.push(GraphNode {
            name: "base.gap".into(),
            kind: NodeKind::Gap,
            inputs: vec![cur],
            shape: [base_channels, 1, 1],
        });
        let mut pooled = vec![nodes.len() - 1];

        for ab in &branches {
            let &(_, tap_idx) = taps.iter().find(|(l, _)| *l == ab.tap).ok_or_else(|| {
                Error::Config(format!(
                    "branch {} attaches to unknown tap {}; available: {}",
                    ab.label,
                    ab.tap,
                    taps.iter().map(|(l, _)| l.as_str()).collect::<Vec<_>>().join(", ")
                ))
            })?;
            let mut at = tap_idx;
            let convs = ab.branch.layers.iter().filter(|l| matches!(l, BranchLayer::Conv(_))).count();
            let mut seen_convs = 0;
            for layer in &ab.branch.layers {
                match layer {
                    BranchLayer::Pool(spec) => {
                        let [c, h, w] = nodes[at].shape;
                        let (oh, ow) = spec.output_dims(h, w).map_err(|_| {
                            Error::Config(format!(
                                "branch {}: {}x{} pool does not fit the {h}x{w} output of tap {}",
                                ab.label, spec.pool_height, spec.pool_width, ab.tap
                            ))
                        })?;
                        nodes.push(GraphNode {
                            name: format!("{}.pool", ab.label),
                            kind: NodeKind::Pool(*spec),
                            inputs: vec![at],
                            shape: [c, oh, ow],
                        });
                        at = nodes.len() - 1;
                    }
                    BranchLayer::Conv(spec) => {
                        seen_convs += 1;
                        let name = if seen_convs == convs {
                            format!("{}.final", ab.label)
                        } else {
                            format!("{}.conv{seen_convs}", ab.label)
                        };
                        at = push_conv(&mut nodes, at, name, spec)?;
                    }
                    BranchLayer::Gap => {
                        let c = nodes[at].shape[0];
                        nodes.push(GraphNode {
                            name: format!("{}.gap", ab.label),
                            kind: NodeKind::Gap,
                            inputs: vec![at],
                            shape: [c, 1, 1],
                        });
                        at = nodes.len() - 1;
                    }
                }
            }
            if nodes[at].kind != NodeKind::Gap {
                return Err(Error::Config(format!("branch {} must end in global average pooling", ab.label)));
            }
            pooled.push(at);
        }

        let in_features: usize = pooled.iter().map(|&i| nodes[i].shape[0]).sum();
        nodes.push(GraphNode {
            name: "head.concat".into(),
            kind: NodeKind::Concat,
            inputs: pooled,
            shape: [in_features, 1, 1],
        });
        let features = nodes.len() - 1;
        nodes.push(GraphNode {
            name: "classifier".into(),
            kind: NodeKind::Classifier { in_features, num_classes },
            inputs: vec![features],
            shape: [num_classes, 1, 1],
        });
        let logits = nodes.len() - 1;
        Ok(Self { input_shape, blocks, branches, num_classes, nodes, taps, features, logits })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn branches(&self) -> &[AttachedBranch] {
        &self.branches
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    /// Tap labels in block order.
    pub fn taps(&self) -> impl Iterator<Item = &str> {
        self.taps.iter().map(|(l, _)| l.as_str())
    }

    pub fn tap_node(&self, label: &str) -> Option<usize> {
        self.taps.iter().find(|(l, _)| l == label).map(|&(_, i)| i)
    }

    /// Label of the `k`-th tap counted from the end (1 = last block).
    pub fn tap_from_end(&self, k: usize) -> Option<&str> {
        if k == 0 || k > self.taps.len() {
            return None;
        }
        Some(&self.taps[self.taps.len() - k].0)
    }

    /// Output `(C, H, W)` of a tap.
    pub fn tap_shape(&self, label: &str) -> Option<[usize; 3]> {
        self.tap_node(label).map(|i| self.nodes[i].shape)
    }

    /// Channels leaving the last backbone block.
    pub fn base_channels(&self) -> usize {
        self.nodes[self.taps.last().expect("at least one block").1].shape[0]
    }

    /// Width of the classifier input.
    pub fn feature_width(&self) -> usize {
        self.nodes[self.features].shape[0]
    }

    pub fn features_node(&self) -> usize {
        self.features
    }

    pub fn logits_node(&self) -> usize {
        self.logits
    }

    /// Same backbone and classes with every branch removed.
    pub fn without_branches(&self) -> Result<Self> {
        Self::assemble(self.input_shape, self.blocks.clone(), Vec::new(), self.num_classes)
    }

    pub(crate) fn with_branches(&self, extra: Vec<AttachedBranch>) -> Result<Self> {
        let mut branches = self.branches.clone();
        for b in &extra {
            if branches.iter().any(|e| e.label == b.label) {
                return Err(Error::Config(format!("duplicate branch label {}", b.label)));
            }
        }
        branches.extend(extra);
        Self::assemble(self.input_shape, self.blocks.clone(), branches, self.num_classes)
    }

    pub(crate) fn replace_branches(&self, branches: Vec<AttachedBranch>) -> Result<Self> {
        Self::assemble(self.input_shape, self.blocks.clone(), branches, self.num_classes)
    }

    /// Every parameter and buffer the graph reads, in node order.
    pub fn param_decls(&self) -> Vec<ParamDecl> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.kind {
                NodeKind::Conv(spec) => {
                    let fan_in = spec.in_channels * spec.kernel.0 * spec.kernel.1;
                    let o = spec.out_channels;
                    out.push(decl(
                        &node.name,
                        "weight",
                        spec.weight_shape().to_vec(),
                        Init::HeUniform { fan_in },
                        true,
                    ));
                    out.push(decl(&node.name, "bias", vec![o], Init::Constant(0.0), true));
                    if spec.use_batchnorm {
                        out.push(decl(&node.name, "bn.gamma", vec![o], Init::Constant(1.0), true));
                        out.push(decl(&node.name, "bn.beta", vec![o], Init::Constant(0.0), true));
                        out.push(decl(&node.name, "bn.running_mean", vec![o], Init::Constant(0.0), false));
                        out.push(decl(&node.name, "bn.running_var", vec![o], Init::Constant(1.0), false));
                    }
                }
                NodeKind::Classifier { in_features, num_classes } => {
                    out.push(decl(
                        &node.name,
                        "weight",
                        vec![*num_classes, *in_features],
                        Init::HeUniform { fan_in: *in_features },
                        true,
                    ));
                    out.push(decl(&node.name, "bias", vec![*num_classes], Init::Constant(0.0), true));
                }
                _ => {}
            }
        }
        out
    }

    /// Trainable scalar count, enumerated from the layer specs.
    pub fn param_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match &n.kind {
                NodeKind::Conv(spec) => spec.param_count(),
                NodeKind::Classifier { in_features, num_classes } => num_classes * in_features + num_classes,
                _ => 0,
            })
            .sum()
    }
}

fn decl(node: &str, suffix: &str, shape: Vec<usize>, init: Init, trainable: bool) -> ParamDecl {
    ParamDecl { name: format!("{node}.{suffix}"), shape, init, trainable }
}

fn push_conv(nodes: &mut Vec<GraphNode>, from: usize, name: String, spec: &ConvSpec) -> Result<usize> {
    let [c, h, w] = nodes[from].shape;
    spec.validate()?;
    if spec.in_channels != c {
        return Err(Error::Config(format!("{name} expects {} input channels but receives {c}", spec.in_channels)));
    }
    let (oh, ow) =
        spec.output_dims(h, w).map_err(|_| Error::Config(format!("{name}: kernel does not fit the {h}x{w} input")))?;
    nodes.push(GraphNode { name, kind: NodeKind::Conv(*spec), inputs: vec![from], shape: [spec.out_channels, oh, ow] });
    Ok(nodes.len() - 1)
}

impl ConvSpec {
    pub(crate) fn applies_relu(&self) -> bool {
        self.activation == Activation::Relu
    }
}
