//! Max-Min pooling and edge attention branches on a small CNN stack.

pub mod conv;
pub mod dataio;
pub mod eam;
pub mod error;
pub mod explain;
mod linalg;
pub mod model;
pub mod pooling;
pub mod seed;
pub mod tape;
pub mod tensor;
pub mod training;

pub use conv::{conv2d, Activation, ConvSpec};
pub use dataio::{
    generate_shapes, load_dataset, scan_dataset, BoundingBox, Dataset, DatasetManifest, ShapeKind, SyntheticShapes,
    SyntheticShapesSpec,
};
pub use eam::{ablation_swap_pool, attach_branches, build_eam, AttachPoint, EamBranch, EamConfig, InteriorConvs};
pub use error::{Error, ErrorKind, Result};
pub use explain::{colorize, grad_cam, overlay, Heatmap};
pub use model::{build_backbone, make_variant, BlockSpec, Model, NetworkGraph, Variant};
pub use pooling::{
    edge_map, max_pool, maxmin_pool, output_extent, pool, pool_backward, window_stats, PoolKind, PoolSpec, WindowStats,
};
pub use tape::{concat_channels, global_average_pool, linear, softmax_cross_entropy, Gradients, Tape, Var};
pub use tensor::Tensor;
pub use training::{
    crossval, evaluate, lr_at_epoch, stratified_kfold, stratified_split, train, ConfusionMatrix, EarlyStopping,
    FoldReport, History, MetricsReport, SplitSpec, TrainConfig,
};
