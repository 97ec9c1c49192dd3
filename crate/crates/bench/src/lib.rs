//! Inputs shared by the benchmarks.

use edgeattn::model::standard_blocks;
use edgeattn::{build_backbone, make_variant, Model, Tensor, Variant};

/// Deterministic pseudo-random values in `[0, 1)`.
pub fn noise_tensor(shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|i| ((i as f64 * 12.9898).sin() * 43758.5453).fract().abs()).collect();
    Tensor::new(shape, data).expect("shape matches data")
}

/// Three 16/32/64 blocks on 28x28 grayscale, four classes.
pub fn desk_model(variant: Variant) -> Model {
    let g = build_backbone(standard_blocks(1, &[16, 32, 64], 1), 4, [1, 28, 28]).expect("valid backbone");
    Model::new(make_variant(&g, variant).expect("valid variant"), 0)
}
