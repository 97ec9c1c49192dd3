use edgeattn::model::{build_shallow_backbone, standard_blocks};
use edgeattn::{
    ablation_swap_pool, build_backbone, make_variant, EamConfig, Error, Model, NetworkGraph, PoolKind, Tensor, Variant,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn wide_backbone() -> NetworkGraph {
    build_backbone(standard_blocks(3, &[8, 16, 32, 256], 1), 5, [3, 64, 64]).unwrap()
}

fn small_backbone() -> NetworkGraph {
    build_backbone(standard_blocks(1, &[4, 8, 32], 1), 3, [1, 28, 28]).unwrap()
}

#[test]
fn sixteen_to_one_on_256_channels() {
    let g = make_variant(&wide_backbone(), Variant::Eam).unwrap();
    let branch = &g.branches()[0];
    assert_eq!(branch.tap, "block_3");
    assert_eq!(branch.branch.final_conv().out_channels, 16);
    assert_eq!(g.base_channels(), 256);
    assert_eq!(g.feature_width(), 272);
}

#[test]
fn eam2_first_branch_has_no_interior_convs() {
    let g = make_variant(&wide_backbone(), Variant::Eam2).unwrap();
    let b = g.branches();
    assert_eq!(b.len(), 2);
    assert_eq!((b[0].tap.as_str(), b[1].tap.as_str()), ("block_2", "block_3"));
    assert_eq!(b[0].branch.interior_count(), 0);
    assert_eq!(b[1].branch.interior_count(), 3);
    assert_eq!(g.feature_width(), 256 + 16 + 16);
}

#[test]
fn zeroed_branches_reproduce_baseline_features() {
    let base = small_backbone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = Tensor::new(&[3, 1, 28, 28], (0..3 * 784).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let baseline = Model::new(base.clone(), 21);
    let want = baseline.features(&x).unwrap();
    for variant in [Variant::Eam, Variant::Eam2, Variant::Eam2MaxpoolAblation] {
        let mut model = Model::new(make_variant(&base, variant).unwrap(), 21);
        let branch_params: Vec<String> =
            model.params.names().filter(|n| n.starts_with("eam")).map(str::to_owned).collect();
        assert!(!branch_params.is_empty());
        for name in branch_params {
            let shape = model.params.get(&name).unwrap().shape().to_vec();
            model.params.set(&name, Tensor::zeros(&shape)).unwrap();
        }
        let got = model.features(&x).unwrap();
        let c = base.base_channels();
        assert_eq!(got.slice_channels(0, c).unwrap(), want, "{variant}");
        let extra = got.slice_channels(c, got.nchw()[1]).unwrap();
        assert!(extra.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn ablation_keeps_parameter_counts() {
    for base in [wide_backbone(), small_backbone()] {
        let eam2 = make_variant(&base, Variant::Eam2).unwrap();
        let abl = make_variant(&base, Variant::Eam2MaxpoolAblation).unwrap();
        assert_eq!(eam2.param_count(), abl.param_count());
        assert_eq!(Model::new(eam2.clone(), 1).param_count(), Model::new(abl.clone(), 1).param_count());
        assert!(abl.branches().iter().all(|b| b.branch.pool().kind == PoolKind::Max));
        assert!(eam2.branches().iter().all(|b| b.branch.pool().kind == PoolKind::MaxMin));
    }
    let swapped = ablation_swap_pool(&EamConfig::default()).unwrap();
    assert_eq!(swapped.pool.kind, PoolKind::Max);
    assert!(matches!(ablation_swap_pool(&swapped), Err(Error::Usage(_))));
}

#[test]
fn graph_count_matches_stored_parameters() {
    for v in Variant::ALL {
        let g = make_variant(&wide_backbone(), v).unwrap();
        assert_eq!(Model::new(g.clone(), 0).param_count(), g.param_count(), "{v}");
    }
}

#[test]
fn eam2_needs_a_third_last_tap() {
    let two = build_shallow_backbone(standard_blocks(1, &[8, 16], 1), 3, [1, 28, 28]).unwrap();
    let err = make_variant(&two, Variant::Eam2).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(err.to_string().contains("third-last"), "{err}");
}

#[test]
fn undersized_tap_is_a_config_error() {
    let four = build_backbone(standard_blocks(1, &[4, 8, 16, 32], 1), 3, [1, 28, 28]).unwrap();
    let err = make_variant(&four, Variant::Eam).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert!(err.to_string().contains("block_3"), "{err}");
}

#[test]
fn tiny_base_width_needs_opt_in() {
    let narrow = build_backbone(standard_blocks(1, &[4, 4, 8], 1), 3, [1, 28, 28]).unwrap();
    assert!(matches!(make_variant(&narrow, Variant::Eam), Err(Error::Config(_))));
}
