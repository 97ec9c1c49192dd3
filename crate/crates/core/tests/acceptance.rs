//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero when any
//! criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::gradcheck::{check_op, CheckReport, REL_TOL, STEP};
use common::*;
use edgeattn::dataio::{decode_pnm, encode_pnm, PnmImage};
use edgeattn::model::{standard_blocks, Mode};
use edgeattn::training::{crossval, train, EarlyStopping, StopDecision, Summary};
use edgeattn::{
    ablation_swap_pool, build_backbone, evaluate, generate_shapes, grad_cam, lr_at_epoch, make_variant, max_pool,
    maxmin_pool, output_extent, pool, softmax_cross_entropy, stratified_kfold, stratified_split, ConfusionMatrix,
    Dataset, EamConfig, MetricsReport, Model, PoolKind, PoolSpec, SplitSpec, SyntheticShapes, SyntheticShapesSpec,
    Tape, Tensor, TrainConfig, Var, Variant,
};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    rows_of(t)
}

// 1. Worked fixtures.
fn fixtures() -> Outcome {
    let one = matrix(&RAMP);
    let two = matrix(&FLAT);
    let checks = [
        (
            "maxmin 5x5|2 flat",
            rows(&maxmin_pool(&two, &PoolSpec::maxmin(5, 2)).unwrap()),
            vec![vec![3., 4.], vec![7., 8.]],
        ),
        (
            "maxmin 2x2|2 ramp",
            rows(&maxmin_pool(&one, &PoolSpec::maxmin(2, 2)).unwrap()),
            vec![vec![5., 6., 6.], vec![8., 8., 10.], vec![16., 19., 18.]],
        ),
        (
            "maxmin 5x5|2 ramp",
            rows(&maxmin_pool(&one, &PoolSpec::maxmin(5, 2)).unwrap()),
            vec![vec![32., 31.], vec![53., 49.]],
        ),
        (
            "max 5x5|2 ramp",
            rows(&max_pool(&one, &PoolSpec::max(5, 2)).unwrap()),
            vec![vec![141., 139.], vec![170., 166.]],
        ),
        (
            "max 5x5|2 flat",
            rows(&max_pool(&two, &PoolSpec::max(5, 2)).unwrap()),
            vec![vec![112., 113.], vec![116., 117.]],
        ),
    ];
    let bad: Vec<&str> = checks.iter().filter(|c| c.1 != c.2).map(|c| c.0).collect();
    outcome(
        bad.is_empty(),
        if bad.is_empty() { "5 fixtures bit-exact, ramp (0,1) = 31".to_owned() } else { format!("mismatch: {bad:?}") },
    )
}

// 2. Output-size law.
fn extents() -> Outcome {
    let mut ok = output_extent(7, 5, 0, 2).unwrap() == 2 && output_extent(7, 2, 0, 2).unwrap() == 3;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tried = 0;
    while tried < 1000 {
        let (n, f, p, s) = (rng.gen_range(1..80), rng.gen_range(1..10), rng.gen_range(0..5), rng.gen_range(1..6));
        if n + 2 * p < f {
            continue;
        }
        tried += 1;
        ok &= output_extent(n, f, p, s).unwrap() == extent_by_enumeration(n, f, p, s);
    }
    outcome(ok, format!("printed cases plus {tried} random tuples against window enumeration"))
}

// 3. Brute-force oracle equivalence.
fn oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut tensors, mut bad) = (0, 0);
    for f in [2usize, 3, 5] {
        for s in [1usize, 2] {
            for p in [0usize, 1] {
                for _ in 0..9 {
                    let (h, w) = (rng.gen_range(f..f + 10), rng.gen_range(f..f + 10));
                    let c = rng.gen_range(1..4);
                    let data = (0..c * h * w).map(|_| rng.gen_range(-50.0..50.0)).collect();
                    let x = Tensor::new(&[1, c, h, w], data).unwrap();
                    for kind in [PoolKind::Max, PoolKind::MaxMin] {
                        let got = pool(&x, &PoolSpec::square(kind, f, s).with_padding(p)).unwrap();
                        for ch in 0..c {
                            let want: Vec<f64> = brute_pool(x.plane(0, ch), h, w, f, s, p, kind).concat();
                            if got.plane(0, ch) != want.as_slice() {
                                bad += 1;
                            }
                        }
                    }
                    tensors += 1;
                }
            }
        }
    }
    outcome(bad == 0 && tensors >= 100, format!("{tensors} random tensors, {bad} mismatching planes"))
}

fn distinct(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(shape, distinct_values(shape.iter().product(), rng)).unwrap()
}

fn random(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

// 4. Finite-difference gradient checks.
fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut total = CheckReport::default();
    for spec in [
        PoolSpec::max(2, 2),
        PoolSpec::max(3, 1).with_padding(1),
        PoolSpec::maxmin(3, 2).with_padding(1),
        PoolSpec::maxmin(5, 2),
    ] {
        let x = distinct(&[2, 2, 8, 8], &mut rng);
        total.merge(check_op("pool", &[x], &|t: &mut Tape, v: &[Var]| t.pool(v[0], &spec).unwrap(), 100, &mut rng));
    }
    let spec = edgeattn::ConvSpec::same3x3(2, 3).with_activation(edgeattn::Activation::None);
    let conv_inputs = [
        random(&[2, 2, 6, 6], 1.0, &mut rng),
        random(&spec.weight_shape(), 0.5, &mut rng),
        random(&[3], 0.5, &mut rng),
    ];
    total.merge(check_op(
        "conv2d",
        &conv_inputs,
        &|t: &mut Tape, v: &[Var]| t.conv2d(v[0], v[1], Some(v[2]), &spec).unwrap(),
        40,
        &mut rng,
    ));
    let a = random(&[2, 3, 4, 4], 1.0, &mut rng);
    let b = random(&[2, 2, 4, 4], 1.0, &mut rng);
    total.merge(check_op(
        "gap",
        std::slice::from_ref(&a),
        &|t: &mut Tape, v: &[Var]| t.global_average_pool(v[0]).unwrap(),
        40,
        &mut rng,
    ));
    total.merge(check_op(
        "concat",
        &[a, b],
        &|t: &mut Tape, v: &[Var]| t.concat_channels(&[v[0], v[1]]).unwrap(),
        40,
        &mut rng,
    ));
    let labels = [1usize, 0, 2];
    let cls = [random(&[3, 5, 1, 1], 1.0, &mut rng), random(&[3, 5], 0.5, &mut rng), random(&[3], 0.5, &mut rng)];
    total.merge(check_op(
        "classifier",
        &cls,
        &|t: &mut Tape, v: &[Var]| {
            let z = t.linear(v[0], v[1], Some(v[2])).unwrap();
            t.softmax_cross_entropy(z, &labels).unwrap().0
        },
        15,
        &mut rng,
    ));

    // Full eam graph, 20 sampled parameter coordinates.
    let g = build_backbone(standard_blocks(1, &[4, 8, 16], 1), 3, [1, 28, 28]).unwrap();
    let model = Model::new(make_variant(&g, Variant::Eam).unwrap(), 4);
    let x = random(&[2, 1, 28, 28], 1.0, &mut rng);
    let y = [2usize, 1];
    let mut pass = model.forward(&x, Mode::Train, &|_| true).unwrap();
    let logits = pass.logits();
    let (loss, _) = pass.tape.softmax_cross_entropy(logits, &y).unwrap();
    let grads = pass.tape.backward(loss).unwrap();
    let params: Vec<(String, Var)> = pass.params.clone();
    let mut graph_checked = 0;
    for _ in 0..20 {
        let (name, var) = &params[rng.gen_range(0..params.len())];
        let n = model.params.get(name).unwrap().numel();
        let j = sample(&mut rng, n, 1).index(0);
        let analytic = grads.get(*var).map_or(0.0, |g| g.data()[j]);
        let probe = |delta: f64| {
            let mut m = model.clone();
            let t = m.params.get(name).unwrap();
            let mut d = t.data().to_vec();
            d[j] += delta;
            let t = Tensor::new(t.shape(), d).unwrap();
            m.params.set(name, t).unwrap();
            softmax_cross_entropy(&m.logits(&x).unwrap(), &y).unwrap().1
        };
        let numeric = (probe(STEP) - probe(-STEP)) / (2.0 * STEP);
        total.checked += 1;
        graph_checked += 1;
        if !grad_close(analytic, numeric, REL_TOL) {
            total.failures.push(format!("{name}[{j}]: {analytic:e} vs {numeric:e}"));
        }
    }
    outcome(
        total.ok(),
        format!(
            "{} coordinates ({graph_checked} through the eam graph), {} failures{}",
            total.checked,
            total.failures.len(),
            total.failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

// 5. Offset invariance, scale equivariance, constants to zero.
fn identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ok = true;
    for _ in 0..300 {
        let x = Tensor::new(&[1, 2, 9, 9], (0..162).map(|_| f64::from(rng.gen_range(-500i32..500))).collect()).unwrap();
        let k = f64::from(rng.gen_range(-10_000i32..10_000));
        let a = 2f64.powi(rng.gen_range(-6..7));
        let spec = [PoolSpec::maxmin(2, 2), PoolSpec::maxmin(3, 1).with_padding(1), PoolSpec::maxmin(5, 2)]
            [rng.gen_range(0..3)];
        let base = maxmin_pool(&x, &spec).unwrap();
        ok &= maxmin_pool(&x.map(|v| v + k), &spec).unwrap() == base;
        ok &= maxmin_pool(&x.map(|v| v * a), &spec).unwrap() == base.map(|v| v * a);
        let c = Tensor::full(&[1, 1, 9, 9], k * 0.37);
        ok &= maxmin_pool(&c, &spec).unwrap().data().iter().all(|&v| v == 0.0);
    }
    outcome(ok, "300 random cases: offset, power-of-two scale and constant inputs exact")
}

// 6. Topology and ratio.
fn topology() -> Outcome {
    let wide = build_backbone(standard_blocks(3, &[8, 16, 32, 256], 1), 5, [3, 64, 64]).unwrap();
    let eam = make_variant(&wide, Variant::Eam).unwrap();
    let eam2 = make_variant(&wide, Variant::Eam2).unwrap();
    let abl = make_variant(&wide, Variant::Eam2MaxpoolAblation).unwrap();
    let filters = eam.branches()[0].branch.final_conv().out_channels;
    let width = eam.feature_width();
    let no_interior = eam2.branches()[0].branch.interior_count() == 0;
    let counts_equal = eam2.param_count() == abl.param_count()
        && Model::new(eam2.clone(), 0).param_count() == Model::new(abl.clone(), 0).param_count()
        && ablation_swap_pool(&EamConfig::default()).unwrap().pool.kind == PoolKind::Max;

    let small = build_backbone(standard_blocks(1, &[4, 8, 32], 1), 3, [1, 28, 28]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = Tensor::new(&[2, 1, 28, 28], (0..2 * 784).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let want = Model::new(small.clone(), 6).features(&x).unwrap();
    let mut zero_ok = true;
    for v in [Variant::Eam, Variant::Eam2] {
        let mut m = Model::new(make_variant(&small, v).unwrap(), 6);
        let names: Vec<String> = m.params.names().filter(|n| n.starts_with("eam")).map(str::to_owned).collect();
        for n in names {
            let z = Tensor::zeros(m.params.get(&n).unwrap().shape());
            m.params.set(&n, z).unwrap();
        }
        let got = m.features(&x).unwrap();
        zero_ok &= got.slice_channels(0, small.base_channels()).unwrap() == want;
    }
    let ok = filters == 16 && width == 272 && no_interior && counts_equal && zero_ok;
    outcome(
        ok,
        format!(
            "final filters {filters}, concat width {width}, eam2 branch-1 interior-free {no_interior}, ablation counts equal {counts_equal}, zeroed branches match baseline {zero_ok}"
        ),
    )
}

struct Trained {
    shapes: SyntheticShapes,
    test_idx: Vec<usize>,
    eam_model: Model,
}

fn desk_setup(seed: u64) -> (SyntheticShapes, Dataset, Dataset, Dataset, Vec<usize>) {
    let shapes = generate_shapes(&SyntheticShapesSpec { seed, ..Default::default() }).unwrap();
    let d = &shapes.dataset;
    let split = stratified_split(&d.labels, &SplitSpec::default().with_seed(seed)).unwrap();
    let (tr, va, te) = (d.subset(&split.train).unwrap(), d.subset(&split.val).unwrap(), d.subset(&split.test).unwrap());
    (shapes, tr, va, te, split.test)
}

fn desk_config(seed: u64) -> TrainConfig {
    TrainConfig { base_lr: 1e-4, batch_size: 6, max_epochs: 30, patience: 30, seed, ..Default::default() }
}

fn epochs_to_reach(losses: &[f64], target: f64) -> Option<usize> {
    losses.iter().position(|&l| l <= target).map(|i| i + 1)
}

// 7. Desk-scale training efficacy.
fn efficacy(trained: &mut Option<Trained>) -> Outcome {
    let backbone = build_backbone(standard_blocks(1, &[16, 32, 64], 1), 4, [1, 28, 28]).unwrap();
    let mut faster = 0;
    let mut lines = Vec::new();
    let mut baseline_acc_ok = true;
    for seed in 0..3u64 {
        let (shapes, tr, va, te, test_idx) = desk_setup(seed);
        let config = desk_config(seed);
        let mut base = Model::new(backbone.clone(), seed);
        let hb = train(&mut base, &tr, &va, &config).unwrap();
        let acc = evaluate(&base, &te).unwrap().accuracy;
        let mut eam = Model::new(make_variant(&backbone, Variant::Eam).unwrap(), seed);
        let he = train(&mut eam, &tr, &va, &config).unwrap();
        let lb = hb.train_losses();
        let le = he.train_losses();
        let target = *lb.last().unwrap();
        let nb = epochs_to_reach(&lb, target).unwrap();
        let ne = epochs_to_reach(&le, target);
        if ne.is_some_and(|e| e <= nb) {
            faster += 1;
        }
        if seed == 0 {
            baseline_acc_ok = acc >= 0.90;
            *trained = Some(Trained { shapes, test_idx, eam_model: eam });
        }
        lines.push(format!(
            "seed {seed}: baseline acc {acc:.3}, loss {target:.3} at epoch {nb}, eam reaches it at {}",
            ne.map_or("never".to_owned(), |e| e.to_string())
        ));
    }
    outcome(baseline_acc_ok && faster >= 2, format!("{}; eam no slower in {faster}/3 seeds", lines.join("; ")))
}

// 8. Training protocol.
fn protocol() -> Outcome {
    let c = TrainConfig::default();
    let mut lr_ok = true;
    for e in 1..=60usize {
        let mut want = 1e-4;
        for _ in 2..e {
            want *= 0.97;
        }
        lr_ok &= (lr_at_epoch(&c, e) - want).abs() <= 1e-15;
    }

    let mut es = EarlyStopping::new(3);
    let decisions: Vec<StopDecision> =
        [1.0, 0.9, 0.95, 0.94, 0.93].iter().enumerate().map(|(i, &l)| es.observe(i + 1, l)).collect();
    let es_fixture = decisions[4] == StopDecision::Stop && es.best_epoch() == 2;

    // A short real run that must hit the patience stop.
    let shapes =
        generate_shapes(&SyntheticShapesSpec { samples_per_class: 12, resolution: 16, seed: 8, ..Default::default() })
            .unwrap();
    let d = &shapes.dataset;
    let split = stratified_split(&d.labels, &SplitSpec::default().with_seed(8)).unwrap();
    let (tr, va) = (d.subset(&split.train).unwrap(), d.subset(&split.val).unwrap());
    let g = build_backbone(standard_blocks(1, &[4, 8, 8], 1), 4, [1, 16, 16]).unwrap();
    let mut m = Model::new(g, 8);
    let cfg = TrainConfig { base_lr: 0.05, batch_size: 4, max_epochs: 60, patience: 3, seed: 8, ..Default::default() };
    let h = train(&mut m, &tr, &va, &cfg).unwrap();
    let restored = edgeattn::training::loss_and_accuracy(&m, &va).unwrap().0;
    let run_ok = h.stopped_early
        && h.epochs.len() == h.best_epoch + cfg.patience
        && restored == h.epochs[h.best_epoch - 1].val_loss;

    let mut split_ok = true;
    let labels: Vec<usize> = {
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        (0..537).map(|_| rng.gen_range(0..5)).collect()
    };
    let counts: Vec<usize> = (0..5).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
    let s = stratified_split(&labels, &SplitSpec::default()).unwrap();
    for (part, r) in [(&s.train, 0.65), (&s.val, 0.15), (&s.test, 0.20)] {
        for (c, &n) in counts.iter().enumerate() {
            let got = part.iter().filter(|&&i| labels[i] == c).count() as f64;
            split_ok &= (got - r * n as f64).abs() < 1.0 + 1e-9;
        }
    }
    let folds = stratified_kfold(&labels, 5, 3).unwrap();
    let mut seen = vec![0; labels.len()];
    for (_, test) in &folds {
        for (c, &n) in counts.iter().enumerate() {
            let got = test.iter().filter(|&&i| labels[i] == c).count() as f64;
            split_ok &= (got - n as f64 / 5.0).abs() < 1.0;
        }
        test.iter().for_each(|&i| seen[i] += 1);
    }
    split_ok &= seen.iter().all(|&s| s == 1);
    outcome(
        lr_ok && es_fixture && run_ok && split_ok,
        format!(
            "lr schedule {lr_ok}, patience fixture {es_fixture}, real run stopped at epoch {} (best {}) with restored weights {run_ok}, splits and folds within one sample {split_ok}",
            h.epochs.len(),
            h.best_epoch
        ),
    )
}

// 9. Metrics.
fn metrics() -> Outcome {
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let cm = ConfusionMatrix::from_counts(vec![vec![7, 1, 2], vec![3, 5, 0], vec![1, 1, 9]]).unwrap();
    let r = MetricsReport::from_confusion(cm, &names).unwrap();
    let p = [7.0 / 11.0, 5.0 / 7.0, 9.0 / 11.0];
    let rc = [7.0 / 10.0, 5.0 / 8.0, 9.0 / 11.0];
    let f1: Vec<f64> = (0..3).map(|i| 2.0 * p[i] * rc[i] / (p[i] + rc[i])).collect();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let fixture_ok = close(r.accuracy, 21.0 / 29.0)
        && close(r.precision, p.iter().sum::<f64>() / 3.0)
        && close(r.recall, rc.iter().sum::<f64>() / 3.0)
        && close(r.f1, f1.iter().sum::<f64>() / 3.0);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 10_000;
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
    let scores = Tensor::new(&[n, 3], (0..3 * n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let auc = MetricsReport::from_scores(&scores, &labels, &names).unwrap().auc.unwrap();
    let auc_ok = (auc - 0.5).abs() <= 0.05;

    let shapes =
        generate_shapes(&SyntheticShapesSpec { samples_per_class: 10, resolution: 16, seed: 9, ..Default::default() })
            .unwrap();
    let g = build_backbone(standard_blocks(1, &[4, 8, 8], 1), 4, [1, 16, 16]).unwrap();
    let cfg = TrainConfig { base_lr: 3e-3, batch_size: 8, max_epochs: 3, seed: 9, ..Default::default() };
    let (report, _) = crossval(&|f| Ok(Model::new(g.clone(), f as u64)), &shapes.dataset, 5, 0.2, &cfg).unwrap();
    let mut cv_ok = report.folds.len() == 5;
    for (summary, col) in [
        (report.accuracy, report.folds.iter().map(|r| r.accuracy).collect::<Vec<_>>()),
        (report.f1, report.folds.iter().map(|r| r.f1).collect()),
    ] {
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
        cv_ok &= close(summary.mean, mean) && close(summary.std, var.sqrt()) && summary == Summary::of(&col);
    }
    outcome(
        fixture_ok && auc_ok && cv_ok,
        format!("3-class fixture {fixture_ok}, random-score AUC {auc:.4}, 5-fold summary recomputes {cv_ok}"),
    )
}

/// A smooth synthetic "photo": Gaussian blobs on a gradient with mild noise,
/// quantised to 8 bits through the PGM codec.
fn photo(seed: u64, size: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (gx, gy) = (rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0));
    let blobs: Vec<(f64, f64, f64, f64)> = (0..rng.gen_range(2..7))
        .map(|_| {
            (
                rng.gen_range(0.0..size as f64),
                rng.gen_range(0.0..size as f64),
                rng.gen_range(3.0..size as f64 / 3.0),
                rng.gen_range(-120.0..120.0),
            )
        })
        .collect();
    let mut samples = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (u, v) = (x as f64 / size as f64, y as f64 / size as f64);
            let mut val = 128.0 + gx * (u - 0.5) + gy * (v - 0.5);
            for &(cx, cy, r, amp) in &blobs {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                val += amp * (-d2 / (2.0 * r * r)).exp();
            }
            val += rng.gen_range(-3.0..3.0);
            samples.push(val.round().clamp(0.0, 255.0) as u16);
        }
    }
    let img = PnmImage { width: size, height: size, channels: 1, maxval: 255, samples };
    decode_pnm(&encode_pnm(&img)).unwrap().to_raw_tensor()
}

// 10. Edge-map pool-size comparison.
fn edge_strength() -> Outcome {
    let one = matrix(&RAMP);
    let big = maxmin_pool(&one, &PoolSpec::maxmin(5, 2)).unwrap().mean();
    let small = maxmin_pool(&one, &PoolSpec::maxmin(2, 2)).unwrap().mean();
    let fixture_ok = big > small && big == 165.0 / 4.0 && small == 96.0 / 9.0;
    let mut stronger = 0;
    for s in 0..50 {
        let x = photo(1000 + s, 64);
        let b = maxmin_pool(&x, &PoolSpec::maxmin(5, 2)).unwrap().mean();
        let a = maxmin_pool(&x, &PoolSpec::maxmin(2, 2)).unwrap().mean();
        if b > a {
            stronger += 1;
        }
    }
    outcome(
        fixture_ok && stronger * 10 >= 50 * 9,
        format!("ramp means {big:.3} vs {small:.3}; 5x5 stronger on {stronger}/50 synthetic photos"),
    )
}

// 11. Grad-CAM.
fn gradcam(trained: &Option<Trained>) -> Outcome {
    let Some(t) = trained else {
        return outcome(false, "no trained model from criterion 7");
    };
    let d = &t.shapes.dataset;
    let m = &t.eam_model;
    let mut inside_count = 0;
    let mut normalized = true;
    let mut deterministic = true;
    for &i in &t.test_idx {
        let x = d.images.select_batch(&[i]).unwrap();
        let h = grad_cam(m, &x, Some(d.labels[i]), None).unwrap();
        if i == t.test_idx[0] {
            deterministic = grad_cam(m, &x, Some(d.labels[i]), None).unwrap() == h;
        }
        let up = &h.upsampled;
        normalized &= up.data().iter().all(|v| (0.0..=1.0).contains(v));
        normalized &= up.max_value() == 1.0 || up.max_value() == 0.0;
        let b = t.shapes.boxes[i];
        let [_, _, hh, ww] = up.nchw();
        let (mut inside, mut total) = (0.0, 0.0);
        for y in 0..hh {
            for xx in 0..ww {
                let v = up.data()[y * ww + xx];
                total += v;
                if b.contains(xx, y) {
                    inside += v;
                }
            }
        }
        if total > 0.0 && inside / total >= 0.5 {
            inside_count += 1;
        }
    }
    // Zero-weight class: silence one classifier row.
    let mut silent = m.clone();
    let w = silent.params.get("classifier.weight").unwrap().clone();
    let k = w.shape()[1];
    let mut data = w.data().to_vec();
    data[..k].iter_mut().for_each(|v| *v = 0.0);
    silent.params.set("classifier.weight", Tensor::new(w.shape(), data).unwrap()).unwrap();
    let x = d.images.select_batch(&[t.test_idx[0]]).unwrap();
    let zero_ok = grad_cam(&silent, &x, Some(0), None).unwrap().upsampled.data().iter().all(|&v| v == 0.0);
    let n = t.test_idx.len();
    outcome(
        normalized && deterministic && zero_ok && inside_count * 10 >= n * 7,
        format!(
            "{inside_count}/{n} test maps put >= 50% of mass in the box; normalized {normalized}, deterministic {deterministic}, zero class {zero_ok}"
        ),
    )
}

type Criterion = Box<dyn FnOnce(&mut Option<Trained>) -> Outcome>;

fn main() {
    let mut trained = None;
    let criteria: Vec<(u32, Duration, Criterion)> = vec![
        (1, Duration::from_secs(1), Box::new(|_| fixtures())),
        (2, Duration::from_secs(1), Box::new(|_| extents())),
        (3, Duration::from_secs(10), Box::new(|_| oracle())),
        (4, Duration::from_secs(60), Box::new(|_| gradients())),
        (5, Duration::from_secs(5), Box::new(|_| identities())),
        (6, Duration::from_secs(5), Box::new(|_| topology())),
        (7, Duration::from_secs(15 * 60), Box::new(efficacy)),
        (8, Duration::from_secs(70), Box::new(|_| protocol())),
        (9, Duration::from_secs(10), Box::new(|_| metrics())),
        (10, Duration::from_secs(30), Box::new(|_| edge_strength())),
        (11, Duration::from_secs(5 * 60), Box::new(|t| gradcam(t))),
    ];
    let mut failed = 0;
    for (id, budget, run) in criteria {
        let start = Instant::now();
        let o = run(&mut trained);
        let took = start.elapsed();
        let pass = o.pass && took <= budget;
        if !pass {
            failed += 1;
        }
        let timing = if took <= budget { String::new() } else { format!(" (over the {}s budget)", budget.as_secs()) };
        println!(
            "criterion {id:>2}: {} [{:.2}s] {}{timing}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
