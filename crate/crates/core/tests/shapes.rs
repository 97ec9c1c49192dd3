use edgeattn::{generate_shapes, ShapeKind, SyntheticShapesSpec};

fn clean(seed: u64, n: usize) -> SyntheticShapesSpec {
    SyntheticShapesSpec { samples_per_class: n, noise_sigma: 0.0, seed, ..Default::default() }
}

/// Recognises a clean outline from its bounding box alone.
fn classify(img: &[f64], res: usize, b: &edgeattn::BoundingBox) -> ShapeKind {
    let fg = |x: usize, y: usize| img[y * res + x] > 0.5;
    if fg(b.x0, b.y0) {
        return ShapeKind::Square;
    }
    let width = b.x1 - b.x0 + 1;
    let bottom = (b.x0..=b.x1).filter(|&x| fg(x, b.y1)).count();
    if bottom as f64 > 0.6 * width as f64 {
        return ShapeKind::Triangle;
    }
    if fg((b.x0 + b.x1) / 2, (b.y0 + b.y1) / 2) {
        return ShapeKind::Cross;
    }
    ShapeKind::Circle
}

#[test]
fn default_corpus_has_eight_hundred_balanced_samples() {
    let out = generate_shapes(&SyntheticShapesSpec::default()).unwrap();
    assert_eq!(out.dataset.len(), 800);
    assert_eq!(out.dataset.class_counts(), vec![200; 4]);
    assert_eq!(out.dataset.images.shape(), &[800, 1, 28, 28]);
    assert!(out.dataset.images.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn clean_outlines_are_recognisable() {
    let res = 28;
    let out = generate_shapes(&clean(3, 50)).unwrap();
    for i in 0..out.dataset.len() {
        let img = out.dataset.images.plane(i, 0);
        let want = ShapeKind::ALL[out.dataset.labels[i]];
        assert_eq!(classify(img, res, &out.boxes[i]), want, "sample {i}");
    }
}

#[test]
fn outlines_leave_the_interior_empty() {
    let out = generate_shapes(&clean(4, 20)).unwrap();
    for i in 0..out.dataset.len() {
        if ShapeKind::ALL[out.dataset.labels[i]] == ShapeKind::Cross {
            continue;
        }
        let img = out.dataset.images.plane(i, 0);
        let b = out.boxes[i];
        let fill = (b.y0..=b.y1)
            .flat_map(|y| (b.x0..=b.x1).map(move |x| (x, y)))
            .filter(|&(x, y)| img[y * 28 + x] > 0.5)
            .count();
        let area = (b.x1 - b.x0 + 1) * (b.y1 - b.y0 + 1);
        assert!((fill as f64) < 0.75 * area as f64, "sample {i} looks filled");
    }
}

#[test]
fn noise_is_bounded_and_geometry_is_shared() {
    let noisy = generate_shapes(&SyntheticShapesSpec { samples_per_class: 10, seed: 3, ..Default::default() }).unwrap();
    let plain = generate_shapes(&clean(3, 10)).unwrap();
    assert_eq!(noisy.boxes, plain.boxes);
    let diff: Vec<f64> =
        noisy.dataset.images.data().iter().zip(plain.dataset.images.data()).map(|(a, b)| a - b).collect();
    assert!(diff.iter().all(|d| d.abs() <= 4.0 * 0.05 + 1e-12));
    let rms = (diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64).sqrt();
    assert!(rms > 0.02 && rms < 0.06, "rms {rms}");
}
