#![allow(dead_code)]

pub mod gradcheck;

use edgeattn::{PoolKind, Tensor};

pub const RAMP: [[f64; 7]; 7] = [
    [109., 110., 110., 109., 110., 108., 111.],
    [114., 113., 115., 114., 112., 114., 113.],
    [121., 121., 121., 117., 118., 121., 118.],
    [129., 128., 125., 123., 121., 128., 124.],
    [141., 140., 139., 136., 135., 139., 131.],
    [156., 155., 151., 155., 150., 153., 149.],
    [170., 169., 166., 166., 163., 162., 160.],
];

pub const FLAT: [[f64; 7]; 7] = [
    [109., 109., 110., 109., 110., 109., 110.],
    [110., 109., 111., 110., 110., 110., 111.],
    [110., 110., 110., 111., 111., 109., 111.],
    [111., 109., 110., 109., 112., 109., 110.],
    [111., 111., 111., 111., 110., 112., 113.],
    [114., 112., 113., 112., 113., 110., 114.],
    [116., 112., 114., 116., 112., 111., 117.],
];

pub fn matrix(rows: &[[f64; 7]; 7]) -> Tensor {
    let v: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Tensor::from_rows(&v).unwrap()
}

pub fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    let [_, _, _, w] = t.nchw();
    t.data().chunks(w).map(|r| r.to_vec()).collect()
}

/// Number of window start positions that fit, by enumeration.
pub fn extent_by_enumeration(n: usize, f: usize, p: usize, s: usize) -> usize {
    let padded = n + 2 * p;
    let mut count = 0;
    let mut start = 0;
    while start + f <= padded {
        count += 1;
        start += s;
    }
    count
}

/// Brute-force pooling of one plane. Builds the padded plane explicitly,
/// then reduces every window.
pub fn brute_pool(plane: &[f64], h: usize, w: usize, f: usize, s: usize, p: usize, kind: PoolKind) -> Vec<Vec<f64>> {
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let mut padded = vec![vec![f64::NAN; pw]; ph];
    for (y, row) in padded.iter_mut().enumerate() {
        for (x, cell) in row.iter_mut().enumerate() {
            let inside = y >= p && y < h + p && x >= p && x < w + p;
            *cell = match (kind, inside) {
                (_, true) => plane[(y - p) * w + (x - p)],
                (PoolKind::Max, false) => f64::NEG_INFINITY,
                (PoolKind::Average, false) => 0.0,
                (PoolKind::MaxMin, false) => {
                    let sy = y.clamp(p, h + p - 1) - p;
                    let sx = x.clamp(p, w + p - 1) - p;
                    plane[sy * w + sx]
                }
            };
        }
    }
    let oh = extent_by_enumeration(h, f, p, s);
    let ow = extent_by_enumeration(w, f, p, s);
    (0..oh)
        .map(|oy| {
            (0..ow)
                .map(|ox| {
                    let cells: Vec<f64> = (0..f)
                        .flat_map(|dy| (0..f).map(move |dx| (dy, dx)))
                        .map(|(dy, dx)| padded[oy * s + dy][ox * s + dx])
                        .collect();
                    let hi = cells.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lo = cells.iter().cloned().fold(f64::INFINITY, f64::min);
                    match kind {
                        PoolKind::Max => hi,
                        PoolKind::MaxMin => hi - lo,
                        PoolKind::Average => cells.iter().sum::<f64>() / cells.len() as f64,
                    }
                })
                .collect()
        })
        .collect()
}

/// Central-difference derivative.
pub fn central_difference(f: &mut dyn FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Relative agreement, with an absolute floor for gradients that are zero up
/// to rounding.
pub fn grad_close(analytic: f64, numeric: f64, rel: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= rel * analytic.abs().max(numeric.abs()) || diff <= 1e-9
}

/// A shuffled ramp with small jitter: all values distinct by at least ~0.006.
pub fn distinct_values(n: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.into_iter().map(|i| 0.01 * i as f64 - 0.005 * n as f64 + rng.gen_range(-0.002..0.002)).collect()
}
