//! Max, Max-Min and average pooling with their backward rules.
//!
//! Max-Min pooling emits `max(window) - min(window)` for every window, i.e. a
//! flat-structuring-element morphological gradient sampled at the stride. Its
//! output ignores the intensity level of a window and keeps only the spread,
//! which is why a constant offset never changes it.
//!
//! Windows are laid out by the usual extent law
//! `floor((n - f + 2p) / s) + 1` (see [`output_extent`]). Padding differs by
//! kind: max pooling pads with negative infinity, Max-Min pooling replicates
//! the nearest edge pixel (so padding never manufactures an edge), and average
//! pooling pads with zeros that count towards the divisor.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    #[serde(alias = "max-min", alias = "max_min")]
    MaxMin,
    Average,
}

impl std::fmt::Display for PoolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PoolKind::Max => "max",
            PoolKind::MaxMin => "maxmin",
            PoolKind::Average => "average",
        })
    }
}

/// Pooling window geometry.
///
/// `pool_width` runs along the horizontal axis (columns), `pool_height` along
/// the vertical axis (rows). Stride and padding are shared by both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub kind: PoolKind,
    pub pool_height: usize,
    pub pool_width: usize,
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
}

impl PoolSpec {
    pub fn square(kind: PoolKind, size: usize, stride: usize) -> Self {
        Self { kind, pool_height: size, pool_width: size, stride, padding: 0 }
    }

    pub fn max(size: usize, stride: usize) -> Self {
        Self::square(PoolKind::Max, size, stride)
    }

    pub fn maxmin(size: usize, stride: usize) -> Self {
        Self::square(PoolKind::MaxMin, size, stride)
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_kind(mut self, kind: PoolKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_height == 0 || self.pool_width == 0 {
            return Err(Error::Config(format!("pool extents must be positive: {self:?}")));
        }
        if self.stride == 0 {
            return Err(Error::Config("pool stride must be positive".into()));
        }
        // Every window must contain at least one real pixel.
        if self.padding >= self.pool_height.min(self.pool_width) {
            return Err(Error::Config(format!(
                "padding {} must be smaller than the pool extents {}x{}",
                self.padding, self.pool_height, self.pool_width
            )));
        }
        Ok(())
    }

    /// Output `(rows, cols)` for an input plane of `(rows, cols)`.
    pub fn output_dims(&self, rows: usize, cols: usize) -> Result<(usize, usize)> {
        self.validate()?;
        Ok((
            output_extent(rows, self.pool_height, self.padding, self.stride)?,
            output_extent(cols, self.pool_width, self.padding, self.stride)?,
        ))
    }
}

/// Number of window positions along one axis: `floor((n - f + 2p) / s) + 1`.
pub fn output_extent(n: usize, f: usize, p: usize, s: usize) -> Result<usize> {
    if s == 0 || f == 0 {
        return Err(dim_err!("window {f} and stride {s} must be positive"));
    }
    if n + 2 * p < f {
        return Err(dim_err!("window {f} larger than padded input {} (n={n}, p={p})", n + 2 * p));
    }
    Ok((n + 2 * p - f) / s + 1)
}

/// Forward result with the routing information the backward pass needs.
#[derive(Debug, Clone)]
pub(crate) struct PoolForward {
    pub output: Tensor,
    /// Flat input index of each window's maximum (max / maxmin).
    pub argmax: Vec<u32>,
    /// Flat input index of each window's minimum (maxmin only).
    pub argmin: Vec<u32>,
}

struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

fn geometry(x: &Tensor, spec: &PoolSpec) -> Result<Geometry> {
    if x.rank() < 2 {
        return Err(dim_err!("pooling needs at least a 2-D input, got {:?}", x.shape()));
    }
    let [n, c, h, w] = x.nchw();
    let (oh, ow) = spec.output_dims(h, w)?;
    Ok(Geometry { n, c, h, w, oh, ow })
}

fn output_shape(x: &Tensor, oh: usize, ow: usize) -> Vec<usize> {
    let mut shape = x.shape().to_vec();
    let r = shape.len();
    shape[r - 2] = oh;
    shape[r - 1] = ow;
    shape
}

/// Source pixel for padded coordinate `i` along an axis of length `n`, or
/// `None` when the coordinate lies in the padding and the kind does not
/// replicate edges.
#[inline]
fn source(i: isize, n: usize, replicate: bool) -> Option<usize> {
    if i >= 0 && (i as usize) < n {
        Some(i as usize)
    } else if replicate {
        Some(i.clamp(0, n as isize - 1) as usize)
    } else {
        None
    }
}

pub(crate) fn pool_forward(x: &Tensor, spec: &PoolSpec) -> Result<PoolForward> {
    let g = geometry(x, spec)?;
    let data = x.data();
    let cells = g.n * g.c * g.oh * g.ow;
    let mut out = Vec::with_capacity(cells);
    let track_max = matches!(spec.kind, PoolKind::Max | PoolKind::MaxMin);
    let track_min = spec.kind == PoolKind::MaxMin;
    let mut argmax = Vec::with_capacity(if track_max { cells } else { 0 });
    let mut argmin = Vec::with_capacity(if track_min { cells } else { 0 });
    let replicate = spec.kind == PoolKind::MaxMin;
    let p = spec.padding as isize;
    let area = (spec.pool_height * spec.pool_width) as f64;

    for plane_idx in 0..g.n * g.c {
        let base = plane_idx * g.h * g.w;
        for oy in 0..g.oh {
            let y0 = (oy * spec.stride) as isize - p;
            for ox in 0..g.ow {
                let x0 = (ox * spec.stride) as isize - p;
                let mut best_max = (f64::NEG_INFINITY, usize::MAX);
                let mut best_min = (f64::INFINITY, usize::MAX);
                let mut total = 0.0;
                let mut nan = None;
                for dy in 0..spec.pool_height as isize {
                    let Some(sy) = source(y0 + dy, g.h, replicate) else {
                        continue;
                    };
                    for dx in 0..spec.pool_width as isize {
                        let Some(sx) = source(x0 + dx, g.w, replicate) else {
                            continue;
                        };
                        let idx = base + sy * g.w + sx;
                        let v = data[idx];
                        total += v;
                        if v.is_nan() && nan.is_none() {
                            nan = Some(idx);
                        }
                        if v > best_max.0 || best_max.1 == usize::MAX {
                            best_max = (v, idx);
                        }
                        if v < best_min.0 || best_min.1 == usize::MAX {
                            best_min = (v, idx);
                        }
                    }
                }
                if let Some(idx) = nan {
                    best_max = (f64::NAN, idx);
                    best_min = (f64::NAN, idx);
                }
                match spec.kind {
                    PoolKind::Max => {
                        out.push(best_max.0);
                        argmax.push(best_max.1 as u32);
                    }
                    PoolKind::MaxMin => {
                        out.push(best_max.0 - best_min.0);
                        argmax.push(best_max.1 as u32);
                        argmin.push(best_min.1 as u32);
                    }
                    PoolKind::Average => out.push(total / area),
                }
            }
        }
    }
    Ok(PoolForward { output: Tensor::from_parts(output_shape(x, g.oh, g.ow), out), argmax, argmin })
}

/// Pools `x` according to `spec.kind`.
pub fn pool(x: &Tensor, spec: &PoolSpec) -> Result<Tensor> {
    pool_forward(x, spec).map(|f| f.output)
}

fn expect_kind(spec: &PoolSpec, kind: PoolKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Usage(format!("expected a {kind} pool spec, got {}", spec.kind)));
    }
    Ok(())
}

/// Window maximum at every window position.
pub fn max_pool(x: &Tensor, spec: &PoolSpec) -> Result<Tensor> {
    expect_kind(spec, PoolKind::Max)?;
    pool(x, spec)
}

/// Window maximum minus window minimum at every window position.
pub fn maxmin_pool(x: &Tensor, spec: &PoolSpec) -> Result<Tensor> {
    expect_kind(spec, PoolKind::MaxMin)?;
    pool(x, spec)
}

pub fn avg_pool(x: &Tensor, spec: &PoolSpec) -> Result<Tensor> {
    expect_kind(spec, PoolKind::Average)?;
    pool(x, spec)
}

pub(crate) fn route_gradient(grad_out: &Tensor, x_shape: &[usize], spec: &PoolSpec, fwd: &PoolForward) -> Tensor {
    let mut grad = vec![0.0; x_shape.iter().product()];
    let g = grad_out.data();
    match spec.kind {
        PoolKind::Max => {
            for (gv, &i) in g.iter().zip(&fwd.argmax) {
                grad[i as usize] += gv;
            }
        }
        PoolKind::MaxMin => {
            for ((gv, &imax), &imin) in g.iter().zip(&fwd.argmax).zip(&fwd.argmin) {
                grad[imax as usize] += gv;
                grad[imin as usize] -= gv;
            }
        }
        PoolKind::Average => {
            let [n, c, h, w] = {
                let mut s = [1; 4];
                s[4 - x_shape.len()..].copy_from_slice(x_shape);
                s
            };
            let [_, _, oh, ow] = grad_out.nchw();
            let p = spec.padding as isize;
            let area = (spec.pool_height * spec.pool_width) as f64;
            for plane in 0..n * c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let gv = g[(plane * oh + oy) * ow + ox] / area;
                        let y0 = (oy * spec.stride) as isize - p;
                        let x0 = (ox * spec.stride) as isize - p;
                        for dy in 0..spec.pool_height as isize {
                            let Some(sy) = source(y0 + dy, h, false) else {
                                continue;
                            };
                            for dx in 0..spec.pool_width as isize {
                                if let Some(sx) = source(x0 + dx, w, false) {
                                    grad[plane * h * w + sy * w + sx] += gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(x_shape.to_vec(), grad)
}

/// Gradient of the pooled output with respect to the input.
///
/// Max routes each upstream value to the window's first maximum in row-major
/// order; Max-Min additionally routes its negation to the first minimum, so a
/// constant window contributes nothing. Overlapping windows accumulate.
pub fn pool_backward(grad_out: &Tensor, x: &Tensor, spec: &PoolSpec) -> Result<Tensor> {
    let fwd = pool_forward(x, spec)?;
    if grad_out.shape() != fwd.output.shape() {
        return Err(dim_err!(
            "upstream gradient shape {:?} does not match pooled shape {:?}",
            grad_out.shape(),
            fwd.output.shape()
        ));
    }
    Ok(route_gradient(grad_out, x.shape(), spec, &fwd))
}

/// Decomposition of one window around its most frequent value `mode`.
///
/// `mode + above` is the window maximum and `mode - below` the minimum, so the
/// Max-Min output of the window is exactly `above + below`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowStats {
    pub row: usize,
    pub col: usize,
    pub mode: f64,
    pub above: f64,
    pub below: f64,
}

impl WindowStats {
    pub fn spread(&self) -> f64 {
        self.above + self.below
    }
}

/// Most frequent value; ties go to the smaller value.
fn mode_of(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let mut best = (values[0], 0usize);
    let mut run = (values[0], 0usize);
    for &v in values.iter() {
        if v == run.0 {
            run.1 += 1;
        } else {
            run = (v, 1);
        }
        if run.1 > best.1 {
            best = run;
        }
    }
    best.0
}

/// Per-window statistics of a single plane, laid out as `[row][col]`.
///
/// Windows follow the same geometry and edge replication as Max-Min pooling.
pub fn window_stats(x: &Tensor, spec: &PoolSpec) -> Result<Vec<Vec<WindowStats>>> {
    let [n, c, h, w] = x.nchw();
    if n * c != 1 {
        return Err(dim_err!("window statistics need a single plane, got {:?}", x.shape()));
    }
    let (oh, ow) = spec.output_dims(h, w)?;
    let data = x.data();
    let p = spec.padding as isize;
    let mut grid = Vec::with_capacity(oh);
    let mut window = Vec::with_capacity(spec.pool_height * spec.pool_width);
    for oy in 0..oh {
        let mut row = Vec::with_capacity(ow);
        for ox in 0..ow {
            window.clear();
            for dy in 0..spec.pool_height as isize {
                let sy = source((oy * spec.stride) as isize - p + dy, h, true).unwrap();
                for dx in 0..spec.pool_width as isize {
                    let sx = source((ox * spec.stride) as isize - p + dx, w, true).unwrap();
                    window.push(data[sy * w + sx]);
                }
            }
            let mode = mode_of(&mut window);
            let (lo, hi) = (window[0], window[window.len() - 1]);
            row.push(WindowStats { row: oy, col: ox, mode, above: hi - mode, below: mode - lo });
        }
        grid.push(row);
    }
    Ok(grid)
}

/// Max-Min edge image rescaled to `[0, 255]` per batch entry.
///
/// Each image is divided by its own largest response, so zero stays black and
/// an image without any intensity variation maps to all zeros.
pub fn edge_map(image: &Tensor, spec: &PoolSpec) -> Result<Tensor> {
    if image.rank() != 4 {
        return Err(dim_err!("edge_map expects an NCHW image, got {:?}", image.shape()));
    }
    let raw = maxmin_pool(image, spec)?;
    Ok(rescale_per_image(&raw))
}

pub(crate) fn rescale_per_image(raw: &Tensor) -> Tensor {
    let [n, c, h, w] = raw.nchw();
    let per = c * h * w;
    let mut data = raw.data().to_vec();
    for chunk in data.chunks_mut(per).take(n) {
        let peak = chunk.iter().copied().fold(0.0, f64::max);
        if peak > 0.0 {
            chunk.iter_mut().for_each(|v| *v = *v / peak * 255.0);
        } else {
            chunk.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Tensor::from_parts(raw.shape().to_vec(), data)
}
