//! Synthetic outline-shape images.
//!
//! Every sample is a single shape outline (square, circle, triangle or cross)
//! drawn at a random position and size on a flat background, plus optional
//! Gaussian pixel noise. The classes differ only in their edges.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Square,
    Circle,
    Triangle,
    Cross,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [ShapeKind::Square, ShapeKind::Circle, ShapeKind::Triangle, ShapeKind::Cross];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Square => "square",
            ShapeKind::Circle => "circle",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Cross => "cross",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticShapesSpec {
    pub classes: Vec<ShapeKind>,
    pub samples_per_class: usize,
    pub resolution: usize,
    /// Standard deviation of the additive pixel noise, in `[0, 1]` units.
    pub noise_sigma: f64,
    pub background: (f64, f64),
    pub foreground: (f64, f64),
    /// Shape extent as a fraction of the resolution.
    pub size_range: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticShapesSpec {
    fn default() -> Self {
        Self {
            classes: ShapeKind::ALL.to_vec(),
            samples_per_class: 200,
            resolution: 28,
            noise_sigma: 0.05,
            background: (0.0, 0.3),
            foreground: (0.7, 1.0),
            size_range: (0.45, 0.8),
            seed: 0,
        }
    }
}

/// Inclusive pixel bounds of a drawn shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }
}

pub struct SyntheticShapes {
    pub dataset: Dataset,
    /// Bounding box of the foreground mask of each sample.
    pub boxes: Vec<BoundingBox>,
}

impl SyntheticShapesSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.classes.len() < 2 {
            return bad("need at least two shape classes".into());
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class must be positive".into());
        }
        if self.resolution < 16 {
            return bad(format!("resolution {} is below the minimum of 16", self.resolution));
        }
        let (lo, hi) = self.size_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad(format!("size_range {:?} must satisfy 0 < lo <= hi", self.size_range));
        }
        if hi > 1.0 {
            return bad(format!("shapes up to {hi} x resolution do not fit in a {}px image", self.resolution));
        }
        if (hi * self.resolution as f64) < 3.0 * thickness(self.resolution) as f64 + 2.0 {
            return bad("shapes too small to draw an outline".into());
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return bad("noise_sigma must be non-negative".into());
        }
        for (name, (a, b)) in [("background", self.background), ("foreground", self.foreground)] {
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b {
                return bad(format!("{name} range ({a}, {b}) must lie in [0, 1] with lo <= hi"));
            }
        }
        if self.foreground.0 <= self.background.1 && self.background.0 <= self.foreground.1 {
            return bad("foreground and background intensity ranges overlap".into());
        }
        Ok(())
    }
}

fn thickness(resolution: usize) -> usize {
    ((resolution as f64 / 14.0).round() as usize).max(1)
}

/// Outline membership of pixel centre `(px, py)` for a shape of extent `s`
/// centred on `(cx, cy)` with stroke `t`.
fn on_outline(kind: ShapeKind, px: f64, py: f64, cx: f64, cy: f64, s: f64, t: f64) -> bool {
    let (dx, dy) = (px - cx, py - cy);
    let half = s / 2.0;
    match kind {
        ShapeKind::Square => {
            let m = dx.abs().max(dy.abs());
            m <= half && m > half - t
        }
        ShapeKind::Circle => {
            let d = (dx * dx + dy * dy).sqrt();
            d <= half && d > half - t
        }
        ShapeKind::Cross => (dx.abs() <= t / 2.0 && dy.abs() <= half) || (dy.abs() <= t / 2.0 && dx.abs() <= half),
        ShapeKind::Triangle => {
            // Apex at the top centre, base along the bottom edge.
            let top = cy - half;
            let bottom = cy + half;
            if py < top || py > bottom {
                return false;
            }
            let frac = (py - top) / s;
            let half_width = frac * half;
            if dx.abs() > half_width {
                return false;
            }
            // Perpendicular distance to the nearer slanted side.
            let side = (half_width - dx.abs()) / 1.25f64.sqrt();
            bottom - py < t || side < t
        }
    }
}

/// Generates `samples_per_class` samples of each class, interleaved by class.
///
/// Geometry and noise come from separate per-sample streams, so two specs that
/// differ only in `noise_sigma` draw identical shapes.
pub fn generate_shapes(spec: &SyntheticShapesSpec) -> Result<SyntheticShapes> {
    spec.validate()?;
    let res = spec.resolution;
    let t = thickness(res) as f64;
    let total = spec.samples_per_class * spec.classes.len();
    let mut data = Vec::with_capacity(total * res * res);
    let mut labels = Vec::with_capacity(total);
    let mut boxes = Vec::with_capacity(total);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    for i in 0..total {
        let label = i % spec.classes.len();
        let kind = spec.classes[label];
        let mut geo = rng_for(spec.seed, &format!("shapes.geometry.{i}"));
        let mut pix = rng_for(spec.seed, &format!("shapes.noise.{i}"));
        let size_px = geo.gen_range(spec.size_range.0..=spec.size_range.1) * res as f64;
        let s = size_px.round().max(3.0 * t + 2.0);
        let margin = s / 2.0;
        let cx = geo.gen_range(margin..=(res as f64 - margin)).round();
        let cy = geo.gen_range(margin..=(res as f64 - margin)).round();
        let bg = geo.gen_range(spec.background.0..=spec.background.1);
        let fg = geo.gen_range(spec.foreground.0..=spec.foreground.1);
        let mut bbox: Option<BoundingBox> = None;
        for y in 0..res {
            for x in 0..res {
                let inside = on_outline(kind, x as f64 + 0.5, y as f64 + 0.5, cx, cy, s, t);
                if inside {
                    bbox = Some(match bbox {
                        None => BoundingBox { x0: x, y0: y, x1: x, y1: y },
                        Some(b) => BoundingBox { x0: b.x0.min(x), y0: b.y0.min(y), x1: b.x1.max(x), y1: b.y1.max(y) },
                    });
                }
                let base = if inside { fg } else { bg };
                let z: f64 = noise.sample(&mut pix);
                data.push((base + spec.noise_sigma * z).clamp(0.0, 1.0));
            }
        }
        labels.push(label);
        boxes.push(bbox.expect("validated sizes always draw pixels"));
    }
    let images = Tensor::new(&[total, 1, res, res], data)?;
    let names = spec.classes.iter().map(|k| k.name().to_owned()).collect();
    Ok(SyntheticShapes { dataset: Dataset::new(images, labels, names)?, boxes })
}
