//! Grad-CAM heatmaps and colour overlays.

mod colormap;

use serde::{Deserialize, Serialize};

use crate::dataio::resize_bilinear;
use crate::error::{dim_err, Error, Result};
use crate::model::{Mode, Model};
use crate::tensor::Tensor;
use crate::training::argmax;

pub use colormap::LUT;

/// A class activation map for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub tap: String,
    pub class: usize,
    /// `(1, 1, h, w)` at tap resolution, in `[0, 1]`.
    pub values: Tensor,
    /// `(1, 1, H, W)` at input resolution, in `[0, 1]`.
    pub upsampled: Tensor,
}

/// Tap used when none is requested: the second-last block output.
pub fn default_tap(model: &Model) -> Option<&str> {
    model.graph.tap_from_end(2)
}

fn normalize(t: Tensor) -> Tensor {
    let peak = t.max_value();
    if peak > 0.0 {
        t.map(|v| v / peak)
    } else {
        t.map(|_| 0.0)
    }
}

/// Grad-CAM of `target` (default: the predicted class) at `tap` (default:
/// [`default_tap`]) for a single `(1, C, H, W)` image.
pub fn grad_cam(model: &Model, image: &Tensor, target: Option<usize>, tap: Option<&str>) -> Result<Heatmap> {
    if image.rank() != 4 || image.nchw()[0] != 1 {
        return Err(dim_err!("grad_cam takes one (1, C, H, W) image, got {:?}", image.shape()));
    }
    let tap = match tap {
        Some(t) => t,
        None => default_tap(model).ok_or_else(|| Error::Usage("model has no taps".into()))?,
    };
    let node = model.graph.tap_node(tap).ok_or_else(|| {
        let known: Vec<&str> = model.graph.taps().collect();
        Error::Usage(format!("unknown tap {tap}; available taps: {}", known.join(", ")))
    })?;
    let pass = model.forward(&image.clone().with_requires_grad(true), Mode::Eval, &|_| false)?;
    let logits = pass.tape.value(pass.logits());
    let k = model.graph.num_classes();
    let class = target.unwrap_or_else(|| argmax(logits.data()));
    if class >= k {
        return Err(Error::Validation(format!("class {class} out of range for {k} classes")));
    }
    let mut seed = vec![0.0; k];
    seed[class] = 1.0;
    let grads = pass.tape.backward_with(pass.logits(), Tensor::new(&[1, k], seed)?)?;
    let act = pass.tape.value(pass.nodes[node]);
    let [_, c, h, w] = act.nchw();
    let raw = match grads.get(pass.nodes[node]) {
        Some(g) => {
            let mut map = vec![0.0; h * w];
            for ch in 0..c {
                let gp = g.plane(0, ch);
                let alpha = gp.iter().sum::<f64>() / (h * w) as f64;
                for (m, a) in map.iter_mut().zip(act.plane(0, ch)) {
                    *m += alpha * a;
                }
            }
            map.into_iter().map(|v| v.max(0.0)).collect()
        }
        None => vec![0.0; h * w],
    };
    let values = normalize(Tensor::new(&[1, 1, h, w], raw)?);
    let [_, _, ih, iw] = image.nchw();
    let upsampled = normalize(resize_bilinear(&values, ih, iw)?);
    Ok(Heatmap { tap: tap.to_owned(), class, values, upsampled })
}

/// Maps `[0, 1]` values through [`LUT`] to a `(1, 3, H, W)` RGB tensor in
/// `[0, 1]`.
pub fn colorize(map: &Tensor) -> Result<Tensor> {
    if map.rank() != 4 || map.nchw()[0] != 1 || map.nchw()[1] != 1 {
        return Err(dim_err!("colorize takes a (1, 1, H, W) map, got {:?}", map.shape()));
    }
    let [_, _, h, w] = map.nchw();
    let mut out = vec![0.0; 3 * h * w];
    for (i, &v) in map.data().iter().enumerate() {
        let rgb = LUT[(v.clamp(0.0, 1.0) * 255.0).round() as usize];
        for ch in 0..3 {
            out[ch * h * w + i] = f64::from(rgb[ch]) / 255.0;
        }
    }
    Tensor::new(&[1, 3, h, w], out)
}

/// `alpha * image + (1 - alpha) * colorize(heatmap)` as `(1, 3, H, W)`. A
/// single-channel image is replicated to RGB first.
pub fn overlay(heatmap: &Heatmap, image: &Tensor, alpha: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Validation(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let colors = colorize(&heatmap.upsampled)?;
    let [_, _, h, w] = colors.nchw();
    if image.rank() != 4 || image.nchw()[0] != 1 || image.nchw()[2..] != [h, w] {
        return Err(dim_err!("heatmap is {h}x{w}, image shape is {:?}", image.shape()));
    }
    let c = image.nchw()[1];
    if c != 1 && c != 3 {
        return Err(dim_err!("overlay needs a 1- or 3-channel image, got {c}"));
    }
    let mut out = Vec::with_capacity(3 * h * w);
    for ch in 0..3 {
        let img = image.plane(0, if c == 3 { ch } else { 0 });
        let col = colors.plane(0, ch);
        out.extend(img.iter().zip(col).map(|(i, m)| alpha * i + (1.0 - alpha) * m));
    }
    Tensor::new(&[1, 3, h, w], out)
}
