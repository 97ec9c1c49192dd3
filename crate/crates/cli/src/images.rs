//! `edge-extract` and `gradcam`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use edgeattn::dataio::{read_pnm, resize_bilinear, write_pnm, PnmImage};
use edgeattn::model::load_model;
use edgeattn::{edge_map, grad_cam, maxmin_pool, overlay, Error, PoolSpec, Tensor};
use serde::Serialize;

use crate::artifacts::write_json;

/// A pool size from the command line: `5`, `5x5`, `3x5` or any of these
/// followed by `/stride`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolArg {
    pub height: usize,
    pub width: usize,
    pub stride: Option<usize>,
}

impl FromStr for PoolArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("pool {s:?} is not of the form F, FxF or HxW, optionally with /S");
        let (size, stride) = match s.split_once('/') {
            Some((a, b)) => (a, Some(b.trim().parse().map_err(|_| bad())?)),
            None => (s, None),
        };
        let (h, w) = match size.split_once(['x', 'X']) {
            Some((h, w)) => (h.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?),
            None => {
                let f = size.trim().parse().map_err(|_| bad())?;
                (f, f)
            }
        };
        Ok(Self { height: h, width: w, stride })
    }
}

impl PoolArg {
    pub fn spec(&self, default_stride: usize) -> Result<PoolSpec> {
        let mut spec = PoolSpec::maxmin(self.height, self.stride.unwrap_or(default_stride));
        spec.pool_width = self.width;
        spec.validate()?;
        Ok(spec)
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or("image".into(), |s| s.to_string_lossy().into_owned())
}

fn claim(seen: &mut HashSet<PathBuf>, path: PathBuf) -> Result<PathBuf> {
    if !seen.insert(path.clone()) {
        bail!(Error::Usage(format!("two inputs would both write {}", path.display())));
    }
    Ok(path)
}

#[derive(Debug, Serialize)]
pub struct EdgeRecord {
    pub input: PathBuf,
    pub output: PathBuf,
    pub pool: String,
    /// Mean of the Max-Min map before rescaling, in input sample units.
    pub raw_mean: f64,
}

pub fn cmd_edge_extract(inputs: &[PathBuf], pools: &[PoolArg], stride: usize, out: &Path) -> Result<Vec<EdgeRecord>> {
    let specs: Vec<PoolSpec> = pools.iter().map(|p| p.spec(stride)).collect::<Result<_>>()?;
    let images: Vec<PnmImage> = inputs.iter().map(|p| read_pnm(p)).collect::<edgeattn::Result<_>>()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (input, img) in inputs.iter().zip(&images) {
        let raw = img.to_raw_tensor();
        let ext = if img.channels == 1 { "pgm" } else { "ppm" };
        for spec in &specs {
            let label = format!("{}x{}s{}", spec.pool_height, spec.pool_width, spec.stride);
            let path = claim(&mut seen, out.join(format!("{}_maxmin_{label}.{ext}", stem(input))))?;
            let raw_mean = maxmin_pool(&raw, spec)?.mean();
            write_pnm(&path, &PnmImage::from_tensor_u8(&edge_map(&raw, spec)?)?)?;
            println!("{}\t{label}\tmean {raw_mean:.4}\t{}", input.display(), path.display());
            records.push(EdgeRecord { input: input.clone(), output: path, pool: label, raw_mean });
        }
    }
    write_json(&out.join("edges.json"), &records)?;
    Ok(records)
}

/// Scales to `[0, 1]`, matches the model's channel count and resizes.
fn model_input(img: &PnmImage, shape: [usize; 3]) -> Result<Tensor> {
    let t = img.to_tensor();
    let [_, c, h, w] = t.nchw();
    let t = match (c, shape[0]) {
        (a, b) if a == b => t,
        (1, 3) => {
            let p = t.plane(0, 0);
            Tensor::new(&[1, 3, h, w], [p, p, p].concat())?
        }
        (3, 1) => {
            let mean: Vec<f64> =
                (0..h * w).map(|i| (t.plane(0, 0)[i] + t.plane(0, 1)[i] + t.plane(0, 2)[i]) / 3.0).collect();
            Tensor::new(&[1, 1, h, w], mean)?
        }
        (a, b) => bail!(Error::Dimension(format!("image has {a} channels, model expects {b}"))),
    };
    Ok(resize_bilinear(&t, shape[1], shape[2])?)
}

#[derive(Debug, Serialize)]
pub struct CamRecord {
    pub input: PathBuf,
    pub tap: String,
    pub class: usize,
    pub class_name: Option<String>,
    pub outputs: Vec<PathBuf>,
}

pub struct CamRequest<'a> {
    pub model: &'a Path,
    pub inputs: &'a [PathBuf],
    pub class: Option<usize>,
    pub tap: Option<&'a str>,
    pub alphas: &'a [f64],
    pub class_names: &'a [String],
    pub out: &'a Path,
}

pub fn cmd_gradcam(req: &CamRequest) -> Result<Vec<CamRecord>> {
    for &a in req.alphas {
        if !(0.0..=1.0).contains(&a) {
            bail!(Error::Validation(format!("alpha must be in [0, 1], got {a}")));
        }
    }
    let model = load_model(req.model)?;
    let shape = model.graph.input_shape();
    std::fs::create_dir_all(req.out).with_context(|| format!("creating {}", req.out.display()))?;
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for input in req.inputs {
        let x = model_input(&read_pnm(input)?, shape)?;
        let heat = grad_cam(&model, &x, req.class, req.tap)?;
        let mut outputs = Vec::new();
        for &alpha in req.alphas {
            let path = claim(&mut seen, req.out.join(format!("{}_cam_a{alpha:.2}.ppm", stem(input))))?;
            let rgb = overlay(&heat, &x, alpha)?.map(|v| v * 255.0);
            write_pnm(&path, &PnmImage::from_tensor_u8(&rgb)?)?;
            outputs.push(path);
        }
        println!("{}\tclass {}\ttap {}", input.display(), heat.class, heat.tap);
        records.push(CamRecord {
            input: input.clone(),
            tap: heat.tap,
            class: heat.class,
            class_name: req.class_names.get(heat.class).cloned(),
            outputs,
        });
    }
    write_json(&req.out.join("gradcam.json"), &records)?;
    Ok(records)
}
