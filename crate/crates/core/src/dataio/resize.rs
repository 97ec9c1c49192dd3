use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

/// Bilinear resampling of every `(H, W)` plane with half-pixel centres and
/// edge clamping. Resizing to the current size returns the input unchanged.
pub fn resize_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if out_h == 0 || out_w == 0 {
        return Err(dim_err!("resize target must be positive, got {out_h}x{out_w}"));
    }
    let [n, c, h, w] = x.nchw();
    let rows = axis_weights(h, out_h);
    let cols = axis_weights(w, out_w);
    let mut data = Vec::with_capacity(n * c * out_h * out_w);
    for b in 0..n {
        for ch in 0..c {
            let p = x.plane(b, ch);
            for &(y0, y1, fy) in &rows {
                for &(x0, x1, fx) in &cols {
                    let top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
                    let bottom = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
                    data.push(top * (1.0 - fy) + bottom * fy);
                }
            }
        }
    }
    let mut shape = x.shape().to_vec();
    let r = shape.len();
    if r < 2 {
        return Err(dim_err!("resize needs at least 2 axes"));
    }
    shape[r - 2] = out_h;
    shape[r - 1] = out_w;
    Tensor::new(&shape, data)
}

fn axis_weights(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}
