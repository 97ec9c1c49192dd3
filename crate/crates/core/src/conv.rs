//! 2-D convolution by im2col + GEMM.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::gemm;
use crate::pooling::output_extent;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(rows, cols)` of the kernel.
    pub kernel: (usize, usize),
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    #[serde(default)]
    pub use_batchnorm: bool,
    #[serde(default)]
    pub activation: Activation,
}

fn one() -> usize {
    1
}

impl ConvSpec {
    /// Square kernel, stride 1, no padding, ReLU, no batch norm.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride: 1,
            padding: 0,
            use_batchnorm: false,
            activation: Activation::Relu,
        }
    }

    /// 3x3, stride 1, padding 1: keeps the spatial extent.
    pub fn same3x3(in_channels: usize, out_channels: usize) -> Self {
        Self::new(in_channels, out_channels, 3).with_padding(1)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_batchnorm(mut self, on: bool) -> Self {
        self.use_batchnorm = on;
        self
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel.0, self.kernel.1]
    }

    /// Trainable scalars: weights plus one bias per output channel, plus the
    /// batch-norm scale and shift when enabled.
    pub fn param_count(&self) -> usize {
        let w: usize = self.weight_shape().iter().product();
        let bn = if self.use_batchnorm { 2 * self.out_channels } else { 0 };
        w + self.out_channels + bn
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config(format!("conv channel counts must be positive: {self:?}")));
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 || self.stride == 0 {
            return Err(Error::Config(format!("conv kernel and stride must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn output_dims(&self, rows: usize, cols: usize) -> Result<(usize, usize)> {
        self.validate()?;
        Ok((
            output_extent(rows, self.kernel.0, self.padding, self.stride)?,
            output_extent(cols, self.kernel.1, self.padding, self.stride)?,
        ))
    }
}

pub(crate) struct ConvGeometry {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub oh: usize,
    pub ow: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }
    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

pub(crate) fn geometry(x: &Tensor, weight: &Tensor, spec: &ConvSpec) -> Result<ConvGeometry> {
    if x.rank() != 4 {
        return Err(dim_err!("conv2d input must be rank 4 (N,C,H,W), got {:?}", x.shape()));
    }
    let [n, c, h, w] = x.nchw();
    if c != spec.in_channels {
        return Err(dim_err!("conv2d expects {} input channels, input has {c}", spec.in_channels));
    }
    if weight.shape() != spec.weight_shape() {
        return Err(dim_err!("conv2d weight shape {:?} does not match spec {:?}", weight.shape(), spec.weight_shape()));
    }
    let (oh, ow) = spec.output_dims(h, w)?;
    Ok(ConvGeometry {
        n,
        c,
        h,
        w,
        o: spec.out_channels,
        kh: spec.kernel.0,
        kw: spec.kernel.1,
        oh,
        ow,
        stride: spec.stride,
        pad: spec.padding,
    })
}

fn im2col(g: &ConvGeometry, sample: &[f64], col: &mut [f64]) {
    let positions = g.positions();
    for ci in 0..g.c {
        let plane = &sample[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut col[row * positions..(row + 1) * positions];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy as usize >= g.h {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix as usize >= g.w { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(g: &ConvGeometry, col: &[f64], sample_grad: &mut [f64]) {
    let positions = g.positions();
    for ci in 0..g.c {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &col[row * positions..(row + 1) * positions];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    let base = ci * g.h * g.w + iy as usize * g.w;
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            sample_grad[base + ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `x` (N,C,H,W) with `weight` (O,C,kh,kw) plus an
/// optional per-channel bias. Activation and batch norm are applied by the
/// caller; this is the bare linear map.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, spec: &ConvSpec) -> Result<Tensor> {
    let g = geometry(x, weight, spec)?;
    if let Some(b) = bias {
        if b.numel() != g.o {
            return Err(dim_err!("conv2d bias has {} values for {} channels", b.numel(), g.o));
        }
    }
    let (k, p) = (g.patch(), g.positions());
    let mut col = vec![0.0; k * p];
    let mut out = vec![0.0; g.n * g.o * p];
    let per_in = g.c * g.h * g.w;
    for b in 0..g.n {
        im2col(&g, &x.data()[b * per_in..(b + 1) * per_in], &mut col);
        let dst = &mut out[b * g.o * p..(b + 1) * g.o * p];
        if let Some(bias) = bias {
            for (oc, chunk) in dst.chunks_mut(p).enumerate() {
                chunk.fill(bias.data()[oc]);
            }
        }
        gemm(g.o, k, p, 1.0, weight.data(), false, &col, false, 1.0, dst);
    }
    Ok(Tensor::from_parts(vec![g.n, g.o, g.oh, g.ow], out))
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub(crate) fn conv2d_backward(
    grad_out: &Tensor,
    x: &Tensor,
    weight: &Tensor,
    spec: &ConvSpec,
    need_input_grad: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let g = geometry(x, weight, spec)?;
    let (k, p) = (g.patch(), g.positions());
    if grad_out.shape() != [g.n, g.o, g.oh, g.ow] {
        return Err(dim_err!("conv2d upstream gradient shape {:?}", grad_out.shape()));
    }
    let per_in = g.c * g.h * g.w;
    let mut col = vec![0.0; k * p];
    let mut dcol = vec![0.0; k * p];
    let mut dw = vec![0.0; g.o * k];
    let mut db = vec![0.0; g.o];
    let mut dx = if need_input_grad { vec![0.0; x.numel()] } else { Vec::new() };
    for b in 0..g.n {
        let dy = &grad_out.data()[b * g.o * p..(b + 1) * g.o * p];
        for (oc, chunk) in dy.chunks(p).enumerate() {
            db[oc] += chunk.iter().sum::<f64>();
        }
        im2col(&g, &x.data()[b * per_in..(b + 1) * per_in], &mut col);
        gemm(g.o, p, k, 1.0, dy, false, &col, true, 1.0, &mut dw);
        if need_input_grad {
            gemm(k, g.o, p, 1.0, weight.data(), true, dy, false, 0.0, &mut dcol);
            col2im(&g, &dcol, &mut dx[b * per_in..(b + 1) * per_in]);
        }
    }
    let dx = need_input_grad.then(|| Tensor::from_parts(x.shape().to_vec(), dx));
    Ok((dx, Tensor::from_parts(weight.shape().to_vec(), dw), Tensor::from_parts(vec![g.o], db)))
}
