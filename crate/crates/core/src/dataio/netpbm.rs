//! Binary PGM (P5) and PPM (P6) codec.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Decoded raster. Samples are row-major and channel-interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnmImage {
    pub width: usize,
    pub height: usize,
    /// 1 for PGM, 3 for PPM.
    pub channels: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format!("expected {what} in header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).unwrap().parse().map_err(|_| format!("{what} out of range"))
    }
}

pub fn decode_pnm(bytes: &[u8]) -> std::result::Result<PnmImage, String> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err("not a binary PGM (P5) or PPM (P6) file".into()),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err("zero image extent".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} outside 1..=65535"));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err("missing whitespace after maxval".into()),
    }
    let count = width * height * channels;
    let wide = maxval > 255;
    let need = if wide { count * 2 } else { count };
    let raster = &bytes[cur.pos..];
    if raster.len() < need {
        return Err(format!("raster holds {} bytes, expected {need}", raster.len()));
    }
    let samples: Vec<u16> = if wide {
        raster[..need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        raster[..need].iter().map(|&b| u16::from(b)).collect()
    };
    if let Some(&bad) = samples.iter().find(|&&s| usize::from(s) > maxval) {
        return Err(format!("sample {bad} exceeds maxval {maxval}"));
    }
    Ok(PnmImage { width, height, channels, maxval: maxval as u16, samples })
}

pub fn encode_pnm(img: &PnmImage) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval > 255 {
        for s in &img.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(img.samples.iter().map(|&s| s as u8));
    }
    out
}

pub fn read_pnm(path: &Path) -> Result<PnmImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes).map_err(|reason| Error::Decode { path: path.to_path_buf(), reason })
}

pub fn write_pnm(path: &Path, img: &PnmImage) -> Result<()> {
    fs::write(path, encode_pnm(img)).map_err(|e| Error::io(path, e))
}

impl PnmImage {
    /// `(1, C, H, W)` tensor with samples divided by `maxval`.
    pub fn to_tensor(&self) -> Tensor {
        let scale = f64::from(self.maxval);
        let plane = self.width * self.height;
        let mut data = vec![0.0; plane * self.channels];
        for (i, &s) in self.samples.iter().enumerate() {
            let (pixel, ch) = (i / self.channels, i % self.channels);
            data[ch * plane + pixel] = f64::from(s) / scale;
        }
        Tensor::new(&[1, self.channels, self.height, self.width], data).expect("consistent extents")
    }

    /// `(1, C, H, W)` tensor of raw sample values, no scaling.
    pub fn to_raw_tensor(&self) -> Tensor {
        self.to_tensor().map(|v| v * f64::from(self.maxval))
    }

    /// 8-bit image from the first batch entry of an NCHW tensor whose values
    /// are in `[0, 255]`; values are rounded and clamped. Only 1 or 3
    /// channels are accepted.
    pub fn from_tensor_u8(t: &Tensor) -> Result<Self> {
        let [_, c, h, w] = t.nchw();
        if c != 1 && c != 3 {
            return Err(Error::Dimension(format!("cannot encode {c} channels as PGM/PPM")));
        }
        let plane = h * w;
        let mut samples = vec![0u16; plane * c];
        for ch in 0..c {
            for (p, &v) in t.plane(0, ch).iter().enumerate() {
                samples[p * c + ch] = v.round().clamp(0.0, 255.0) as u16;
            }
        }
        Ok(Self { width: w, height: h, channels: c, maxval: 255, samples })
    }
}
