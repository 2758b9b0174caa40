//! Binary PGM (P5) and PPM (P6) images with maxval 255.

use std::path::Path;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::labels::LabelRecord;
use super::DataError;

/// Decoded 8-bit image, channels interleaved per pixel as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl RawImage {
    /// `[C, H, W]` tensor with values in `[0, 255]`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let (c, h, w) = (self.channels, self.height, self.width);
        let mut data = vec![T::zero(); c * h * w];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    data[ch * h * w + y * w + x] =
                        T::from_f64_lossy(f64::from(self.pixels[(y * w + x) * c + ch]));
                }
            }
        }
        Tensor::new(vec![c, h, w], data).expect("sizes agree")
    }

    /// Rounds and clamps a `[C, H, W]` tensor (C = 1 or 3) into bytes.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Self {
        let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        let mut pixels = vec![0u8; c * h * w];
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let v = t.data()[ch * h * w + y * w + x].to_f64_lossy();
                    pixels[(y * w + x) * c + ch] = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        RawImage {
            width: w,
            height: h,
            channels: c,
            pixels,
        }
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b' ' | b'\t' | b'\n' | b'\r' => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Option<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()?.parse().ok()
    }
}

/// Parses a P5 or P6 file held in memory.
pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<RawImage, DataError> {
    let bad = |m: &str| DataError::format(path, m.to_string());
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(bad("unsupported magic number (expected P5 or P6)")),
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number().ok_or_else(|| bad("bad width"))?;
    let height = h.number().ok_or_else(|| bad("bad height"))?;
    let maxval = h.number().ok_or_else(|| bad("bad maxval"))?;
    if maxval != 255 {
        return Err(bad(&format!("maxval {maxval} unsupported (must be 255)")));
    }
    if width == 0 || height == 0 {
        return Err(bad("zero-sized image"));
    }
    match bytes.get(h.pos) {
        Some(c) if c.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(bad("missing whitespace after header")),
    }
    let need = width * height * channels;
    let data = &bytes[h.pos..];
    if data.len() < need {
        return Err(bad(&format!("pixel data truncated: {} of {need} bytes", data.len())));
    }
    Ok(RawImage {
        width,
        height,
        channels,
        pixels: data[..need].to_vec(),
    })
}

pub fn encode_pnm(img: &RawImage) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn save_image<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<(), DataError> {
    std::fs::write(path, encode_pnm(&RawImage::from_tensor(t))).map_err(|e| DataError::io(path, e))
}

/// Bilinear resize with corner-aligned sampling: output corners land
/// exactly on input corners.
pub fn resize_bilinear<T: Scalar>(img: &Tensor<T>, height: usize, width: usize) -> Tensor<T> {
    let (c, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2]);
    if (h, w) == (height, width) {
        return img.clone();
    }
    let coord = |i: usize, src: usize, dst: usize| -> (usize, usize, f64) {
        let pos = if dst == 1 {
            (src - 1) as f64 / 2.0
        } else {
            i as f64 * (src - 1) as f64 / (dst - 1) as f64
        };
        let lo = (pos.floor() as usize).min(src - 1);
        let hi = (lo + 1).min(src - 1);
        (lo, hi, pos - lo as f64)
    };
    let xs: Vec<_> = (0..width).map(|x| coord(x, w, width)).collect();
    let mut out = Vec::with_capacity(c * height * width);
    let src = img.data();
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for y in 0..height {
            let (y0, y1, fy) = coord(y, h, height);
            for &(x0, x1, fx) in &xs {
                let p = |yy: usize, xx: usize| plane[yy * w + xx].to_f64_lossy();
                let lerp = |a: f64, b: f64, t: f64| if a == b { a } else { a + (b - a) * t };
                let top = lerp(p(y0, x0), p(y0, x1), fx);
                let bottom = lerp(p(y1, x0), p(y1, x1), fx);
                out.push(T::from_f64_lossy(lerp(top, bottom, fy)));
            }
        }
    }
    Tensor::new(vec![c, height, width], out).expect("sizes agree")
}

/// Loads an image as a `[C, H, W]` tensor, resizing to `(height, width)`
/// when given.
pub fn load_image<T: Scalar>(path: &Path, size: Option<(usize, usize)>) -> Result<Tensor<T>, DataError> {
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    let t = decode_pnm(&bytes, path)?.to_tensor();
    Ok(match size {
        Some((h, w)) => resize_bilinear(&t, h, w),
        None => t,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample<T = f32> {
    pub pixels: Tensor<T>,
    pub label: LabelRecord,
}

/// Loads the image behind a label record, resolving relative paths
/// against `root`.
pub fn load_sample<T: Scalar>(
    label: &LabelRecord,
    root: &Path,
    size: Option<(usize, usize)>,
) -> Result<ImageSample<T>, DataError> {
    let path = root.join(&label.image_path);
    Ok(ImageSample {
        pixels: load_image(&path, size)?,
        label: label.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn p5_bytes_map_directly() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0, 255, 128, 64]);
        let t: Tensor<f32> = decode_pnm(&bytes, p()).unwrap().to_tensor();
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 255.0, 128.0, 64.0]);
    }

    #[test]
    fn p6_keeps_rgb_order() {
        let mut bytes = b"P6 # comment\n1 1 255\n".to_vec();
        bytes.extend([10, 20, 30]);
        let t: Tensor<f32> = decode_pnm(&bytes, p()).unwrap().to_tensor();
        assert_eq!(t.shape(), &[3, 1, 1]);
        assert_eq!(t.data(), &[10.0, 20.0, 30.0]);
    }

    #[test]
    fn format_errors() {
        assert!(decode_pnm(b"P2\n1 1\n255\n0", p()).is_err());
        assert!(decode_pnm(b"P5\n1 1\n65535\n\0\0", p()).unwrap_err().to_string().contains("maxval"));
        assert!(decode_pnm(b"P5\n2 2\n255\n\0", p()).unwrap_err().to_string().contains("truncated"));
    }

    #[test]
    fn constant_resize_stays_constant() {
        let t = Tensor::<f32>::full(&[1, 4, 4], 77.3);
        let r = resize_bilinear(&t, 2, 2);
        assert_eq!(r.shape(), &[1, 2, 2]);
        assert!(r.data().iter().all(|&v| v == 77.3));
    }

    #[test]
    fn resize_hits_corners() {
        let t = Tensor::<f64>::new(vec![1, 2, 2], vec![0.0, 10.0, 20.0, 30.0]).unwrap();
        let r = resize_bilinear(&t, 3, 3);
        assert_eq!(r.data(), &[0.0, 5.0, 10.0, 10.0, 15.0, 20.0, 20.0, 25.0, 30.0]);
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(w in 1usize..6, h in 1usize..6, rgb in any::<bool>(), seed in any::<u64>()) {
            let c = if rgb { 3 } else { 1 };
            let pixels = (0..w * h * c).map(|i| (seed.wrapping_mul(i as u64 + 7) >> 13) as u8).collect();
            let img = RawImage { width: w, height: h, channels: c, pixels };
            let back = decode_pnm(&encode_pnm(&img), p()).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(RawImage::from_tensor(&img.to_tensor::<f32>()), img);
        }
    }
}
