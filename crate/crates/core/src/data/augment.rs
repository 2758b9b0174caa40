//! Twelve-crop resampling: four corner crops, a centre crop and the whole
//! image resized to crop size, each alongside its horizontal mirror.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::pnm::{resize_bilinear, ImageSample};
use super::DataError;

/// Window of `width x height` starting at column `x`, row `y`.
pub fn crop<T: Scalar>(img: &Tensor<T>, x: usize, y: usize, width: usize, height: usize) -> Tensor<T> {
    let (c, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2]);
    assert!(x + width <= w && y + height <= h, "crop window outside image");
    let mut out = Vec::with_capacity(c * width * height);
    for ch in 0..c {
        for row in y..y + height {
            let start = ch * h * w + row * w + x;
            out.extend_from_slice(&img.data()[start..start + width]);
        }
    }
    Tensor::new(vec![c, height, width], out).expect("sizes agree")
}

/// Left-right flip.
pub fn mirror<T: Scalar>(img: &Tensor<T>) -> Tensor<T> {
    let w = img.shape()[2];
    let mut out = img.clone();
    for row in out.data_mut().chunks_exact_mut(w) {
        row.reverse();
    }
    out
}

/// Order: top-left, top-right, bottom-left, bottom-right, centre, full
/// resize; each base is immediately followed by its mirror.
pub fn twelve_crop<T: Scalar>(
    img: &Tensor<T>,
    crop_width: usize,
    crop_height: usize,
) -> Result<Vec<Tensor<T>>, DataError> {
    let (h, w) = (img.shape()[1], img.shape()[2]);
    if crop_width > w || crop_height > h || crop_width == 0 || crop_height == 0 {
        return Err(DataError::Sizing(format!(
            "crop {crop_width}x{crop_height} does not fit a {w}x{h} image"
        )));
    }
    let (dx, dy) = (w - crop_width, h - crop_height);
    let bases = [
        crop(img, 0, 0, crop_width, crop_height),
        crop(img, dx, 0, crop_width, crop_height),
        crop(img, 0, dy, crop_width, crop_height),
        crop(img, dx, dy, crop_width, crop_height),
        crop(img, dx / 2, dy / 2, crop_width, crop_height),
        resize_bilinear(img, crop_height, crop_width),
    ];
    Ok(bases
        .into_iter()
        .flat_map(|b| {
            let m = mirror(&b);
            [b, m]
        })
        .collect())
}

pub fn twelve_crop_sample<T: Scalar>(
    sample: &ImageSample<T>,
    crop_width: usize,
    crop_height: usize,
) -> Result<Vec<ImageSample<T>>, DataError> {
    Ok(twelve_crop(&sample.pixels, crop_width, crop_height)?
        .into_iter()
        .map(|pixels| ImageSample {
            pixels,
            label: sample.label.clone(),
        })
        .collect())
}
