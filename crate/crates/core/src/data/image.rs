use std::path::Path;

use image::imageops::{self, FilterType};
use image::RgbImage;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel ImageNet statistics applied after scaling raw values to [0, 1].
pub const CHANNEL_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const CHANNEL_STD: [f64; 3] = [0.229, 0.224, 0.225];

pub fn normalize_value(raw: f64, channel: usize) -> f64 {
    (raw / 255.0 - CHANNEL_MEAN[channel]) / CHANNEL_STD[channel]
}

pub fn denormalize_value(v: f64, channel: usize) -> f64 {
    (v * CHANNEL_STD[channel] + CHANNEL_MEAN[channel]) * 255.0
}

/// A normalised `3×H×W` RGB image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor(Tensor);

impl ImageTensor {
    pub fn from_rgb(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = vec![0.0; 3 * h * w];
        for (x, y, px) in img.enumerate_pixels() {
            let at = y as usize * w + x as usize;
            for c in 0..3 {
                data[c * h * w + at] = normalize_value(px[c] as f64, c);
            }
        }
        ImageTensor(Tensor::new([3, h, w], data).expect("nonempty image"))
    }

    /// Wraps an already-normalised tensor.
    pub fn from_tensor(t: Tensor) -> Result<Self> {
        match t.shape() {
            [3, _, _] => Ok(ImageTensor(t)),
            s => Err(Error::dim(format!("image tensor must be 3×H×W, got {s:?}"))),
        }
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn height(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[2]
    }

    /// Raw channel values, unclamped and unrounded.
    pub fn denormalized(&self) -> Vec<f64> {
        let hw = self.height() * self.width();
        self.0
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| denormalize_value(v, i / hw))
            .collect()
    }
}

/// Bilinear resize to `width×height` without preserving aspect; an image
/// already at the target size is returned untouched.
pub fn resize_rgb(img: RgbImage, width: u32, height: u32) -> Result<RgbImage> {
    if width == 0 || height == 0 {
        return Err(Error::contract(format!("resize target {width}×{height} has a zero side")));
    }
    if img.width() == width && img.height() == height {
        return Ok(img);
    }
    Ok(imageops::resize(&img, width, height, FilterType::Triangle))
}

/// Decodes any raster `image` understands and resizes it.
pub fn load_rgb(path: &Path, width: u32, height: u32) -> Result<RgbImage> {
    if width == 0 || height == 0 {
        return Err(Error::contract(format!("resize target {width}×{height} has a zero side")));
    }
    let decoded = image::open(path).map_err(|e| Error::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    resize_rgb(decoded.to_rgb8(), width, height)
}

pub fn load_image(path: &Path, width: u32, height: u32) -> Result<ImageTensor> {
    Ok(ImageTensor::from_rgb(&load_rgb(path, width, height)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use proptest::prelude::*;

    #[test]
    fn full_red_normalises() {
        let v = normalize_value(255.0, 0);
        assert!((v - (1.0 - 0.485) / 0.229).abs() < 1e-12);
        assert!((v - 2.249).abs() < 1e-3);
    }

    #[test]
    fn near_mean_red() {
        assert!((normalize_value(124.0, 0) - 0.006).abs() < 1e-3);
    }

    #[test]
    fn tensor_layout_is_channel_major() {
        let mut img = RgbImage::new(2, 1);
        img.put_pixel(1, 0, Rgb([255, 0, 0]));
        let t = ImageTensor::from_rgb(&img);
        assert_eq!(t.tensor().shape(), &[3, 1, 2]);
        assert_eq!(t.tensor().data()[1], normalize_value(255.0, 0));
        assert_eq!(t.tensor().data()[3], normalize_value(0.0, 1));
    }

    #[test]
    fn same_size_resize_is_identity() {
        let img = RgbImage::from_fn(5, 4, |x, y| Rgb([(x * 40) as u8, (y * 50) as u8, 7]));
        assert_eq!(resize_rgb(img.clone(), 5, 4).unwrap(), img);
    }

    #[test]
    fn zero_target_rejected() {
        let img = RgbImage::new(2, 2);
        assert!(matches!(resize_rgb(img, 0, 3), Err(Error::Contract(_))));
    }

    #[test]
    fn undecodable_file_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("broken.png");
        std::fs::write(&p, b"not a png").unwrap();
        match load_image(&p, 8, 8) {
            Err(Error::Input { path, .. }) => assert_eq!(path, p),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resize_changes_geometry() {
        let img = RgbImage::from_pixel(10, 6, Rgb([10, 20, 30]));
        let out = resize_rgb(img, 4, 8).unwrap();
        assert_eq!((out.width(), out.height()), (4, 8));
        assert_eq!(out.get_pixel(2, 3), &Rgb([10, 20, 30]));
    }

    proptest! {
        #[test]
        fn normalisation_round_trips(raw in 0.0f64..=255.0, c in 0usize..3) {
            prop_assert!((denormalize_value(normalize_value(raw, c), c) - raw).abs() < 1e-9);
        }
    }
}
