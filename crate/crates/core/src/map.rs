//! Raster value types shared across the toolkit.
//!
//! All rasters are row-major with pixel `(x, y)` at index `y * width + x`.
//! In continuous coordinates pixel `(x, y)` occupies the unit square
//! `[x, x+1) x [y, y+1)` and has its center at `(x + 0.5, y + 0.5)`.
//! Every type is an immutable value after construction; operations on them
//! are pure functions.

use crate::error::{Error, Result};

/// Full-image grayscale map with values in `[0, 1]`.
///
/// Used for soft predictions, fused camouflage maps, and ground-truth maps
/// (including all-zero maps for images without a camouflaged object).
#[derive(Debug, Clone, PartialEq)]
pub struct GrayscaleMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GrayscaleMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "grayscale map dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values for a {width}x{height} map, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange(format!(
                "grayscale value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population standard deviation (divides by N, not N-1).
    pub fn std_dev(&self) -> f64 {
        let mu = self.mean();
        let var =
            self.values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / self.values.len() as f64;
        var.sqrt()
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for y in 0..self.height {
            let row = &self.values[y * self.width..(y + 1) * self.width];
            values.extend(row.iter().rev());
        }
        Self {
            width: self.width,
            height: self.height,
            values,
        }
    }
}

/// Binary mask with per-pixel values in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "mask dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values for a {width}x{height} mask, got {}",
                width * height,
                values.len()
            )));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::OutOfRange("mask values must be 0 or 1".into()));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y) as u8);
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    /// Number of foreground pixels.
    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    pub fn is_all_one(&self) -> bool {
        self.values.iter().all(|&v| v == 1)
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for y in 0..self.height {
            let row = &self.values[y * self.width..(y + 1) * self.width];
            values.extend(row.iter().rev());
        }
        Self {
            width: self.width,
            height: self.height,
            values,
        }
    }

    pub fn to_grayscale(&self) -> GrayscaleMap {
        GrayscaleMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| v as f64).collect(),
        }
    }
}

/// RGB image with channel values in `[0, 1]`, interleaved `r, g, b` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values for a {width}x{height} RGB image, got {}",
                width * height * 3,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange(format!("RGB value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            values.extend_from_slice(&rgb);
        }
        Self::new(width, height, values)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                values.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        debug_assert!(x < self.width && y < self.height);
        let i = (y * self.width + x) * 3;
        [self.values[i], self.values[i + 1], self.values[i + 2]]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                let i = (y * self.width + x) * 3;
                values.extend_from_slice(&self.values[i..i + 3]);
            }
        }
        Self {
            width: self.width,
            height: self.height,
            values,
        }
    }

    /// Mutable paste access used by the augmentation pipeline.
    pub(crate) fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.values[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Multi-channel feature map, channel-major: value of channel `c` at pixel
/// `(x, y)` lives at `(c * height + y) * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "feature map dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if values.len() != channels * width * height {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values for a {channels}x{height}x{width} feature map, got {}",
                channels * width * height,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange(
                "feature map values must be finite".into(),
            ));
        }
        Ok(Self {
            channels,
            width,
            height,
            values,
        })
    }

    pub fn zeros(channels: usize, width: usize, height: usize) -> Self {
        Self {
            channels,
            width,
            height,
            values: vec![0.0; channels * width * height],
        }
    }

    pub fn from_fn(
        channels: usize,
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(channels * width * height);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    values.push(f(c, x, y));
                }
            }
        }
        Self::new(channels, width, height, values)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        debug_assert!(c < self.channels && x < self.width && y < self.height);
        self.values[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f64) {
        self.values[(c * self.height + y) * self.width + x] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = Self::zeros(self.channels, self.width, self.height);
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    out.set(c, x, y, self.get(c, self.width - 1 - x, y));
                }
            }
        }
        out
    }
}

/// Flips an image left-right: `output(x, y) == input(width-1-x, y)`.
pub fn flip_horizontal_image(img: &RgbImage) -> RgbImage {
    img.flip_horizontal()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_rejects_out_of_range() {
        assert!(GrayscaleMap::new(2, 1, vec![0.0, 1.5]).is_err());
        assert!(GrayscaleMap::new(2, 1, vec![-0.1, 0.5]).is_err());
        assert!(GrayscaleMap::new(2, 1, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn grayscale_rejects_bad_count() {
        assert!(GrayscaleMap::new(2, 2, vec![0.0; 3]).is_err());
        assert!(GrayscaleMap::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn flip_single_pixel_is_identity() {
        let img = RgbImage::filled(1, 1, [0.2, 0.4, 0.6]).unwrap();
        assert_eq!(flip_horizontal_image(&img), img);
    }

    #[test]
    fn flip_two_pixels_swaps() {
        let img = RgbImage::new(2, 1, vec![0.1, 0.2, 0.3, 0.7, 0.8, 0.9]).unwrap();
        let flipped = flip_horizontal_image(&img);
        assert_eq!(flipped.pixel(0, 0), [0.7, 0.8, 0.9]);
        assert_eq!(flipped.pixel(1, 0), [0.1, 0.2, 0.3]);
    }

    #[test]
    fn flip_is_involution() {
        let img = RgbImage::from_fn(5, 3, |x, y| {
            [
                (x as f64) / 10.0,
                (y as f64) / 10.0,
                ((x + y) as f64) / 20.0,
            ]
        })
        .unwrap();
        assert_eq!(flip_horizontal_image(&flip_horizontal_image(&img)), img);
    }

    #[test]
    fn mask_flip_involution_and_count() {
        let m = BinaryMask::from_fn(4, 3, |x, y| (x + y) % 2 == 0);
        assert_eq!(m.flip_horizontal().flip_horizontal(), m);
        assert_eq!(m.flip_horizontal().count_ones(), m.count_ones());
    }

    #[test]
    fn population_std() {
        let m = GrayscaleMap::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert!((m.mean() - 0.5).abs() < 1e-15);
        assert!((m.std_dev() - 0.5).abs() < 1e-15);
    }
}
