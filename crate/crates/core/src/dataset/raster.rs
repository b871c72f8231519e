use std::path::Path;

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use super::cloud::{normalize_center, Point, PointCloud};
use crate::error::{Error, Result};

/// Fixed-size grid of on/off pixels, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    pixels: Vec<bool>,
}

impl BinaryImage {
    /// All-off image.
    pub fn blank(width: usize, height: usize) -> Result<Self> {
        Self::from_pixels(width, height, vec![false; width * height])
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Contract(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Contract(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from a predicate over `(x, y)`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::from_pixels(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    /// Out-of-range coordinates read as off.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.pixels[y * self.width + x] = on;
    }

    pub fn count_on(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn is_blank(&self) -> bool {
        !self.pixels.iter().any(|&p| p)
    }

    /// `(x, y)` of every on-pixel in row-major order.
    pub fn on_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| (i % self.width, i / self.width))
    }

    /// Black strokes on white, the Omniglot convention.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            if self.get(x as usize, y as usize) {
                Luma([0])
            } else {
                Luma([255])
            }
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_gray().save(path)?;
        Ok(())
    }
}

/// Real-valued grid with intensities in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Raster {
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::Contract(format!(
                "raster {width}x{height} cannot hold {} values",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!("raster value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::from_values(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn from_binary(img: &BinaryImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            values: img
                .pixels()
                .iter()
                .map(|&on| if on { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Intensity maps to darkness: 1.0 is black.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.get(x as usize, y as usize);
            Luma([(255.0 * (1.0 - v)).round() as u8])
        })
    }
}

/// Reads a raster image and thresholds its darkness.
///
/// A pixel is on when `1 - luminance / 255 >= threshold`, so dark strokes on
/// a light background become foreground.
pub fn load_image(path: &Path, threshold: f64) -> Result<BinaryImage> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!(
            "binarization threshold {threshold} outside [0, 1]"
        )));
    }
    let decoded = image::open(path).map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let gray = decoded.to_luma8();
    let img = BinaryImage::from_fn(gray.width() as usize, gray.height() as usize, |x, y| {
        let luma = gray.get_pixel(x as u32, y as u32)[0] as f64 / 255.0;
        1.0 - luma >= threshold
    })?;
    if img.is_blank() {
        return Err(Error::BlankImage);
    }
    Ok(img)
}

/// One point per on-pixel, located at `(column, row)`.
pub fn to_point_cloud(img: &BinaryImage) -> Result<PointCloud> {
    let points: Vec<Point> = img
        .on_pixels()
        .map(|(x, y)| Point::new(x as f64, y as f64))
        .collect();
    if points.is_empty() {
        return Err(Error::BlankImage);
    }
    PointCloud::new(points)
}

/// Pixel `(c, r)` owns the half-open cell `[c - 0.5, c + 0.5) x [r - 0.5, r + 0.5)`.
fn cell_of(v: f64, size: usize) -> Option<usize> {
    let idx = (v + 0.5).floor();
    (idx >= 0.0 && idx < size as f64).then_some(idx as usize)
}

/// Normalizes the cloud into a `size`-frame and marks every cell hit by a point.
///
/// Points that land outside the grid after normalization are dropped.
pub fn rasterize(pc: &PointCloud, size: usize) -> Result<BinaryImage> {
    let normalized = normalize_center(pc, size as f64)?;
    let mut img = BinaryImage::blank(size, size)?;
    for p in normalized.points() {
        if let (Some(x), Some(y)) = (cell_of(p.x, size), cell_of(p.y, size)) {
            img.set(x, y, true);
        }
    }
    Ok(img)
}

/// Normalizes the cloud into a `size`-frame and splats each point bilinearly
/// onto its four nearest pixel centers; accumulated mass saturates at 1.
pub fn rasterize_soft(pc: &PointCloud, size: usize) -> Result<Raster> {
    let normalized = normalize_center(pc, size as f64)?;
    let mut acc = vec![0.0; size * size];
    for p in normalized.points() {
        let (x0, y0) = (p.x.floor(), p.y.floor());
        let (fx, fy) = (p.x - x0, p.y - y0);
        for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
            for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
                let (x, y) = (x0 + dx, y0 + dy);
                if x >= 0.0 && y >= 0.0 && x < size as f64 && y < size as f64 {
                    acc[y as usize * size + x as usize] += wx * wy;
                }
            }
        }
    }
    Raster::from_values(size, size, acc.into_iter().map(|v| v.min(1.0)).collect())
}
