//! Binarization and topology-preserving thinning.
//!
//! Thinning runs Zhang-Suen style: two alternating subiterations, the first
//! peeling south-east boundary pixels and the second north-west ones. A
//! pixel is only removed if it is a simple point of the current image (its
//! 8-connectivity number is 1) and not an end point, so 8-connected
//! foreground components and 4-connected background components survive
//! unchanged. Any 2x2 block left at the fixed point is broken by removing
//! one of its simple pixels.

use serde::{Deserialize, Serialize};

use crate::dataset::{BinaryImage, Raster};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// A binary image with no fully-on 2x2 window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonImage(BinaryImage);

impl SkeletonImage {
    pub fn image(&self) -> &BinaryImage {
        &self.0
    }

    pub fn into_inner(self) -> BinaryImage {
        self.0
    }
}

/// Pixel on iff intensity `>= threshold`.
pub fn binarize(raster: &Raster, threshold: f64) -> Result<BinaryImage> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!(
            "binarization threshold {threshold} outside (0, 1)"
        )));
    }
    BinaryImage::from_fn(raster.width(), raster.height(), |x, y| {
        raster.get(x, y) >= threshold
    })
}

/// Neighbours counter-clockwise from east: E, NE, N, NW, W, SW, S, SE.
fn neighbours(img: &BinaryImage, x: usize, y: usize) -> [bool; 8] {
    let (x, y) = (x as isize, y as isize);
    [
        img.get_signed(x + 1, y),
        img.get_signed(x + 1, y - 1),
        img.get_signed(x, y - 1),
        img.get_signed(x - 1, y - 1),
        img.get_signed(x - 1, y),
        img.get_signed(x - 1, y + 1),
        img.get_signed(x, y + 1),
        img.get_signed(x + 1, y + 1),
    ]
}

/// Yokoi connectivity number for 8-connected foreground.
fn connectivity_number(n: &[bool; 8]) -> u8 {
    let off = |i: usize| !n[i % 8] as u8;
    [0, 2, 4, 6]
        .iter()
        .map(|&k| off(k) - off(k) * off(k + 1) * off(k + 2))
        .sum()
}

fn is_simple(n: &[bool; 8]) -> bool {
    connectivity_number(n) == 1
}

fn removable(img: &BinaryImage, x: usize, y: usize, pass: usize) -> bool {
    if !img.get(x, y) {
        return false;
    }
    let n = neighbours(img, x, y);
    let count = n.iter().filter(|&&b| b).count();
    if !(2..=6).contains(&count) || !is_simple(&n) {
        return false;
    }
    let (e, north, w, s) = (n[0], n[2], n[4], n[6]);
    if pass == 0 {
        !(north && e && s) && !(e && s && w)
    } else {
        !(north && e && w) && !(north && s && w)
    }
}

fn thinning_pass(img: &mut BinaryImage, pass: usize) -> bool {
    let candidates: Vec<(usize, usize)> = img
        .on_pixels()
        .filter(|&(x, y)| removable(img, x, y, pass))
        .collect();
    let mut changed = false;
    // candidates are chosen in parallel, deletions re-checked in sequence
    for (x, y) in candidates {
        if removable(img, x, y, pass) {
            img.set(x, y, false);
            changed = true;
        }
    }
    changed
}

fn block_at(img: &BinaryImage, x: usize, y: usize) -> bool {
    img.get(x, y) && img.get(x + 1, y) && img.get(x, y + 1) && img.get(x + 1, y + 1)
}

fn break_blocks(img: &mut BinaryImage) -> bool {
    let mut changed = false;
    for y in 0..img.height().saturating_sub(1) {
        for x in 0..img.width().saturating_sub(1) {
            if !block_at(img, x, y) {
                continue;
            }
            for (px, py) in [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)] {
                if is_simple(&neighbours(img, px, py)) {
                    img.set(px, py, false);
                    changed = true;
                    break;
                }
            }
        }
    }
    changed
}

/// Thins `img` to one-pixel-wide strokes; returns the image and the number
/// of full (two-subiteration) passes run.
pub fn skeletonize_traced(img: &BinaryImage) -> (SkeletonImage, usize) {
    let mut out = img.clone();
    let mut iterations = 0;
    loop {
        loop {
            iterations += 1;
            let a = thinning_pass(&mut out, 0);
            let b = thinning_pass(&mut out, 1);
            if !(a || b) {
                break;
            }
        }
        if !break_blocks(&mut out) {
            break;
        }
    }
    (SkeletonImage(out), iterations)
}

pub fn skeletonize(img: &BinaryImage) -> SkeletonImage {
    skeletonize_traced(img).0
}

/// True when no 2x2 window is fully on.
pub fn is_thin(img: &BinaryImage) -> bool {
    (0..img.height().saturating_sub(1))
        .all(|y| (0..img.width().saturating_sub(1)).all(|x| !block_at(img, x, y)))
}

fn count_regions(img: &BinaryImage, value: bool, eight: bool) -> usize {
    let (w, h) = (img.width(), img.height());
    let mut seen = vec![false; w * h];
    let mut regions = 0;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || img.pixels()[start] != value {
            continue;
        }
        regions += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] && img.pixels()[j] == value {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    regions
}

/// 8-connected foreground components.
pub fn count_components(img: &BinaryImage) -> usize {
    count_regions(img, true, true)
}

/// 4-connected background components.
pub fn count_background_regions(img: &BinaryImage) -> usize {
    count_regions(img, false, false)
}
