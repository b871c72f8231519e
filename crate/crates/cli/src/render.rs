//! PNG layouts: the prototype triptych and the variant contact sheet.

use image::{GrayImage, Luma, Rgb, RgbImage};

use agp::agp::Prototype;
use agp::dataset::{BinaryImage, PointCloud};

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const INK: Rgb<u8> = Rgb([0, 0, 0]);
const GUTTER: u32 = 6;

const PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

fn cell(v: f64, size: u32) -> Option<u32> {
    let c = (v + 0.5).floor();
    (c >= 0.0 && c < size as f64).then_some(c as u32)
}

/// Three panels: the input image, its pixels colored by the mixture
/// component of their normalized position, and the sampled prototype points.
/// `normalized` must list the image's on-pixels in row-major order.
pub fn triptych(
    raw: &BinaryImage,
    normalized: &PointCloud,
    proto: &Prototype,
    size: u32,
) -> RgbImage {
    let (w, h) = (raw.width() as u32, raw.height() as u32);
    let panel_w = w.max(size);
    let panel_h = h.max(size);
    let mut img = RgbImage::from_pixel(3 * panel_w + 2 * GUTTER, panel_h, WHITE);
    let offset = |panel: u32| panel * (panel_w + GUTTER);
    for ((x, y), p) in raw.on_pixels().zip(normalized.points()) {
        let (x, y) = (x as u32, y as u32);
        img.put_pixel(offset(0) + x, y, INK);
        let k = proto.model.assign(*p);
        img.put_pixel(offset(1) + x, y, Rgb(PALETTE[k % PALETTE.len()]));
    }
    for p in proto.points.points() {
        if let (Some(x), Some(y)) = (cell(p.x, size), cell(p.y, size)) {
            img.put_pixel(offset(2) + x, y, INK);
        }
    }
    img
}

fn blit(sheet: &mut GrayImage, img: &BinaryImage, x0: u32, y0: u32, scale: u32) {
    for (x, y) in img.on_pixels() {
        for dy in 0..scale {
            for dx in 0..scale {
                sheet.put_pixel(x0 + x as u32 * scale + dx, y0 + y as u32 * scale + dy, Luma([0]));
            }
        }
    }
}

/// Sources on the top row, variants below in rows of `cols`, all scaled by
/// `scale`. Images must share one size.
pub fn contact_sheet(
    sources: &[BinaryImage],
    variants: &[&BinaryImage],
    cols: usize,
    scale: u32,
) -> GrayImage {
    let side = sources
        .first()
        .or(variants.first().copied())
        .map_or(1, |i| i.width() as u32)
        * scale;
    let cols = cols.max(sources.len()).max(1) as u32;
    let variant_rows = variants.len().div_ceil(cols as usize) as u32;
    let rows = 1 + variant_rows;
    let step = side + GUTTER;
    // an extra gutter separates sources from variants
    let height = rows * step + GUTTER;
    let mut sheet = GrayImage::from_pixel(cols * step + GUTTER, height, Luma([255]));
    for (i, s) in sources.iter().enumerate() {
        blit(&mut sheet, s, GUTTER + i as u32 * step, GUTTER, scale);
    }
    let rule = step + GUTTER / 2;
    for x in 0..sheet.width() {
        sheet.put_pixel(x, rule, Luma([180]));
    }
    for (i, v) in variants.iter().enumerate() {
        let (r, c) = (i as u32 / cols, i as u32 % cols);
        blit(&mut sheet, v, GUTTER + c * step, GUTTER + (r + 1) * step, scale);
    }
    sheet
}
