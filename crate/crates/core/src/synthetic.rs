//! Procedural handwriting-like character corpus in the Omniglot layout.
//!
//! Each alphabet owns a small library of cubic stroke primitives plus a
//! preferred set of stroke orientations and scales. A character places two to
//! four primitives inside a 105 px frame; an instance redraws the character
//! with per-stroke and per-control-point jitter, a small global affine
//! perturbation and a random pen width. Characters of one alphabet share
//! primitives and orientations, so within-alphabet discrimination is harder
//! than across alphabets.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{BinaryImage, DatasetIndex, Point, CLASSIFY_FRAME};
use crate::error::Result;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub alphabets: usize,
    pub classes_per_alphabet: usize,
    pub instances_per_class: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            alphabets: 12,
            classes_per_alphabet: 24,
            instances_per_class: 6,
            size: CLASSIFY_FRAME,
            seed: 2024,
        }
    }
}

/// Cubic Bezier control points in the unit square `[-1, 1]^2`.
type Primitive = [Point; 4];

#[derive(Clone, Debug)]
struct PlacedStroke {
    primitive: Primitive,
    scale: f64,
    angle: f64,
    offset: Point,
}

#[derive(Clone, Debug)]
pub struct CharacterSpec {
    strokes: Vec<PlacedStroke>,
    seed: u64,
}

#[derive(Clone, Debug)]
pub struct AlphabetSpec {
    pub name: String,
    pub characters: Vec<CharacterSpec>,
}

fn gauss(rng: &mut seed::Rng, sd: f64) -> f64 {
    Normal::new(0.0, sd).expect("finite sd").sample(rng)
}

fn random_primitive(rng: &mut seed::Rng) -> Primitive {
    let start = Point::new(rng.random_range(-1.0..-0.3), rng.random_range(-0.6..0.6));
    let end = Point::new(rng.random_range(0.3..1.0), rng.random_range(-0.6..0.6));
    let c1 = Point::new(rng.random_range(-0.8..0.2), rng.random_range(-1.0..1.0));
    let c2 = Point::new(rng.random_range(-0.2..0.8), rng.random_range(-1.0..1.0));
    [start, c1, c2, end]
}

/// Generates the alphabet and character definitions for `cfg`.
pub fn generate_specs(cfg: &SynthConfig) -> Vec<AlphabetSpec> {
    (0..cfg.alphabets)
        .map(|a| {
            let mut rng = seed::rng(seed::derive(cfg.seed, a as u64));
            let library: Vec<Primitive> = (0..6).map(|_| random_primitive(&mut rng)).collect();
            let angles: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..PI)).collect();
            let base_scale = rng.random_range(0.4..0.6);
            let characters = (0..cfg.classes_per_alphabet)
                .map(|c| {
                    let n_strokes = rng.random_range(2..=4);
                    let strokes = (0..n_strokes)
                        .map(|_| PlacedStroke {
                            primitive: library[rng.random_range(0..library.len())],
                            scale: base_scale * rng.random_range(0.7..1.3),
                            angle: angles[rng.random_range(0..angles.len())]
                                + gauss(&mut rng, 0.15)
                                + if rng.random::<bool>() { PI } else { 0.0 },
                            offset: Point::new(
                                rng.random_range(-0.45..0.45),
                                rng.random_range(-0.45..0.45),
                            ),
                        })
                        .collect();
                    CharacterSpec {
                        strokes,
                        seed: seed::derive(seed::derive(cfg.seed, a as u64), 1_000 + c as u64),
                    }
                })
                .collect();
            AlphabetSpec {
                name: format!("Alphabet_{a:02}"),
                characters,
            }
        })
        .collect()
}

fn bezier(p: &[Point; 4], t: f64) -> Point {
    let u = 1.0 - t;
    let (b0, b1, b2, b3) = (u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t);
    Point::new(
        b0 * p[0].x + b1 * p[1].x + b2 * p[2].x + b3 * p[3].x,
        b0 * p[0].y + b1 * p[1].y + b2 * p[2].y + b3 * p[3].y,
    )
}

fn stamp(img: &mut BinaryImage, c: Point, radius: f64) {
    let r = radius.ceil() as isize + 1;
    let (cx, cy) = (c.x.round() as isize, c.y.round() as isize);
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            if x < 0 || y < 0 || x >= img.width() as isize || y >= img.height() as isize {
                continue;
            }
            let (dx, dy) = (x as f64 - c.x, y as f64 - c.y);
            if dx * dx + dy * dy <= radius * radius {
                img.set(x as usize, y as usize, true);
            }
        }
    }
}

impl CharacterSpec {
    /// Draws instance number `instance` of this character.
    pub fn render(&self, instance: usize, size: usize) -> BinaryImage {
        let mut rng = seed::rng(seed::derive(self.seed, instance as u64));
        let half = size as f64 / 2.0;
        let char_half = 0.42 * size as f64;
        let g_angle = gauss(&mut rng, 5f64.to_radians());
        let g_scale = 1.0 + gauss(&mut rng, 0.06);
        let g_shift = Point::new(gauss(&mut rng, 3.0), gauss(&mut rng, 3.0));
        let pen = rng.random_range(1.0..1.6);
        let (gs, gc) = g_angle.sin_cos();
        let mut img = BinaryImage::blank(size, size).expect("positive size");

        for stroke in &self.strokes {
            let angle = stroke.angle + gauss(&mut rng, 7f64.to_radians());
            let scale = stroke.scale * (1.0 + gauss(&mut rng, 0.07));
            let offset = Point::new(
                stroke.offset.x + gauss(&mut rng, 0.03),
                stroke.offset.y + gauss(&mut rng, 0.03),
            );
            let (s, c) = angle.sin_cos();
            let mut ctrl = stroke.primitive;
            for p in ctrl.iter_mut() {
                // stroke frame -> character frame -> pixels
                let (x, y) = (p.x * scale, p.y * scale);
                let (x, y) = (c * x - s * y + offset.x, s * x + c * y + offset.y);
                let (x, y) = (gc * x - gs * y, gs * x + gc * y);
                *p = Point::new(
                    half + g_shift.x + x * char_half * g_scale + gauss(&mut rng, 2.0),
                    half + g_shift.y + y * char_half * g_scale + gauss(&mut rng, 2.0),
                );
            }
            let length: f64 = ctrl.windows(2).map(|w| w[0].distance(w[1])).sum();
            let steps = (length * 2.0).ceil().max(2.0) as usize;
            for i in 0..=steps {
                stamp(&mut img, bezier(&ctrl, i as f64 / steps as f64), pen);
            }
        }
        img
    }
}

/// Writes `alphabet/character/instance.png` files under `root` and indexes them.
pub fn write_corpus(root: &Path, cfg: &SynthConfig) -> Result<DatasetIndex> {
    for alphabet in generate_specs(cfg) {
        for (c, ch) in alphabet.characters.iter().enumerate() {
            let dir = root.join(&alphabet.name).join(format!("character{:02}", c + 1));
            fs::create_dir_all(&dir)?;
            for i in 0..cfg.instances_per_class {
                ch.render(i, cfg.size)
                    .save_png(&dir.join(format!("{:02}_{:02}.png", c + 1, i + 1)))?;
            }
        }
    }
    DatasetIndex::build(root)
}
