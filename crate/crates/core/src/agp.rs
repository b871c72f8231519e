//! Abstracted Gaussian prototypes: a fitted mixture resampled into a
//! fixed-size point cloud.

use serde::{Deserialize, Serialize};

use crate::dataset::{normalize_center, to_point_cloud, BinaryImage, ClassId, PointCloud};
use crate::error::{Error, Result};
use crate::gmm::{fit_gmm, sample_mixture, EmOptions, MixtureModel};
use crate::seed;

/// Paper-tuned classification defaults.
pub const DEFAULT_K: usize = 10;
pub const DEFAULT_DENSITY: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub points: PointCloud,
    pub class_id: Option<ClassId>,
    pub k_components: usize,
    pub seed: u64,
    pub model: MixtureModel,
}

impl Prototype {
    pub fn density(&self) -> usize {
        self.points.len()
    }

    pub fn with_class(mut self, class_id: ClassId) -> Self {
        self.class_id = Some(class_id);
        self
    }
}

/// Fits a `k`-component mixture to `pc` and samples `density` points from it.
///
/// `density` is the total prototype size; points are spread over components
/// in proportion to the mixture weights.
pub fn build_agp(pc: &PointCloud, k: usize, density: usize, seed: u64) -> Result<Prototype> {
    build_agp_with(pc, k, density, seed, &EmOptions::default())
}

pub fn build_agp_with(
    pc: &PointCloud,
    k: usize,
    density: usize,
    seed: u64,
    em: &EmOptions,
) -> Result<Prototype> {
    if density == 0 {
        return Err(Error::Contract("prototype density must be >= 1".into()));
    }
    let model = fit_gmm(pc, k, seed::derive(seed, 0), em)?;
    let points = sample_mixture(&model, density, seed::derive(seed, 1))?;
    Ok(Prototype {
        points,
        class_id: None,
        k_components: k,
        seed,
        model,
    })
}

/// Prototype of a character image in a normalized `frame`: the on-pixels are
/// scaled and centered first, then fitted and resampled.
pub fn prototype_from_image(
    img: &BinaryImage,
    k: usize,
    density: usize,
    seed: u64,
    frame: f64,
    em: &EmOptions,
) -> Result<Prototype> {
    let pc = normalize_center(&to_point_cloud(img)?, frame)?;
    build_agp_with(&pc, k, density, seed, em)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Point;

    fn stroke_cloud() -> PointCloud {
        // an "L" and a short diagonal, roughly character-sized
        let mut pts = Vec::new();
        for i in 0..60 {
            for w in 0..3 {
                pts.push(Point::new(20.0 + w as f64, 20.0 + i as f64));
                pts.push(Point::new(20.0 + i as f64, 80.0 + w as f64));
            }
        }
        for i in 0..30 {
            pts.push(Point::new(50.0 + i as f64, 30.0 + i as f64));
            pts.push(Point::new(51.0 + i as f64, 30.0 + i as f64));
        }
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn prototype_has_requested_density() {
        let p = build_agp(&stroke_cloud(), 10, 300, 7).unwrap();
        assert_eq!(p.density(), 300);
        assert_eq!(p.k_components, 10);
        assert_eq!(p.model.k(), 10);
    }

    #[test]
    fn degenerate_single_point_prototype() {
        let blob: Vec<Point> = (0..9)
            .map(|i| Point::new(40.0 + (i % 3) as f64 * 0.1, 12.0 + (i / 3) as f64 * 0.1))
            .collect();
        let pc = PointCloud::new(blob).unwrap();
        let p = build_agp(&pc, 1, 1, 3).unwrap();
        assert_eq!(p.density(), 1);
        assert!(p.points.points()[0].distance(pc.centroid()) < 1.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let pc = stroke_cloud();
        assert_eq!(build_agp(&pc, 6, 200, 99).unwrap(), build_agp(&pc, 6, 200, 99).unwrap());
        assert_ne!(
            build_agp(&pc, 6, 200, 99).unwrap().points,
            build_agp(&pc, 6, 200, 100).unwrap().points
        );
    }

    #[test]
    fn prototype_stays_near_strokes() {
        let pc = stroke_cloud();
        let p = build_agp(&pc, 10, 300, 1).unwrap();
        // nearest-neighbour oracle: mean distance from prototype to input
        let mean_nn: f64 = p
            .points
            .points()
            .iter()
            .map(|q| {
                pc.points()
                    .iter()
                    .map(|s| s.distance(*q))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / p.density() as f64;
        assert!(mean_nn < 3.0, "{mean_nn}");
    }

    #[test]
    fn errors_propagate() {
        let pc = PointCloud::new(vec![Point::new(0.0, 0.0)]).unwrap();
        assert!(matches!(build_agp(&pc, 2, 10, 0), Err(Error::Infeasible(_))));
        assert!(build_agp(&pc, 1, 0, 0).is_err());
    }

    #[test]
    fn prototype_json_round_trip() {
        let p = build_agp(&stroke_cloud(), 3, 20, 5).unwrap().with_class(ClassId(4));
        let back: Prototype = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(p, back);
    }
}
