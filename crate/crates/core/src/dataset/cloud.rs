use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of the frame occupied by the longest side of a normalized cloud.
pub const FRAME_FILL: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

/// Non-empty set of finite 2D coordinates in pixel units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct PointCloud {
    points: Vec<Point>,
}

impl TryFrom<Vec<Point>> for PointCloud {
    type Error = Error;

    fn try_from(points: Vec<Point>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<PointCloud> for Vec<Point> {
    fn from(pc: PointCloud) -> Self {
        pc.points
    }
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Contract("point cloud must be non-empty".into()));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Contract("point cloud has non-finite coordinates".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point {
        let n = self.points.len() as f64;
        let (sx, sy) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point::new(sx / n, sy / n)
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let first = self.points[0];
        self.points.iter().fold(
            BoundingBox {
                min: first,
                max: first,
            },
            |bb, p| BoundingBox {
                min: Point::new(bb.min.x.min(p.x), bb.min.y.min(p.y)),
                max: Point::new(bb.max.x.max(p.x), bb.max.y.max(p.y)),
            },
        )
    }

    /// Applies `f` to every point.
    pub fn map(&self, f: impl Fn(Point) -> Point) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> PointCloud {
        self.map(|p| Point::new(p.x + dx, p.y + dy))
    }

    /// Rotates counterclockwise (in the x-right, y-up sense) by `degrees` about `center`.
    pub fn rotated_about(&self, center: Point, degrees: f64) -> PointCloud {
        let (s, c) = degrees.to_radians().sin_cos();
        self.map(|p| {
            let (dx, dy) = (p.x - center.x, p.y - center.y);
            Point::new(center.x + c * dx - s * dy, center.y + s * dx + c * dy)
        })
    }
}

/// Scales the cloud so its bounding box's longest side spans `0.9 * frame`
/// (aspect ratio kept) and translates its centroid to `(frame/2, frame/2)`.
///
/// A cloud whose points all coincide collapses to the frame center.
pub fn normalize_center(pc: &PointCloud, frame: f64) -> Result<PointCloud> {
    if !(frame >= 2.0) {
        return Err(Error::Contract(format!("frame must be >= 2, got {frame}")));
    }
    let bb = pc.bounding_box();
    let side = bb.width().max(bb.height());
    let half = frame / 2.0;
    if side <= 0.0 {
        return Ok(pc.map(|_| Point::new(half, half)));
    }
    let scale = FRAME_FILL * frame / side;
    let c = pc.centroid();
    Ok(pc.map(|p| Point::new((p.x - c.x) * scale + half, (p.y - c.y) * scale + half)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(pts: &[(f64, f64)]) -> PointCloud {
        PointCloud::new(pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn single_point_goes_to_center() {
        let out = normalize_center(&cloud(&[(3.0, -8.0)]), 105.0).unwrap();
        assert_eq!(out.points(), &[Point::new(52.5, 52.5)]);
    }

    #[test]
    fn coincident_points_do_not_divide_by_zero() {
        let out = normalize_center(&cloud(&[(1.0, 1.0), (1.0, 1.0)]), 105.0).unwrap();
        assert!(out.points().iter().all(|&p| p == Point::new(52.5, 52.5)));
    }

    #[test]
    fn unit_square_scales_to_frame_fill() {
        let sq = cloud(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let out = normalize_center(&sq, 105.0).unwrap();
        let bb = out.bounding_box();
        assert!((bb.width() - 94.5).abs() < 1e-12);
        assert!((bb.height() - 94.5).abs() < 1e-12);
        let c = out.centroid();
        assert!((c.x - 52.5).abs() < 1e-12 && (c.y - 52.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_tiny_frame_and_empty_cloud() {
        assert!(normalize_center(&cloud(&[(0.0, 0.0)]), 1.0).is_err());
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::new(vec![Point::new(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn rotation_preserves_centroid_distance() {
        let pc = cloud(&[(1.0, 0.0), (0.0, 2.0), (-3.0, 1.0)]);
        let c = pc.centroid();
        let r = pc.rotated_about(c, 90.0);
        for (a, b) in pc.points().iter().zip(r.points()) {
            assert!((a.distance(c) - b.distance(c)).abs() < 1e-12);
        }
        let back = r.rotated_about(c, -90.0);
        for (a, b) in pc.points().iter().zip(back.points()) {
            assert!(a.distance(*b) < 1e-12);
        }
    }

    fn arb_cloud() -> impl Strategy<Value = PointCloud> {
        prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..40)
            .prop_filter("non-degenerate", |v| {
                v.iter().any(|p| (p.0 - v[0].0).abs() > 1e-3 || (p.1 - v[0].1).abs() > 1e-3)
            })
            .prop_map(|v| cloud(&v))
    }

    proptest! {
        #[test]
        fn invariant_to_translation_and_scale(
            pc in arb_cloud(),
            s in 0.1..20.0f64,
            tx in -100.0..100.0f64,
            ty in -100.0..100.0f64,
        ) {
            let moved = pc.map(|p| Point::new(s * p.x + tx, s * p.y + ty));
            let a = normalize_center(&pc, 105.0).unwrap();
            let b = normalize_center(&moved, 105.0).unwrap();
            for (p, q) in a.points().iter().zip(b.points()) {
                prop_assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9);
            }
        }

        #[test]
        fn idempotent(pc in arb_cloud()) {
            let once = normalize_center(&pc, 105.0).unwrap();
            let twice = normalize_center(&once, 105.0).unwrap();
            for (p, q) in once.points().iter().zip(twice.points()) {
                prop_assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9);
            }
        }
    }
}
