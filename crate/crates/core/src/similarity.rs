//! Radius-based set similarity between prototype point clouds.
//!
//! Two points "intersect" when they lie within `radius` of each other. Every
//! ordered pair `(a, b)` of the cross product is counted either as an
//! intersection or as a difference, so
//! `intersections + symmetric_diff == |A| * |B|` and the score is
//! `intersections - beta * symmetric_diff`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::agp::Prototype;
use crate::dataset::{Point, PointCloud};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityParams {
    pub radius: f64,
    pub beta: f64,
    /// Magnitude of the up/down/left/right query probes, in pixels.
    pub shift_px: f64,
    /// Signed query rotations about its centroid, in degrees.
    pub rotations_deg: Vec<f64>,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            radius: 1.6,
            beta: 1.4,
            shift_px: 3.0,
            rotations_deg: vec![15.0, -15.0, 25.0, -25.0],
        }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!("radius must be > 0, got {}", self.radius)));
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be > 1, got {}", self.beta)));
        }
        if !(self.shift_px >= 0.0 && self.shift_px.is_finite()) {
            return Err(Error::Config(format!("shift_px must be >= 0, got {}", self.shift_px)));
        }
        if self.rotations_deg.iter().any(|r| !r.is_finite()) {
            return Err(Error::Config("rotations must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    pub intersections: u64,
    pub symmetric_diff: u64,
}

impl SimilarityScore {
    fn from_counts(intersections: u64, total_pairs: u64, beta: f64) -> Self {
        let symmetric_diff = total_pairs - intersections;
        Self {
            value: intersections as f64 - beta * symmetric_diff as f64,
            intersections,
            symmetric_diff,
        }
    }
}

/// A query transformation tried during alignment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Probe {
    Identity,
    Shift { dx: f64, dy: f64 },
    Rotate { degrees: f64 },
}

impl Probe {
    pub fn apply(&self, pc: &PointCloud) -> PointCloud {
        match *self {
            Probe::Identity => pc.clone(),
            Probe::Shift { dx, dy } => pc.translated(dx, dy),
            Probe::Rotate { degrees } => pc.rotated_about(pc.centroid(), degrees),
        }
    }
}

/// Identity, the four axis shifts, then the configured rotations.
pub fn probes(params: &SimilarityParams) -> Vec<Probe> {
    let s = params.shift_px;
    let mut out = vec![
        Probe::Identity,
        Probe::Shift { dx: 0.0, dy: -s },
        Probe::Shift { dx: 0.0, dy: s },
        Probe::Shift { dx: -s, dy: 0.0 },
        Probe::Shift { dx: s, dy: 0.0 },
    ];
    out.extend(params.rotations_deg.iter().map(|&degrees| Probe::Rotate { degrees }));
    out
}

#[inline]
fn within(a: Point, b: Point, r: f64) -> bool {
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    (dx * dx + dy * dy).sqrt() <= r
}

/// Uniform hash grid over one cloud for exact fixed-radius pair counting.
///
/// Cells are a hair wider than the radius, so any pair within `radius` lies
/// in the same or an adjacent cell regardless of rounding in the cell index.
pub struct PairGrid<'a> {
    points: &'a [Point],
    radius: f64,
    inv_cell: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

impl<'a> PairGrid<'a> {
    pub fn new(pc: &'a PointCloud, radius: f64) -> Self {
        let inv_cell = 1.0 / (radius * (1.0 + 1e-9));
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in pc.points().iter().enumerate() {
            cells
                .entry(Self::key(*p, inv_cell))
                .or_default()
                .push(i as u32);
        }
        Self {
            points: pc.points(),
            radius,
            inv_cell,
            cells,
        }
    }

    fn key(p: Point, inv_cell: f64) -> (i64, i64) {
        ((p.x * inv_cell).floor() as i64, (p.y * inv_cell).floor() as i64)
    }

    /// Number of pairs `(a, b)`, `a` from `other`, within the radius.
    pub fn count_within(&self, other: &PointCloud) -> u64 {
        let mut count = 0u64;
        for &a in other.points() {
            let (cx, cy) = Self::key(a, self.inv_cell);
            for gx in cx - 1..=cx + 1 {
                for gy in cy - 1..=cy + 1 {
                    if let Some(ids) = self.cells.get(&(gx, gy)) {
                        count += ids
                            .iter()
                            .filter(|&&i| within(a, self.points[i as usize], self.radius))
                            .count() as u64;
                    }
                }
            }
        }
        count
    }
}

/// Ordered pairs `(a, b)` with Euclidean distance `<= r`.
pub fn count_intersections(a: &PointCloud, b: &PointCloud, r: f64) -> u64 {
    PairGrid::new(b, r).count_within(a)
}

/// Ordered pairs `(a, b)` with Euclidean distance `> r`.
pub fn symmetric_diff_count(a: &PointCloud, b: &PointCloud, r: f64) -> u64 {
    (a.len() * b.len()) as u64 - count_intersections(a, b, r)
}

pub fn score(a: &PointCloud, b: &PointCloud, params: &SimilarityParams) -> SimilarityScore {
    SimilarityScore::from_counts(
        count_intersections(a, b, params.radius),
        (a.len() * b.len()) as u64,
        params.beta,
    )
}

fn best_against_grid(
    a: &PointCloud,
    grid: &PairGrid<'_>,
    b_len: usize,
    params: &SimilarityParams,
) -> (Probe, SimilarityScore) {
    let total = (a.len() * b_len) as u64;
    let mut best: Option<(Probe, SimilarityScore)> = None;
    for probe in probes(params) {
        let moved = probe.apply(a);
        let s = SimilarityScore::from_counts(grid.count_within(&moved), total, params.beta);
        if best.is_none_or(|(_, b)| s.value > b.value) {
            best = Some((probe, s));
        }
    }
    best.expect("probe set always contains the identity")
}

/// Best score over the query probes of `a` against a fixed `b`, together
/// with the probe that attained it (earliest probe on ties).
pub fn best_alignment(
    a: &PointCloud,
    b: &PointCloud,
    params: &SimilarityParams,
) -> (Probe, SimilarityScore) {
    best_against_grid(a, &PairGrid::new(b, params.radius), b.len(), params)
}

pub fn best_aligned_score(a: &PointCloud, b: &PointCloud, params: &SimilarityParams) -> SimilarityScore {
    best_alignment(a, b, params).1
}

/// Index of the support with the highest aligned score against the query;
/// ties go to the lowest index.
pub fn classify(query: &Prototype, supports: &[Prototype], params: &SimilarityParams) -> Result<usize> {
    scores(query, supports, params).map(|s| argmax(&s))
}

/// Aligned scores of the query against every support.
pub fn scores(
    query: &Prototype,
    supports: &[Prototype],
    params: &SimilarityParams,
) -> Result<Vec<SimilarityScore>> {
    if supports.is_empty() {
        return Err(Error::Contract("classification needs at least one support".into()));
    }
    if let Some(s) = supports.iter().find(|s| s.density() != query.density()) {
        return Err(Error::Contract(format!(
            "prototype densities differ: query {} vs support {}",
            query.density(),
            s.density()
        )));
    }
    Ok(supports
        .iter()
        .map(|s| best_aligned_score(&query.points, &s.points, params))
        .collect())
}

fn argmax(scores: &[SimilarityScore]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if s.value > scores[best].value {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn cloud(pts: &[(f64, f64)]) -> PointCloud {
        PointCloud::new(pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    /// Quadratic pair enumeration, written independently of the grid.
    fn brute_force(a: &PointCloud, b: &PointCloud, r: f64) -> u64 {
        let mut n = 0;
        for p in a.points() {
            for q in b.points() {
                if ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt() <= r {
                    n += 1;
                }
            }
        }
        n
    }

    fn random_cloud(rng: &mut seed::Rng, n: usize, extent: f64) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| Point::new(rng.random_range(0.0..extent), rng.random_range(0.0..extent)))
                .collect(),
        )
        .unwrap()
    }

    fn prototype(points: PointCloud) -> Prototype {
        let model = crate::gmm::MixtureModel::new(
            vec![crate::gmm::GaussianComponent::new(
                1.0,
                points.centroid(),
                crate::gmm::Cov2::isotropic(1.0),
            )
            .unwrap()],
            0.0,
        )
        .unwrap();
        Prototype {
            points,
            class_id: None,
            k_components: 1,
            seed: 0,
            model,
        }
    }

    #[test]
    fn single_pair_threshold() {
        let a = cloud(&[(0.0, 0.0)]);
        let b = cloud(&[(0.0, 2.0)]);
        assert_eq!(count_intersections(&a, &b, 1.6), 0);
        assert_eq!(count_intersections(&a, &b, 2.0), 1);
        assert_eq!(symmetric_diff_count(&a, &b, 1.6), 1);
        assert_eq!(symmetric_diff_count(&a, &a, 0.1), 0);
    }

    #[test]
    fn self_pairs_are_counted() {
        let mut rng = seed::rng(1);
        let a = random_cloud(&mut rng, 80, 105.0);
        assert!(count_intersections(&a, &a, 0.5) >= a.len() as u64);
    }

    #[test]
    fn grid_matches_brute_force() {
        let mut rng = seed::rng(2);
        for _ in 0..20 {
            let a = random_cloud(&mut rng, 50, 40.0);
            let b = random_cloud(&mut rng, 50, 40.0);
            for r in [0.5, 1.6, 5.0] {
                assert_eq!(count_intersections(&a, &b, r), brute_force(&a, &b, r));
            }
        }
    }

    #[test]
    fn grid_is_exact_on_boundaries_and_negative_coordinates() {
        // lattice points hit the radius exactly
        let a = cloud(&[(-2.0, -2.0), (0.0, 0.0), (1.6, 0.0), (-1.6, 3.2)]);
        let b = cloud(&[(0.0, 1.6), (3.2, 0.0), (-1.6, 1.6), (-3.6, -2.0)]);
        for r in [1.6, 2.0, 3.2] {
            assert_eq!(count_intersections(&a, &b, r), brute_force(&a, &b, r));
        }
    }

    #[test]
    fn score_values() {
        let p = SimilarityParams::default();
        let single = cloud(&[(4.0, 4.0)]);
        let s = score(&single, &single, &p);
        assert_eq!((s.intersections, s.symmetric_diff, s.value), (1, 0, 1.0));

        let mut rng = seed::rng(3);
        let a = random_cloud(&mut rng, 300, 10.0);
        let b = a.translated(500.0, 0.0);
        let s = score(&a, &b, &p);
        assert_eq!(s.intersections, 0);
        assert_eq!(s.value, -1.4 * 90_000.0);

        let mid = cloud(&[(0.0, 0.0), (1.0, 0.0)]);
        let s = score(&mid, &single.translated(-4.0, -4.5), &p);
        assert_eq!(s.intersections, 2);
        assert!((s.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_is_undone_by_opposite_probe() {
        let mut rng = seed::rng(4);
        let a = random_cloud(&mut rng, 200, 60.0);
        let rotated = a.rotated_about(a.centroid(), 15.0);
        let p = SimilarityParams::default();
        let (probe, best) = best_alignment(&rotated, &a, &p);
        assert_eq!(probe, Probe::Rotate { degrees: -15.0 });
        assert!(best.value >= score(&rotated, &a, &p).value);
        assert_eq!(best.intersections, count_intersections(&a, &a, 1.6));
    }

    #[test]
    fn identity_wins_for_identical_clouds() {
        let mut rng = seed::rng(5);
        let a = random_cloud(&mut rng, 150, 50.0);
        let (probe, _) = best_alignment(&a, &a, &SimilarityParams::default());
        assert_eq!(probe, Probe::Identity);
    }

    #[test]
    fn alignment_never_hurts() {
        let mut rng = seed::rng(6);
        let p = SimilarityParams::default();
        for _ in 0..100 {
            let a = random_cloud(&mut rng, 60, 30.0);
            let b = random_cloud(&mut rng, 60, 30.0);
            assert!(best_aligned_score(&a, &b, &p).value >= score(&a, &b, &p).value);
        }
    }

    #[test]
    fn probe_set_has_nine_entries() {
        let ps = probes(&SimilarityParams::default());
        assert_eq!(ps.len(), 9);
        assert_eq!(ps[0], Probe::Identity);
    }

    #[test]
    fn classify_picks_exact_copy_and_breaks_ties_low() {
        let mut rng = seed::rng(7);
        let p = SimilarityParams::default();
        let q = random_cloud(&mut rng, 100, 40.0);
        let others: Vec<Prototype> = (0..4)
            .map(|_| prototype(random_cloud(&mut rng, 100, 40.0).translated(30.0, 0.0)))
            .collect();
        let mut supports = others.clone();
        supports.insert(2, prototype(q.clone()));
        assert_eq!(classify(&prototype(q.clone()), &supports, &p).unwrap(), 2);

        let twin = vec![prototype(q.clone()), prototype(q.clone())];
        assert_eq!(classify(&prototype(q.clone()), &twin, &p).unwrap(), 0);

        assert!(classify(&prototype(q.clone()), &[], &p).is_err());
        let short = prototype(random_cloud(&mut rng, 10, 40.0));
        assert!(classify(&prototype(q), &[short.clone(), short], &p).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(SimilarityParams::default().validate().is_ok());
        let bad_beta = SimilarityParams {
            beta: 1.0,
            ..SimilarityParams::default()
        };
        assert!(bad_beta.validate().is_err());
        let bad_r = SimilarityParams {
            radius: 0.0,
            ..SimilarityParams::default()
        };
        assert!(bad_r.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn partition_symmetry_and_monotonicity(
            a in prop::collection::vec((0.0..30.0f64, 0.0..30.0f64), 1..60),
            b in prop::collection::vec((0.0..30.0f64, 0.0..30.0f64), 1..60),
            r in 0.1..6.0f64,
        ) {
            let (a, b) = (cloud(&a), cloud(&b));
            let p = SimilarityParams { radius: r, ..SimilarityParams::default() };
            let s = score(&a, &b, &p);
            prop_assert_eq!(s.intersections + s.symmetric_diff, (a.len() * b.len()) as u64);
            prop_assert_eq!(s.value, s.intersections as f64 - p.beta * s.symmetric_diff as f64);
            prop_assert_eq!(s, score(&b, &a, &p));
            prop_assert!(count_intersections(&a, &b, r) <= count_intersections(&a, &b, r * 1.5));
        }
    }
}
