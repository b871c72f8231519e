//! Full-covariance 2D Gaussian mixtures: densities, EM fitting and sampling.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::seed;

/// Symmetric 2x2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub const fn isotropic(var: f64) -> Self {
        Self::new(var, 0.0, var)
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let radius = half_diff.hypot(self.xy);
        (mean - radius, mean + radius)
    }

    /// Raises every eigenvalue below `floor` to `floor`.
    pub fn clamp_eigenvalues(&self, floor: f64) -> Cov2 {
        let (lo, hi) = self.eigenvalues();
        if lo >= floor {
            return *self;
        }
        // unit eigenvector for the larger eigenvalue
        let (vx, vy) = if self.xy.abs() > 0.0 {
            let (vx, vy) = (hi - self.yy, self.xy);
            let n = vx.hypot(vy);
            (vx / n, vy / n)
        } else if self.xx >= self.yy {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let (hi, lo) = (hi.max(floor), floor);
        // hi * v v^T + lo * w w^T with w = (-vy, vx)
        Cov2::new(
            hi * vx * vx + lo * vy * vy,
            (hi - lo) * vx * vy,
            hi * vy * vy + lo * vx * vx,
        )
    }

    fn inverse(&self) -> Option<Cov2> {
        let det = self.det();
        (det > 0.0 && det.is_finite())
            .then(|| Cov2::new(self.yy / det, -self.xy / det, self.xx / det))
    }

    fn quad(&self, dx: f64, dy: f64) -> f64 {
        self.xx * dx * dx + 2.0 * self.xy * dx * dy + self.yy * dy * dy
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Point,
    pub covariance: Cov2,
    precision: Cov2,
    log_norm: f64,
}

impl GaussianComponent {
    /// Fails unless the covariance is symmetric positive definite and
    /// `0 < weight <= 1`.
    pub fn new(weight: f64, mean: Point, covariance: Cov2) -> Result<Self> {
        if !(weight > 0.0 && weight <= 1.0 + 1e-12) {
            return Err(Error::Contract(format!("component weight {weight} not in (0, 1]")));
        }
        if !mean.x.is_finite() || !mean.y.is_finite() {
            return Err(Error::numerical("component mean is not finite", None));
        }
        let precision = covariance
            .inverse()
            .filter(|_| covariance.xx > 0.0 && covariance.yy > 0.0)
            .ok_or_else(|| Error::numerical("singular component covariance", None))?;
        Ok(Self {
            weight,
            mean,
            covariance,
            precision,
            log_norm: -(2.0 * PI).ln() - 0.5 * covariance.det().ln(),
        })
    }

    pub fn log_pdf(&self, x: Point) -> f64 {
        self.log_norm - 0.5 * self.precision.quad(x.x - self.mean.x, x.y - self.mean.y)
    }
}

/// Density `(2 pi)^-1 |S|^-1/2 exp(-1/2 (x - mu)^T S^-1 (x - mu))`.
pub fn gaussian_pdf(component: &GaussianComponent, x: Point) -> f64 {
    component.log_pdf(x).exp()
}

/// K weighted Gaussian components whose weights sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureFile", into = "MixtureFile")]
pub struct MixtureModel {
    components: Vec<GaussianComponent>,
    log_likelihood: f64,
}

#[derive(Serialize, Deserialize)]
struct MixtureFile {
    k: usize,
    weights: Vec<f64>,
    means: Vec<[f64; 2]>,
    covariances: Vec<[[f64; 2]; 2]>,
    log_likelihood: f64,
}

impl From<MixtureModel> for MixtureFile {
    fn from(m: MixtureModel) -> Self {
        MixtureFile {
            k: m.components.len(),
            weights: m.components.iter().map(|c| c.weight).collect(),
            means: m.components.iter().map(|c| [c.mean.x, c.mean.y]).collect(),
            covariances: m
                .components
                .iter()
                .map(|c| {
                    let s = c.covariance;
                    [[s.xx, s.xy], [s.xy, s.yy]]
                })
                .collect(),
            log_likelihood: m.log_likelihood,
        }
    }
}

impl TryFrom<MixtureFile> for MixtureModel {
    type Error = Error;

    fn try_from(f: MixtureFile) -> Result<Self> {
        if f.weights.len() != f.k || f.means.len() != f.k || f.covariances.len() != f.k {
            return Err(Error::Contract(format!(
                "mixture file declares k = {} but lists {} weights, {} means, {} covariances",
                f.k,
                f.weights.len(),
                f.means.len(),
                f.covariances.len()
            )));
        }
        let components = (0..f.k)
            .map(|j| {
                let [[xx, xy], [yx, yy]] = f.covariances[j];
                if (xy - yx).abs() > 1e-12 * (xx.abs() + yy.abs()).max(1.0) {
                    return Err(Error::Contract(format!("covariance {j} is not symmetric")));
                }
                GaussianComponent::new(
                    f.weights[j],
                    Point::new(f.means[j][0], f.means[j][1]),
                    Cov2::new(xx, xy, yy),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureModel::new(components, f.log_likelihood)
    }
}

impl MixtureModel {
    pub fn new(components: Vec<GaussianComponent>, log_likelihood: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Contract("mixture needs at least one component".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("mixture weights sum to {total}")));
        }
        Ok(Self {
            components,
            log_likelihood,
        })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Training log-likelihood of the data the model was fitted to.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Posterior component probabilities for `x`.
    pub fn responsibilities(&self, x: Point) -> Vec<f64> {
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.log_pdf(x))
            .collect();
        let lse = log_sum_exp(&logs);
        logs.into_iter().map(|l| (l - lse).exp()).collect()
    }

    /// Most responsible component for `x` (lowest index on ties).
    pub fn assign(&self, x: Point) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (j, c) in self.components.iter().enumerate() {
            let l = c.weight.ln() + c.log_pdf(x);
            if l > best.1 {
                best = (j, l);
            }
        }
        best.0
    }
}

/// `sum_k pi_k N(x | mu_k, S_k)`.
pub fn mixture_pdf(model: &MixtureModel, x: Point) -> f64 {
    model
        .components
        .iter()
        .map(|c| c.weight * gaussian_pdf(c, x))
        .sum()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmOptions {
    /// Stop once the absolute log-likelihood change falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Added to the covariance diagonal after every M-step; also the
    /// eigenvalue floor.
    pub reg: f64,
    /// Components whose responsibility mass drops below this are re-seeded.
    pub min_mass: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 200,
            reg: 1e-6,
            min_mass: 1e-8,
        }
    }
}

/// A fitted model plus its EM trace.
#[derive(Clone, Debug)]
pub struct FitReport {
    pub model: MixtureModel,
    /// Log-likelihood after the initial E-step and after every EM iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of empty-component re-seeds performed.
    pub rescues: usize,
    /// Largest per-point deviation of responsibility sums from 1 over all E-steps.
    pub max_responsibility_error: f64,
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Point>,
    covs: Vec<Cov2>,
}

impl Params {
    fn components(&self) -> Result<Vec<GaussianComponent>> {
        (0..self.weights.len())
            .map(|j| GaussianComponent::new(self.weights[j], self.means[j], self.covs[j]))
            .collect()
    }
}

fn global_variance(pts: &[Point]) -> f64 {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.x / n, a.1 + p.y / n));
    let (vx, vy) = pts.iter().fold((0.0, 0.0), |a, p| {
        (a.0 + (p.x - mx).powi(2) / n, a.1 + (p.y - my).powi(2) / n)
    });
    0.5 * (vx + vy)
}

/// k-means++ seeding: the first mean is a uniform draw, each later one is
/// drawn with probability proportional to its squared distance from the
/// closest mean so far.
fn kmeans_pp_seeds(pts: &[Point], k: usize, rng: &mut seed::Rng) -> Vec<Point> {
    let mut means = vec![pts[rng.random_range(0..pts.len())]];
    let mut d2: Vec<f64> = pts
        .iter()
        .map(|p| {
            let d = p.distance(means[0]);
            d * d
        })
        .collect();
    while means.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = pts.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..pts.len())
        };
        let m = pts[idx];
        means.push(m);
        for (p, d) in pts.iter().zip(d2.iter_mut()) {
            let dist = p.distance(m);
            *d = d.min(dist * dist);
        }
    }
    means
}

/// Fits a `k`-component mixture with EM; see [`fit_gmm_traced`].
pub fn fit_gmm(pc: &PointCloud, k: usize, seed: u64, opts: &EmOptions) -> Result<MixtureModel> {
    fit_gmm_traced(pc, k, seed, opts).map(|r| r.model)
}

/// Fits a `k`-component mixture with EM and returns the likelihood trace.
///
/// Means are seeded k-means++ style, weights start uniform and covariances
/// start isotropic at the cloud's global variance.
pub fn fit_gmm_traced(pc: &PointCloud, k: usize, seed: u64, opts: &EmOptions) -> Result<FitReport> {
    let pts = pc.points();
    let n = pts.len();
    if k == 0 {
        return Err(Error::Infeasible("mixture needs k >= 1".into()));
    }
    if n < k {
        return Err(Error::Infeasible(format!(
            "cannot fit {k} components to {n} points"
        )));
    }
    let mut rng = seed::rng(seed);
    let init_var = global_variance(pts) + opts.reg;
    let mut params = Params {
        weights: vec![1.0 / k as f64; k],
        means: kmeans_pp_seeds(pts, k, &mut rng),
        covs: vec![Cov2::isotropic(init_var); k],
    };

    let mut resp = vec![0.0; n * k];
    let mut point_ll = vec![0.0; n];
    let mut history = Vec::new();
    let mut rescues = 0;
    let mut max_resp_err: f64 = 0.0;
    let mut converged = false;
    let mut iterations = 0;

    let mut e_step = |params: &Params,
                      resp: &mut [f64],
                      point_ll: &mut [f64],
                      iteration: usize|
     -> Result<f64> {
        let comps = params
            .components()
            .map_err(|_| Error::numerical("EM produced a singular covariance", Some(iteration)))?;
        let log_w: Vec<f64> = comps.iter().map(|c| c.weight.ln()).collect();
        let mut total = 0.0;
        for (i, p) in pts.iter().enumerate() {
            let row = &mut resp[i * k..(i + 1) * k];
            for (j, c) in comps.iter().enumerate() {
                row[j] = log_w[j] + c.log_pdf(*p);
            }
            let lse = log_sum_exp(row);
            let mut sum = 0.0;
            for r in row.iter_mut() {
                *r = (*r - lse).exp();
                sum += *r;
            }
            max_resp_err = max_resp_err.max((sum - 1.0).abs());
            point_ll[i] = lse;
            total += lse;
        }
        if !total.is_finite() {
            return Err(Error::numerical("non-finite log-likelihood", Some(iteration)));
        }
        Ok(total)
    };

    let mut ll = e_step(&params, &mut resp, &mut point_ll, 0)?;
    history.push(ll);

    for iteration in 1..=opts.max_iter {
        // M-step
        let mut mass = vec![0.0; k];
        for i in 0..n {
            for j in 0..k {
                mass[j] += resp[i * k + j];
            }
        }
        for j in 0..k {
            if mass[j] < opts.min_mass {
                let worst = point_ll
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                params.means[j] = pts[worst];
                params.covs[j] = Cov2::isotropic(init_var);
                mass[j] = 1.0;
                // keep the re-seeded point from being picked twice
                point_ll[worst] = f64::INFINITY;
                rescues += 1;
                continue;
            }
            let (mut mx, mut my) = (0.0, 0.0);
            for (i, p) in pts.iter().enumerate() {
                let r = resp[i * k + j];
                mx += r * p.x;
                my += r * p.y;
            }
            mx /= mass[j];
            my /= mass[j];
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for (i, p) in pts.iter().enumerate() {
                let r = resp[i * k + j];
                let (dx, dy) = (p.x - mx, p.y - my);
                sxx += r * dx * dx;
                sxy += r * dx * dy;
                syy += r * dy * dy;
            }
            params.means[j] = Point::new(mx, my);
            params.covs[j] = Cov2::new(
                sxx / mass[j] + opts.reg,
                sxy / mass[j],
                syy / mass[j] + opts.reg,
            )
            .clamp_eigenvalues(opts.reg);
        }
        let total_mass: f64 = mass.iter().sum();
        for j in 0..k {
            params.weights[j] = mass[j] / total_mass;
        }
        let norm: f64 = params.weights.iter().sum();
        params.weights.iter_mut().for_each(|w| *w /= norm);

        let next = e_step(&params, &mut resp, &mut point_ll, iteration)?;
        history.push(next);
        iterations = iteration;
        let delta = next - ll;
        ll = next;
        if delta.abs() < opts.tol {
            converged = true;
            break;
        }
    }

    let model = MixtureModel::new(params.components()?, ll)?;
    Ok(FitReport {
        model,
        history,
        iterations,
        converged,
        rescues,
        max_responsibility_error: max_resp_err,
    })
}

/// Draws `n` points: a component is chosen with probability `pi_k`, then a
/// point is drawn from `N(mu_k, S_k)`.
pub fn sample_mixture(model: &MixtureModel, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::Contract("sample count must be >= 1".into()));
    }
    let mut rng = seed::rng(seed);
    let chol: Vec<(f64, f64, f64)> = model
        .components
        .iter()
        .map(|c| {
            let s = c.covariance;
            let l11 = s.xx.sqrt();
            let l21 = s.xy / l11;
            let l22 = (s.yy - l21 * l21).max(0.0).sqrt();
            (l11, l21, l22)
        })
        .collect();
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let mut u: f64 = rng.random();
        let mut j = model.components.len() - 1;
        for (idx, c) in model.components.iter().enumerate() {
            if u < c.weight {
                j = idx;
                break;
            }
            u -= c.weight;
        }
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let (l11, l21, l22) = chol[j];
        let m = model.components[j].mean;
        points.push(Point::new(m.x + l11 * z1, m.y + l21 * z1 + l22 * z2));
    }
    PointCloud::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn comp(w: f64, mx: f64, my: f64, s: Cov2) -> GaussianComponent {
        GaussianComponent::new(w, Point::new(mx, my), s).unwrap()
    }

    #[test]
    fn standard_normal_density_values() {
        let c = comp(1.0, 0.0, 0.0, Cov2::isotropic(1.0));
        assert!((gaussian_pdf(&c, Point::new(0.0, 0.0)) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!(
            (gaussian_pdf(&c, Point::new(1.0, 0.0)) - (-0.5f64).exp() / (2.0 * PI)).abs() < 1e-15
        );
        let wide = comp(1.0, 0.0, 0.0, Cov2::isotropic(4.0));
        assert!((gaussian_pdf(&wide, Point::new(0.0, 0.0)) - 1.0 / (8.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let err = GaussianComponent::new(1.0, Point::new(0.0, 0.0), Cov2::new(1.0, 1.0, 1.0));
        assert!(matches!(err, Err(Error::Numerical { .. })));
        assert!(GaussianComponent::new(0.0, Point::new(0.0, 0.0), Cov2::isotropic(1.0)).is_err());
    }

    #[test]
    fn mixture_pdf_degenerate_cases() {
        let c = comp(1.0, 1.0, 2.0, Cov2::new(2.0, 0.3, 1.0));
        let single = MixtureModel::new(vec![c], 0.0).unwrap();
        let x = Point::new(0.3, 1.7);
        assert_eq!(mixture_pdf(&single, x), gaussian_pdf(&c, x));

        let half = comp(0.5, 1.0, 2.0, Cov2::new(2.0, 0.3, 1.0));
        let twin = MixtureModel::new(vec![half, half], 0.0).unwrap();
        assert!((mixture_pdf(&twin, x) - gaussian_pdf(&c, x)).abs() < 1e-15);
    }

    #[test]
    fn mixture_pdf_matches_direct_sum() {
        let mut rng = seed::rng(11);
        for _ in 0..20 {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let mut comps = Vec::new();
            let mut params = Vec::new();
            for w in raw {
                let (mx, my) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
                let (a, b, rho) = (
                    rng.random_range(0.5..3.0f64),
                    rng.random_range(0.5..3.0f64),
                    rng.random_range(-0.8..0.8),
                );
                let cov = Cov2::new(a * a, rho * a * b, b * b);
                comps.push(comp(w / s, mx, my, cov));
                params.push((w / s, mx, my, cov));
            }
            let model = MixtureModel::new(comps, 0.0).unwrap();
            let x = Point::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
            // direct evaluation of the weighted density sum
            let oracle: f64 = params
                .iter()
                .map(|&(w, mx, my, c)| {
                    let det = c.xx * c.yy - c.xy * c.xy;
                    let (dx, dy) = (x.x - mx, x.y - my);
                    let q = (c.yy * dx * dx - 2.0 * c.xy * dx * dy + c.xx * dy * dy) / det;
                    w * (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
                })
                .sum();
            assert!((mixture_pdf(&model, x) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_pdf_integrates_to_one() {
        let model = MixtureModel::new(
            vec![
                comp(0.3, -2.0, 1.0, Cov2::new(1.0, 0.4, 2.0)),
                comp(0.7, 3.0, -1.0, Cov2::new(0.5, -0.1, 0.8)),
            ],
            0.0,
        )
        .unwrap();
        let h = 0.05;
        let mut total = 0.0;
        let mut x = -15.0;
        while x < 15.0 {
            let mut y = -15.0;
            while y < 15.0 {
                total += mixture_pdf(&model, Point::new(x + h / 2.0, y + h / 2.0)) * h * h;
                y += h;
            }
            x += h;
        }
        assert!((total - 1.0).abs() < 1e-2, "{total}");
    }

    #[test]
    fn single_component_is_closed_form() {
        let pts: Vec<Point> = (0..40)
            .map(|i| {
                let t = i as f64;
                Point::new(t.sin() * 3.0 + t * 0.1, (t * 0.7).cos() * 2.0)
            })
            .collect();
        let pc = PointCloud::new(pts.clone()).unwrap();
        let m = fit_gmm(&pc, 1, 3, &EmOptions::default()).unwrap();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / n;
        let sxx = pts.iter().map(|p| (p.x - mx).powi(2)).sum::<f64>() / n;
        let sxy = pts.iter().map(|p| (p.x - mx) * (p.y - my)).sum::<f64>() / n;
        let syy = pts.iter().map(|p| (p.y - my).powi(2)).sum::<f64>() / n;
        let c = m.components()[0];
        assert!((c.mean.x - mx).abs() < 1e-12 && (c.mean.y - my).abs() < 1e-12);
        assert!((c.covariance.xx - (sxx + 1e-6)).abs() < 1e-12);
        assert!((c.covariance.xy - sxy).abs() < 1e-12);
        assert!((c.covariance.yy - (syy + 1e-6)).abs() < 1e-12);
        assert_eq!(c.weight, 1.0);
    }

    #[test]
    fn too_few_points_is_infeasible() {
        let pc = PointCloud::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0)]).unwrap();
        assert!(matches!(
            fit_gmm(&pc, 3, 0, &EmOptions::default()),
            Err(Error::Infeasible(_))
        ));
        assert!(fit_gmm(&pc, 0, 0, &EmOptions::default()).is_err());
    }

    #[test]
    fn coincident_points_stay_regular() {
        let pc = PointCloud::new(vec![Point::new(5.0, 5.0); 10]).unwrap();
        let r = fit_gmm_traced(&pc, 3, 1, &EmOptions::default()).unwrap();
        for c in r.model.components() {
            assert!(c.covariance.eigenvalues().0 >= 1e-6 * (1.0 - 1e-9));
        }
    }

    #[test]
    fn two_blobs_are_recovered() {
        let mut rng = seed::rng(5);
        let centers = [Point::new(20.0, 30.0), Point::new(70.0, 60.0)];
        let mut pts = Vec::new();
        for c in centers {
            for _ in 0..50 {
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                pts.push(Point::new(c.x + 2.0 * dx, c.y + 2.0 * dy));
            }
        }
        let centroids: Vec<Point> = pts
            .chunks(50)
            .map(|ch| PointCloud::new(ch.to_vec()).unwrap().centroid())
            .collect();
        let m = fit_gmm(&PointCloud::new(pts).unwrap(), 2, 9, &EmOptions::default()).unwrap();
        for c in centroids {
            let best = m
                .components()
                .iter()
                .map(|comp| comp.mean.distance(c))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.5, "{best}");
        }
    }

    #[test]
    fn rescue_reseeds_empty_component() {
        // a far-away seed starves once the weights renormalize
        let mut pts = vec![Point::new(0.0, 0.0); 1];
        for i in 0..30 {
            pts.push(Point::new(100.0 + (i % 5) as f64, 100.0 + (i / 5) as f64));
        }
        let pc = PointCloud::new(pts).unwrap();
        let opts = EmOptions {
            min_mass: 2.0,
            max_iter: 3,
            ..EmOptions::default()
        };
        let r = fit_gmm_traced(&pc, 3, 0, &opts).unwrap();
        assert!(r.rescues > 0);
        let total: f64 = r.model.components().iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sampling_is_deterministic_and_consistent() {
        let sharp = MixtureModel::new(
            vec![comp(1.0, 10.0, 10.0, Cov2::isotropic(1e-6))],
            0.0,
        )
        .unwrap();
        let pts = sample_mixture(&sharp, 5, 1).unwrap();
        assert_eq!(pts.len(), 5);
        assert!(pts.points().iter().all(|p| p.distance(Point::new(10.0, 10.0)) < 0.01));

        let std = MixtureModel::new(vec![comp(1.0, 0.0, 0.0, Cov2::isotropic(1.0))], 0.0).unwrap();
        let a = sample_mixture(&std, 10_000, 42).unwrap();
        assert_eq!(a, sample_mixture(&std, 10_000, 42).unwrap());
        let n = a.len() as f64;
        let c = a.centroid();
        assert!(c.x.abs() < 0.05 && c.y.abs() < 0.05);
        let sxx = a.points().iter().map(|p| (p.x - c.x).powi(2)).sum::<f64>() / n;
        let sxy = a.points().iter().map(|p| (p.x - c.x) * (p.y - c.y)).sum::<f64>() / n;
        let syy = a.points().iter().map(|p| (p.y - c.y).powi(2)).sum::<f64>() / n;
        assert!((sxx - 1.0).abs() < 0.1 && sxy.abs() < 0.1 && (syy - 1.0).abs() < 0.1);
        assert!(sample_mixture(&std, 0, 0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = MixtureModel::new(
            vec![
                comp(0.25, 1.0, 2.0, Cov2::new(2.0, 0.5, 1.0)),
                comp(0.75, -3.0, 0.5, Cov2::new(0.3, 0.0, 0.9)),
            ],
            -12.5,
        )
        .unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"weights\""));
        let back: MixtureModel = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
        let bad = json.replace("\"k\":2", "\"k\":3");
        assert!(serde_json::from_str::<MixtureModel>(&bad).is_err());
    }

    #[test]
    fn eigen_clamp_enforces_floor() {
        let c = Cov2::new(4.0, 2.0, 1.0); // singular
        let f = c.clamp_eigenvalues(0.5);
        assert!(f.eigenvalues().0 >= 0.5 - 1e-12);
        assert!((f.eigenvalues().1 - 5.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn em_is_monotone_and_normalized(
            pts in prop::collection::vec((0.0..100.0f64, 0.0..100.0f64), 20..120),
            k in 1usize..6,
            seed in any::<u64>(),
        ) {
            let pc = PointCloud::new(pts.into_iter().map(|(x, y)| Point::new(x, y)).collect()).unwrap();
            let r = fit_gmm_traced(&pc, k, seed, &EmOptions::default()).unwrap();
            for w in r.history.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
            }
            let total: f64 = r.model.components().iter().map(|c| c.weight).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(r.max_responsibility_error < 1e-12);
            for c in r.model.components() {
                prop_assert!(c.covariance.eigenvalues().0 >= 1e-6 * (1.0 - 1e-9));
            }
        }
    }
}
