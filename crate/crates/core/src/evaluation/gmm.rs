//! Full-covariance Gaussian mixtures fit by expectation-maximization.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REGULARIZATION: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 100;
pub const KMEANS_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major `d × d`.
    pub covariance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub dim: usize,
    pub components: Vec<Component>,
    /// Log-likelihood of the data before each M-step, then after the last one.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

struct Gaussian {
    log_weight: f64,
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl Gaussian {
    fn new(weight: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len() as f64;
        let chol = Cholesky::new(cov).ok_or_else(|| Error::Degenerate("covariance is not positive definite".into()))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self { log_weight: weight.ln(), mean, chol, log_norm: -0.5 * (d * (2.0 * PI).ln() + log_det) })
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let diff = x - &self.mean;
        let y = self.chol.l().solve_lower_triangular(&diff).expect("triangular factor is invertible");
        self.log_norm - 0.5 * y.norm_squared()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn to_vectors(points: &[Vec<f64>]) -> Result<(usize, Vec<DVector<f64>>)> {
    let dim = points.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(Error::Validation("points must have at least one coordinate".into()));
    }
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::Shape(format!("point of dimension {} among dimension {dim}", p.len())));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Validation("points contain non-finite values".into()));
    }
    Ok((dim, points.iter().map(|p| DVector::from_column_slice(p)).collect()))
}

/// k-means++ seeding: first center uniform, the rest proportional to squared distance.
fn kmeans_pp(xs: &[DVector<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let mut centers = vec![xs[rng.gen_range(0..xs.len())].clone()];
    let mut d2: Vec<f64> = xs.iter().map(|x| (x - &centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = xs.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.gen_range(0..xs.len())
        };
        centers.push(xs[next].clone());
        for (d, x) in d2.iter_mut().zip(xs) {
            *d = d.min((x - &centers[centers.len() - 1]).norm_squared());
        }
    }
    centers
}

fn nearest(x: &DVector<f64>, centers: &[DVector<f64>]) -> usize {
    (0..centers.len())
        .min_by(|&a, &b| (x - &centers[a]).norm_squared().total_cmp(&(x - &centers[b]).norm_squared()))
        .expect("at least one center")
}

/// Lloyd iterations from a k-means++ seeding; returns centers and assignments.
fn kmeans(xs: &[DVector<f64>], k: usize, rng: &mut ChaCha8Rng) -> (Vec<DVector<f64>>, Vec<usize>) {
    let mut centers = kmeans_pp(xs, k, rng);
    let mut labels: Vec<usize> = xs.iter().map(|x| nearest(x, &centers)).collect();
    for _ in 0..MAX_ITERATIONS {
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&DVector<f64>> = xs.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(x, _)| x).collect();
            if !members.is_empty() {
                *center = members.iter().fold(DVector::zeros(center.len()), |acc, x| acc + *x) / members.len() as f64;
            }
        }
        let next: Vec<usize> = xs.iter().map(|x| nearest(x, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    (centers, labels)
}

fn inertia(xs: &[DVector<f64>], centers: &[DVector<f64>], labels: &[usize]) -> f64 {
    xs.iter().zip(labels).map(|(x, &l)| (x - &centers[l]).norm_squared()).sum()
}

fn weighted_moments(xs: &[DVector<f64>], resp: &[f64], total: f64, dim: usize) -> (DVector<f64>, DMatrix<f64>) {
    let mut mean = DVector::zeros(dim);
    for (x, r) in xs.iter().zip(resp) {
        mean += x * *r;
    }
    mean /= total;
    let mut cov = DMatrix::zeros(dim, dim);
    for (x, r) in xs.iter().zip(resp) {
        let diff = x - &mean;
        cov += &diff * diff.transpose() * *r;
    }
    cov /= total;
    for i in 0..dim {
        cov[(i, i)] += REGULARIZATION;
    }
    (mean, cov)
}

/// Fit `k` components to `points`.
pub fn gmm_fit(points: &[Vec<f64>], k: usize, seed: u64) -> Result<GmmModel> {
    if k == 0 {
        return Err(Error::Validation("need at least one component".into()));
    }
    if points.len() < k {
        return Err(Error::Validation(format!("{} points cannot support {k} components", points.len())));
    }
    let (dim, xs) = to_vectors(points)?;
    let n = xs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // initial parameters from the best of several seeded k-means runs
    let (centers, labels) = (0..KMEANS_RESTARTS)
        .map(|_| kmeans(&xs, k, &mut rng))
        .min_by(|a, b| inertia(&xs, &a.0, &a.1).total_cmp(&inertia(&xs, &b.0, &b.1)))
        .expect("at least one restart");
    let all = vec![1.0; n];
    let (_, global_cov) = weighted_moments(&xs, &all, n as f64, dim);
    let mut hard = vec![vec![0.0; n]; k];
    for (i, &c) in labels.iter().enumerate() {
        hard[c][i] = 1.0;
    }
    let mut gaussians = (0..k)
        .map(|c| {
            let count: f64 = hard[c].iter().sum();
            let cov = if count >= 2.0 { weighted_moments(&xs, &hard[c], count, dim).1 } else { global_cov.clone() };
            Gaussian::new(count.max(1.0) / (n as f64 + (k as f64)), centers[c].clone(), cov)
        })
        .collect::<Result<Vec<_>>>()?;
    normalize_weights(&mut gaussians);

    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut resp = vec![vec![0.0; n]; k];
    for _ in 0..MAX_ITERATIONS {
        let ll = e_step(&gaussians, &xs, &mut resp);
        if let Some(prev) = history.last() {
            if (ll - prev).abs() < TOLERANCE {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        gaussians = m_step(&gaussians, &xs, &resp, dim)?;
    }
    if !converged {
        history.push(e_step(&gaussians, &xs, &mut resp));
    }

    Ok(GmmModel {
        dim,
        components: gaussians
            .iter()
            .map(|g| {
                let l = g.chol.l();
                let cov = &l * l.transpose();
                Component {
                    weight: g.log_weight.exp(),
                    mean: g.mean.iter().copied().collect(),
                    covariance: cov.transpose().iter().copied().collect(),
                }
            })
            .collect(),
        log_likelihood: history,
        converged,
    })
}

fn normalize_weights(gs: &mut [Gaussian]) {
    let total = log_sum_exp(&gs.iter().map(|g| g.log_weight).collect::<Vec<_>>());
    for g in gs {
        g.log_weight -= total;
    }
}

/// Fill responsibilities and return the total log-likelihood.
fn e_step(gs: &[Gaussian], xs: &[DVector<f64>], resp: &mut [Vec<f64>]) -> f64 {
    let mut ll = 0.0;
    let mut joint = vec![0.0; gs.len()];
    for (i, x) in xs.iter().enumerate() {
        for (j, g) in joint.iter_mut().zip(gs) {
            *j = g.log_weight + g.log_density(x);
        }
        let lse = log_sum_exp(&joint);
        ll += lse;
        for (c, j) in joint.iter().enumerate() {
            resp[c][i] = (j - lse).exp();
        }
    }
    ll
}

fn m_step(prev: &[Gaussian], xs: &[DVector<f64>], resp: &[Vec<f64>], dim: usize) -> Result<Vec<Gaussian>> {
    let n = xs.len() as f64;
    let mut out = Vec::with_capacity(prev.len());
    for (c, r) in resp.iter().enumerate() {
        let total: f64 = r.iter().sum();
        if total < 1e-10 {
            // empty component keeps its shape with negligible weight
            let l = prev[c].chol.l();
            out.push(Gaussian::new(1e-300_f64.max(total / n), prev[c].mean.clone(), &l * l.transpose())?);
            continue;
        }
        let (mean, cov) = weighted_moments(xs, r, total, dim);
        out.push(Gaussian::new(total / n, mean, cov)?);
    }
    Ok(out)
}

impl GmmModel {
    fn gaussians(&self) -> Result<Vec<Gaussian>> {
        self.components
            .iter()
            .map(|c| {
                Gaussian::new(
                    c.weight,
                    DVector::from_column_slice(&c.mean),
                    DMatrix::from_row_slice(self.dim, self.dim, &c.covariance),
                )
            })
            .collect()
    }

    /// Index of the most responsible component for each point.
    pub fn predict(&self, points: &[Vec<f64>]) -> Result<Vec<usize>> {
        let (dim, xs) = to_vectors(points)?;
        if dim != self.dim {
            return Err(Error::Shape(format!("model has dimension {}, points {dim}", self.dim)));
        }
        let gs = self.gaussians()?;
        Ok(xs
            .iter()
            .map(|x| {
                (0..gs.len())
                    .map(|c| gs[c].log_weight + gs[c].log_density(x))
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(c, _)| c)
                    .expect("at least one component")
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[[f64; 4]], per: usize, sd: f64, seed: u64) -> Vec<Vec<f64>> {
        let noise = Normal::new(0.0, sd).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for _ in 0..per {
            for c in centers {
                out.push(c.iter().map(|m| m + noise.sample(&mut rng)).collect());
            }
        }
        out
    }

    #[test]
    fn separated_blobs_recover_centers() {
        let centers = [[0.8, 0.8, -0.5, 0.1], [-0.7, -0.6, 0.4, -0.2]];
        let pts = blobs(&centers, 150, 0.05, 4);
        let model = gmm_fit(&pts, 2, 1).unwrap();
        let total: f64 = model.components.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
        for center in &centers {
            let best = model
                .components
                .iter()
                .map(|c| c.mean.iter().zip(center).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.05, "{best}");
        }
        let labels = model.predict(&pts).unwrap();
        assert!(labels.chunks(2).all(|p| p[0] != p[1]));
    }

    #[test]
    fn single_component_is_sample_mean() {
        let pts = blobs(&[[0.1, 0.2, 0.3, 0.4]], 40, 0.3, 2);
        let model = gmm_fit(&pts, 1, 0).unwrap();
        assert!((model.components[0].weight - 1.0).abs() < 1e-12);
        for d in 0..4 {
            let mean = pts.iter().map(|p| p[d]).sum::<f64>() / pts.len() as f64;
            assert!((model.components[0].mean[d] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn log_likelihood_is_monotone() {
        let pts = blobs(&[[0.0, 0.0, 0.0, 0.0], [0.3, 0.1, 0.0, 0.2], [-0.2, 0.4, 0.1, 0.0]], 60, 0.2, 8);
        for seed in 0..5 {
            let model = gmm_fit(&pts, 3, seed).unwrap();
            for w in model.log_likelihood.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "{w:?}");
            }
        }
    }

    #[test]
    fn covariance_floor() {
        // all points identical: covariance collapses onto the floor
        let pts = vec![vec![0.5, -0.5, 0.25, 0.0]; 10];
        let model = gmm_fit(&pts, 2, 3).unwrap();
        for c in &model.components {
            let cov = DMatrix::from_row_slice(4, 4, &c.covariance);
            let eig = cov.symmetric_eigenvalues();
            assert!(eig.iter().all(|&e| e >= REGULARIZATION * (1.0 - 1e-6)), "{eig}");
        }
    }

    #[test]
    fn too_few_points() {
        let pts = vec![vec![0.0; 4]; 2];
        assert!(matches!(gmm_fit(&pts, 3, 0), Err(Error::Validation(_))));
        assert!(gmm_fit(&[vec![0.0, 1.0], vec![1.0]], 1, 0).is_err());
    }
}
