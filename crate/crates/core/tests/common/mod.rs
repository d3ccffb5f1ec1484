#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use runoff_lgm::geometry::{Catchment, FemMatrices, GridLattice, Point2D, Polygon, TriangleMesh};
use runoff_lgm::inference::MarginalModel;
use runoff_lgm::model::{Hyperparameters, ModelGeometry, ObservationSet, Site, Support};
use runoff_lgm::priors::{hyperprior_logpdf, PriorConfig};

/// Dense `τ²(κ⁴C + 2κ²G + GC⁻¹G)` with `κ = √8/ρ`, `τ = 1/(σκ√(4π))`.
pub fn dense_field_precision(fem: &FemMatrices, rho: f64, sigma: f64) -> DMatrix<f64> {
    let kappa = 8f64.sqrt() / rho;
    let tau = 1.0 / (sigma * kappa * (4.0 * PI).sqrt());
    let c = DMatrix::from_diagonal(&DVector::from_column_slice(&fem.c));
    let c_inv = DMatrix::from_diagonal(&DVector::from_iterator(fem.c.len(), fem.c.iter().map(|v| 1.0 / v)));
    let g = fem.g.to_dense();
    (c * kappa.powi(4) + &g * (2.0 * kappa * kappa) + &g * c_inv * &g) * (tau * tau)
}

pub fn dense_inverse(q: &DMatrix<f64>) -> DMatrix<f64> {
    q.clone().cholesky().expect("precision is SPD").inverse()
}

/// Explicit-covariance form of the model: prior mean, prior covariance,
/// design, noise variances and data.
pub struct DenseModel {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub noise: DVector<f64>,
    pub y: DVector<f64>,
}

pub fn dense_model(geometry: &ModelGeometry, obs: &ObservationSet, theta: &Hyperparameters, priors: &PriorConfig) -> DenseModel {
    let m = geometry.m();
    let r = obs.n_years();
    let dim = 1 + m + r + r * m;
    // [β_c, c, β_1..β_r, x_1..x_r]
    let (i_bc, i_c) = (0, 1);
    let i_b = |j: usize| 1 + m + j;
    let i_x = |j: usize| 1 + m + r + j * m;
    let v = theta.natural();
    let cov_c = dense_inverse(&dense_field_precision(geometry.fem(), v[0], v[1]));
    let cov_x = dense_inverse(&dense_field_precision(geometry.fem(), v[2], v[3]));
    let mut sigma = DMatrix::zeros(dim, dim);
    sigma[(i_bc, i_bc)] = priors.beta_c.sd * priors.beta_c.sd;
    sigma.view_mut((i_c, i_c), (m, m)).copy_from(&cov_c);
    for j in 0..r {
        sigma[(i_b(j), i_b(j))] = 1.0 / v[4];
        sigma.view_mut((i_x(j), i_x(j)), (m, m)).copy_from(&cov_x);
    }
    let mut mu = DVector::zeros(dim);
    mu[i_bc] = priors.beta_c.mean;
    let n = obs.len();
    let mut design = DMatrix::zeros(n, dim);
    let mut noise = DVector::zeros(n);
    let mut y = DVector::zeros(n);
    for (k, o) in obs.observations().iter().enumerate() {
        design[(k, i_bc)] = 1.0;
        design[(k, i_b(o.year))] = 1.0;
        for &(vtx, w) in geometry.row(o.support).entries() {
            design[(k, i_c + vtx)] += w;
            design[(k, i_x(o.year) + vtx)] += w;
        }
        noise[k] = o.scale / if o.support.is_point() { v[5] } else { v[6] };
        y[k] = o.value;
    }
    DenseModel { mu, sigma, m: design, noise, y }
}

impl DenseModel {
    fn s(&self) -> DMatrix<f64> {
        &self.m * &self.sigma * self.m.transpose() + DMatrix::from_diagonal(&self.noise)
    }

    pub fn log_likelihood(&self) -> f64 {
        let s = self.s();
        let n = self.y.len() as f64;
        let chol = s.cholesky().expect("marginal covariance is SPD");
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let r = &self.y - &self.m * &self.mu;
        let quad = r.dot(&chol.solve(&r));
        -0.5 * (n * (2.0 * PI).ln() + log_det + quad)
    }

    /// Posterior mean and sd of `aᵀ latent`.
    pub fn functional(&self, a: &[f64]) -> (f64, f64) {
        let a = DVector::from_column_slice(a);
        let s = self.s();
        let chol = s.cholesky().expect("SPD");
        let r = &self.y - &self.m * &self.mu;
        let sa = &self.sigma * &a;
        let u = &self.m * &sa;
        let mean = a.dot(&self.mu) + u.dot(&chol.solve(&r));
        let var = a.dot(&sa) - u.dot(&chol.solve(&u));
        (mean, var.max(0.0).sqrt())
    }

    pub fn posterior_mean(&self) -> DVector<f64> {
        let chol = self.s().cholesky().expect("SPD");
        let r = &self.y - &self.m * &self.mu;
        &self.mu + &self.sigma * self.m.transpose() * chol.solve(&r)
    }
}

pub fn dense_log_marginal_posterior(
    geometry: &ModelGeometry,
    obs: &ObservationSet,
    theta: &Hyperparameters,
    priors: &PriorConfig,
) -> f64 {
    dense_model(geometry, obs, theta, priors).log_likelihood() + hyperprior_logpdf(theta, priors).unwrap()
}

/// A small random model: regular mesh of at most 49 vertices, 1–3 sites,
/// 1–3 catchments (possibly nested), 1–3 years and random θ.
pub struct RandomCase {
    pub geometry: Arc<ModelGeometry>,
    pub obs: ObservationSet,
    pub theta: Hyperparameters,
}

pub fn random_case(seed: u64) -> RandomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = rng.random_range(3..=6);
    let ny = rng.random_range(3..=6);
    let h = rng.random_range(4.0..8.0);
    let mesh = TriangleMesh::regular_grid(Point2D::new(0.0, 0.0), nx, ny, h).unwrap();
    let (w, hgt) = (nx as f64 * h, ny as f64 * h);
    let n_sites = rng.random_range(1..=3);
    let sites: Vec<Site> = (0..n_sites)
        .map(|i| Site {
            id: format!("s{i}"),
            location: Point2D::new(rng.random_range(0.2..w - 0.2), rng.random_range(0.2..hgt - 0.2)),
        })
        .collect();
    let n_catch = rng.random_range(1..=3);
    let mut catchments = Vec::new();
    let mut outer: Option<(f64, f64, f64, f64)> = None;
    for k in 0..n_catch {
        let nested = k > 0 && rng.random_bool(0.5);
        let (x0, y0, x1, y1) = match (nested, outer) {
            (true, Some((a, b, c, d))) => {
                let x0 = rng.random_range(a..(a + c) / 2.0);
                let y0 = rng.random_range(b..(b + d) / 2.0);
                (x0, y0, rng.random_range(x0 + 1.0..c.max(x0 + 1.01)), rng.random_range(y0 + 1.0..d.max(y0 + 1.01)))
            }
            _ => {
                let x0 = rng.random_range(0.1..w / 2.0);
                let y0 = rng.random_range(0.1..hgt / 2.0);
                (x0, y0, rng.random_range(x0 + 2.0..w - 0.1), rng.random_range(y0 + 2.0..hgt - 0.1))
            }
        };
        let (x1, y1) = (x1.min(w - 0.1), y1.min(hgt - 0.1));
        if let Ok(c) = Catchment::from_polygons(format!("k{k}"), &[Polygon::rectangle(x0, y0, x1, y1)], GridLattice::default()) {
            if outer.is_none() {
                outer = Some((x0, y0, x1, y1));
            }
            catchments.push(c);
        }
    }
    let geometry = ModelGeometry::new(mesh, sites, catchments).unwrap();
    let r = rng.random_range(1..=3);
    let mut obs = ObservationSet::new(r);
    for j in 0..r {
        for s in 0..geometry.sites().len() {
            if rng.random_bool(0.8) {
                obs.push_point(s, j, rng.random_range(0.5..3.0), rng.random_range(0.005..0.05)).unwrap();
            }
        }
        for k in 0..geometry.catchments().len() {
            if rng.random_bool(0.8) {
                obs.push_areal(k, j, rng.random_range(0.5..3.0), rng.random_range(0.0005..0.01)).unwrap();
            }
        }
    }
    if obs.is_empty() {
        obs.push_point(0, 0, 1.7, 0.02).unwrap();
    }
    let theta = Hyperparameters::from_natural(
        rng.random_range(5.0..60.0),
        rng.random_range(0.2..1.5),
        rng.random_range(5.0..60.0),
        rng.random_range(0.1..0.8),
        rng.random_range(1.0..20.0),
        rng.random_range(0.3..3.0),
        rng.random_range(0.3..3.0),
    )
    .unwrap();
    RandomCase { geometry, obs, theta }
}

impl RandomCase {
    pub fn model(&self) -> Arc<MarginalModel> {
        Arc::new(MarginalModel::new(Arc::clone(&self.geometry), self.obs.clone(), PriorConfig::default()).unwrap())
    }

    /// Random functional touching every latent block.
    pub fn functional(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.geometry.m();
        let r = self.obs.n_years();
        let dim = 1 + m + r + r * m;
        (0..dim).map(|_| if rng.random_bool(0.3) { rng.random_range(-1.0..1.0) } else { 0.0 }).collect()
    }
}

pub fn support_values(geometry: &ModelGeometry) -> Vec<Support> {
    (0..geometry.sites().len()).map(Support::Site).chain((0..geometry.catchments().len()).map(Support::Catchment)).collect()
}

/// Composite Simpson on `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}
