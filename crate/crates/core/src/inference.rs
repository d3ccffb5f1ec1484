//! Exact marginal likelihood of the hyperparameters, MAP estimation and the
//! Gaussian conditional posterior of the latent vector.
//!
//! Given θ the model is jointly Gaussian. The marginal density of the data is
//! evaluated through the observation covariance
//! `S = M Q_prior⁻¹ Mᵀ + D⁻¹`, which never needs more than the two sparse
//! field factorizations (one symbolic analysis shared by both fields and all
//! years) and small dense matrices over the distinct observation supports.
//! `S` is handled through its year-block structure
//! `S = B + Z G Zᵀ`, where `B` is block diagonal over years (year effect,
//! annual field, noise), `Z` maps observations to supports and `G` is the
//! support covariance of `β_c + c`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{noise_precision, GaussianSystem, Hyperparameters, LatentLayout, ModelGeometry, ObservationSet, Support};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::priors::{hyperprior_logpdf, PriorConfig};
use crate::sparse::{CholeskyFactor, CsrMatrix};

pub const Z975: f64 = 1.959963984540054;

/// Optimizer box in log space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bounds {
    pub rho: (f64, f64),
    pub sigma: (f64, f64),
    pub tau: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Self { rho: (1.0, 1000.0), sigma: (0.01, 10.0), tau: (1e-4, 1e6) }
    }
}

impl Bounds {
    pub fn log_lower(&self) -> Vec<f64> {
        let (r, s, t) = (self.rho.0.ln(), self.sigma.0.ln(), self.tau.0.ln());
        vec![r, s, r, s, t, t, t]
    }

    pub fn log_upper(&self) -> Vec<f64> {
        let (r, s, t) = (self.rho.1.ln(), self.sigma.1.ln(), self.tau.1.ln());
        vec![r, s, r, s, t, t, t]
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub initial_step: f64,
    pub bounds: Bounds,
    pub quantiles: bool,
    /// Finite-difference step (log space) for the Laplace Hessian.
    pub hessian_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 2000, tol: 1e-4, initial_step: 0.5, bounds: Bounds::default(), quantiles: true, hessian_step: 1e-3 }
    }
}

/// θ-independent part of the marginal model: observations grouped by year
/// and mapped to their distinct supports.
#[derive(Debug)]
pub struct MarginalModel {
    geometry: Arc<ModelGeometry>,
    priors: PriorConfig,
    obs: ObservationSet,
    supports: Vec<Support>,
    slot: Vec<usize>,
    by_year: Vec<Vec<usize>>,
    resid: Vec<f64>,
}

impl MarginalModel {
    pub fn new(geometry: Arc<ModelGeometry>, obs: ObservationSet, priors: PriorConfig) -> Result<Self> {
        priors.validate()?;
        if obs.n_years() == 0 {
            return Err(Error::InvalidInput("at least one year is required".into()));
        }
        let mut index: BTreeMap<Support, usize> = BTreeMap::new();
        let mut supports = Vec::new();
        let mut slot = Vec::with_capacity(obs.len());
        let mut by_year = vec![Vec::new(); obs.n_years()];
        for (i, o) in obs.observations().iter().enumerate() {
            geometry.check_support(o.support)?;
            let s = *index.entry(o.support).or_insert_with(|| {
                supports.push(o.support);
                supports.len() - 1
            });
            slot.push(s);
            by_year[o.year].push(i);
        }
        let resid = obs.observations().iter().map(|o| o.value - priors.beta_c.mean).collect();
        Ok(Self { geometry, priors, obs, supports, slot, by_year, resid })
    }

    pub fn geometry(&self) -> &Arc<ModelGeometry> {
        &self.geometry
    }

    pub fn priors(&self) -> &PriorConfig {
        &self.priors
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.obs
    }

    pub fn layout(&self) -> LatentLayout {
        LatentLayout::new(self.geometry.m(), self.obs.n_years())
    }

    /// Deterministic data-driven starting point for the optimizer.
    pub fn default_start(&self) -> Hyperparameters {
        let hull = self.geometry.mesh().data_hull();
        let mut diam: f64 = 0.0;
        for a in hull {
            for b in hull {
                diam = diam.max(a.dist(b));
            }
        }
        let vals: Vec<f64> = self.obs.observations().iter().map(|o| o.value).collect();
        let n = vals.len().max(1) as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).max(1e-4);
        let sd = (0.5 * var).sqrt().clamp(0.02, 5.0);
        let rho = (0.3 * diam).clamp(2.0, 500.0);
        Hyperparameters::from_natural(rho, sd, rho, sd, 1.0 / (0.25 * var).max(1e-3), 1.0, 1.0).expect("positive start values")
    }

    /// Covariance of the two spatial fields at θ restricted to the supports.
    fn field_state(&self, theta: &Hyperparameters) -> Result<ThetaState> {
        let template = self.geometry.template();
        let fc = template.factor(&theta.climate())?;
        let fx = template.factor(&theta.annual())?;
        let m = self.geometry.m();
        let ns = self.supports.len();
        let mut wc = DMatrix::zeros(m, ns);
        let mut wx = DMatrix::zeros(m, ns);
        for (k, s) in self.supports.iter().enumerate() {
            let dense = self.geometry.row(*s).to_dense(m);
            wc.set_column(k, &DVector::from_vec(fc.whiten(&dense)));
            wx.set_column(k, &DVector::from_vec(fx.whiten(&dense)));
        }
        let sigma_c = wc.tr_mul(&wc);
        let sigma_x = wx.tr_mul(&wx);
        let cap = Capacitance::new(self, theta, &sigma_c, &sigma_x)?;
        Ok(ThetaState { theta: *theta, fc, fx, cap })
    }

    /// `log p(y | θ)`.
    pub fn log_likelihood(&self, theta: &Hyperparameters) -> Result<f64> {
        let st = self.field_state(theta)?;
        Ok(st.cap.log_density(&self.resid))
    }

    /// Unnormalized `log π(θ | y)`; `−∞` when the system cannot be factorized.
    pub fn log_marginal_posterior(&self, theta: &Hyperparameters) -> f64 {
        match self.try_log_marginal_posterior(theta) {
            Ok(v) => v,
            Err(e) => {
                log::debug!("log marginal posterior failed at {theta}: {e}");
                f64::NEG_INFINITY
            }
        }
    }

    pub fn try_log_marginal_posterior(&self, theta: &Hyperparameters) -> Result<f64> {
        Ok(hyperprior_logpdf(theta, &self.priors)? + self.log_likelihood(theta)?)
    }

    /// Gaussian conditional posterior of the latent vector at fixed θ.
    pub fn condition(self: &Arc<Self>, theta: &Hyperparameters) -> Result<LatentFit> {
        let state = self.field_state(theta)?;
        let log_posterior = hyperprior_logpdf(theta, &self.priors)? + state.cap.log_density(&self.resid);
        let w = state.cap.solve(&self.resid);
        let layout = self.layout();
        let mut mt_w = vec![0.0; layout.dim()];
        self.add_design_transpose(&w, &mut mt_w);
        let mut mu_post = self.apply_prior_covariance(&state, &mt_w);
        mu_post[layout.beta_c()] += self.priors.beta_c.mean;
        Ok(LatentFit {
            model: Arc::clone(self),
            theta_map: *theta,
            log_posterior,
            converged: true,
            iterations: 0,
            evaluations: 1,
            trace: Vec::new(),
            quantiles: None,
            state,
            mu_post,
        })
    }

    /// `out += Mᵀ w`.
    fn add_design_transpose(&self, w: &[f64], out: &mut [f64]) {
        let layout = self.layout();
        let (c0, m) = (layout.climate().start, layout.m);
        for (i, o) in self.obs.observations().iter().enumerate() {
            out[layout.beta_c()] += w[i];
            out[layout.beta(o.year)] += w[i];
            let x0 = layout.annual(o.year).start;
            for &(v, p) in self.geometry.row(o.support).entries() {
                debug_assert!(v < m);
                out[c0 + v] += p * w[i];
                out[x0 + v] += p * w[i];
            }
        }
    }

    /// `M v`.
    fn design_apply(&self, v: &[f64]) -> Vec<f64> {
        let layout = self.layout();
        let c0 = layout.climate().start;
        self.obs
            .observations()
            .iter()
            .map(|o| {
                let x0 = layout.annual(o.year).start;
                let field: f64 = self.geometry.row(o.support).entries().iter().map(|&(k, p)| p * (v[c0 + k] + v[x0 + k])).sum();
                v[layout.beta_c()] + v[layout.beta(o.year)] + field
            })
            .collect()
    }

    /// `Q_prior⁻¹ a`, skipping zero blocks.
    fn apply_prior_covariance(&self, st: &ThetaState, a: &[f64]) -> Vec<f64> {
        let layout = self.layout();
        let mut out = vec![0.0; a.len()];
        let vb = self.priors.beta_c.sd * self.priors.beta_c.sd;
        out[layout.beta_c()] = vb * a[layout.beta_c()];
        let solve_block = |f: &CholeskyFactor, range: std::ops::Range<usize>, out: &mut [f64]| {
            let block = &a[range.clone()];
            if block.iter().any(|v| *v != 0.0) {
                out[range].copy_from_slice(&f.solve(block));
            }
        };
        solve_block(&st.fc, layout.climate(), &mut out);
        let tb = st.theta.tau_beta();
        for j in 0..layout.r {
            out[layout.beta(j)] = a[layout.beta(j)] / tb;
            solve_block(&st.fx, layout.annual(j), &mut out);
        }
        out
    }
}

/// Factorizations and the observation-space structure at one θ.
#[derive(Debug)]
struct ThetaState {
    theta: Hyperparameters,
    fc: CholeskyFactor,
    fx: CholeskyFactor,
    cap: Capacitance,
}

#[derive(Debug)]
struct YearBlock {
    idx: Vec<usize>,
    chol: Cholesky<f64, Dyn>,
}

/// `S = B + Z G Zᵀ` with the Woodbury pieces precomputed.
#[derive(Debug)]
struct Capacitance {
    n: usize,
    slot: Vec<usize>,
    years: Vec<YearBlock>,
    g: DMatrix<f64>,
    inner: LU<f64, Dyn, Dyn>,
    log_det: f64,
}

impl Capacitance {
    fn new(model: &MarginalModel, theta: &Hyperparameters, sigma_c: &DMatrix<f64>, sigma_x: &DMatrix<f64>) -> Result<Self> {
        let ns = model.supports.len();
        let n = model.obs.len();
        let vb = model.priors.beta_c.sd * model.priors.beta_c.sd;
        let g = sigma_c.map(|v| v + vb);
        let tb_inv = 1.0 / theta.tau_beta();
        let obs = model.obs.observations();
        let mut years = Vec::new();
        let mut k_mat = DMatrix::<f64>::zeros(ns, ns);
        let mut log_det = 0.0;
        for idx in model.by_year.iter().filter(|v| !v.is_empty()) {
            let nj = idx.len();
            let b = DMatrix::from_fn(nj, nj, |a, c| {
                let (ia, ic) = (idx[a], idx[c]);
                let mut v = tb_inv + sigma_x[(model.slot[ia], model.slot[ic])];
                if a == c {
                    v += 1.0 / noise_precision(&obs[ia], theta);
                }
                v
            });
            let chol = Cholesky::new(b).ok_or(Error::NotPositiveDefinite { pivot: 0, value: f64::NAN })?;
            log_det += 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            // Zᵀ B⁻¹ Z for this year
            let mut z = DMatrix::<f64>::zeros(nj, ns);
            for (a, &i) in idx.iter().enumerate() {
                z[(a, model.slot[i])] = 1.0;
            }
            let binv_z = chol.solve(&z);
            k_mat += z.tr_mul(&binv_z);
            years.push(YearBlock { idx: idx.clone(), chol });
        }
        let inner_mat = DMatrix::<f64>::identity(ns, ns) + &k_mat * &g;
        let inner = inner_mat.lu();
        let det = inner.determinant();
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: 0, value: det });
        }
        log_det += det.ln();
        Ok(Self { n, slot: model.slot.clone(), years, g, inner, log_det })
    }

    fn b_solve(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for y in &self.years {
            let rhs = DVector::from_iterator(y.idx.len(), y.idx.iter().map(|&i| v[i]));
            let s = y.chol.solve(&rhs);
            for (a, &i) in y.idx.iter().enumerate() {
                out[i] = s[a];
            }
        }
        out
    }

    fn to_supports(&self, w: &[f64]) -> DVector<f64> {
        let mut h = DVector::zeros(self.g.nrows());
        for (i, &s) in self.slot.iter().enumerate() {
            h[s] += w[i];
        }
        h
    }

    /// `S⁻¹ v`.
    fn solve(&self, v: &[f64]) -> Vec<f64> {
        let w = self.b_solve(v);
        let h = self.to_supports(&w);
        let t = &self.g * self.inner.solve(&h).expect("inner system is nonsingular");
        let zt: Vec<f64> = self.slot.iter().map(|&s| t[s]).collect();
        let corr = self.b_solve(&zt);
        w.iter().zip(corr).map(|(a, b)| a - b).collect()
    }

    /// `vᵀ S⁻¹ v`.
    fn quad(&self, v: &[f64]) -> f64 {
        let w = self.b_solve(v);
        let h = self.to_supports(&w);
        let t = &self.g * self.inner.solve(&h).expect("inner system is nonsingular");
        v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - h.dot(&t)
    }

    /// Gaussian log density of a residual with covariance `S`.
    fn log_density(&self, r: &[f64]) -> f64 {
        -0.5 * (self.n as f64) * (2.0 * PI).ln() - 0.5 * self.log_det - 0.5 * self.quad(r)
    }
}

/// One row of the hyperparameter summary, in reporting units.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantileRow {
    pub name: String,
    pub median: f64,
    pub q025: Option<f64>,
    pub q975: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantileTable {
    pub rows: Vec<QuantileRow>,
    /// Laplace standard deviations in log space (absent when the Hessian is not PD).
    pub log_sd: Option<Vec<f64>>,
    pub hessian_pd: bool,
}

/// MAP hyperparameters and the latent Gaussian posterior at them.
#[derive(Debug)]
pub struct LatentFit {
    model: Arc<MarginalModel>,
    pub theta_map: Hyperparameters,
    pub log_posterior: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub trace: Vec<f64>,
    pub quantiles: Option<QuantileTable>,
    state: ThetaState,
    mu_post: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitSummary {
    pub theta_map: BTreeMap<String, f64>,
    pub log_posterior: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub quantiles: Option<QuantileTable>,
    pub trace: Vec<f64>,
}

impl LatentFit {
    pub fn model(&self) -> &Arc<MarginalModel> {
        &self.model
    }

    pub fn geometry(&self) -> &Arc<ModelGeometry> {
        &self.model.geometry
    }

    pub fn layout(&self) -> LatentLayout {
        self.model.layout()
    }

    pub fn posterior_mean(&self) -> &[f64] {
        &self.mu_post
    }

    /// `Q_post = Q_prior + Mᵀ D M` assembled at θ_map.
    pub fn posterior_precision(&self) -> Result<CsrMatrix> {
        Ok(self.system()?.posterior_precision())
    }

    pub fn system(&self) -> Result<GaussianSystem> {
        crate::model::assemble_system(&self.model.geometry, &self.model.obs, &self.theta_map, &self.model.priors)
    }

    /// Posterior mean and standard deviation of `aᵀ z`.
    pub fn latent_functional(&self, a: &[f64]) -> Result<(f64, f64)> {
        let dim = self.layout().dim();
        if a.len() != dim {
            return Err(Error::Dimension(format!("functional has length {}, latent dimension is {dim}", a.len())));
        }
        let mean = a.iter().zip(&self.mu_post).map(|(x, y)| x * y).sum();
        Ok((mean, self.posterior_variance(a).sqrt()))
    }

    /// `aᵀ Σ_prior a − uᵀ S⁻¹ u` with `u = M Σ_prior a`.
    fn posterior_variance(&self, a: &[f64]) -> f64 {
        let sa = self.model.apply_prior_covariance(&self.state, a);
        let prior: f64 = a.iter().zip(&sa).map(|(x, y)| x * y).sum();
        if prior == 0.0 {
            return 0.0;
        }
        let u = self.model.design_apply(&sa);
        (prior - self.state.cap.quad(&u)).max(0.0)
    }

    /// Variance of a projection row under the prior of a fresh annual field.
    pub fn fresh_annual_variance(&self, row: &crate::geometry::ProjectionRow) -> f64 {
        self.state.fx.inv_quad_form(&row.to_dense(self.geometry().m()))
    }

    /// Noise variance `s/τ` for a target of the given kind at θ_map.
    pub fn noise_variance(&self, point: bool, scale: f64) -> f64 {
        let tau = if point { self.theta_map.tau_y() } else { self.theta_map.tau_z() };
        scale / tau
    }

    pub fn summary(&self) -> FitSummary {
        let nat = self.theta_map.natural();
        FitSummary {
            theta_map: Hyperparameters::NAMES.iter().zip(nat).map(|(k, v)| (k.to_string(), v)).collect(),
            log_posterior: self.log_posterior,
            converged: self.converged,
            iterations: self.iterations,
            evaluations: self.evaluations,
            quantiles: self.quantiles.clone(),
            trace: self.trace.clone(),
        }
    }
}

/// `log π(θ | y)` for the model; `−∞` on failure.
pub fn log_marginal_posterior(theta: &Hyperparameters, model: &MarginalModel) -> f64 {
    model.log_marginal_posterior(theta)
}

/// Maximizes the log marginal posterior from `theta0` and conditions on the
/// maximizer.
pub fn fit_map(model: &Arc<MarginalModel>, theta0: &Hyperparameters, opts: &FitOptions) -> Result<LatentFit> {
    let f0 = model.log_marginal_posterior(theta0);
    if !f0.is_finite() {
        log::warn!("log marginal posterior is not finite at the starting point {theta0}");
    }
    let nm = NelderMeadOptions {
        max_iter: opts.max_iter,
        tol: opts.tol,
        initial_step: opts.initial_step,
        lower: opts.bounds.log_lower(),
        upper: opts.bounds.log_upper(),
    };
    let objective = |x: &[f64]| {
        let t = Hyperparameters::from_log(x.try_into().expect("seven parameters"));
        match t {
            Ok(t) => -model.log_marginal_posterior(&t),
            Err(_) => f64::INFINITY,
        }
    };
    let res = nelder_mead(objective, &theta0.as_array(), &nm);
    if res.projections > 0 {
        log::debug!("{} optimizer trial points were projected onto the bounds", res.projections);
    }
    if !res.converged {
        log::warn!("optimizer did not converge after {} iterations", res.iterations);
    }
    let theta_map = Hyperparameters::from_log(res.x.clone().try_into().expect("seven parameters"))?;
    let mut fit = model.condition(&theta_map)?;
    fit.converged = res.converged;
    fit.iterations = res.iterations;
    fit.evaluations = res.evaluations;
    fit.trace = res.trace.iter().map(|v| -v).collect();
    if opts.quantiles {
        fit.quantiles = Some(hyperparameter_quantiles(&fit, opts.hessian_step));
    }
    Ok(fit)
}

/// Negative Hessian of `f` at `x` by central differences.
pub fn negative_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let at = |d: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(k, s) in d {
            y[k] += s;
        }
        f(&y)
    };
    let mut hm = DMatrix::zeros(n, n);
    for i in 0..n {
        hm[(i, i)] = -(at(&[(i, h)]) - 2.0 * f0 + at(&[(i, -h)])) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)]) + at(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            hm[(i, j)] = -v;
            hm[(j, i)] = -v;
        }
    }
    hm
}

/// Laplace quantiles around a mode `x` of a log density `f` (log space):
/// per coordinate `(mode, mode − z sd, mode + z sd)`, or `None` when the
/// negative Hessian is not positive definite.
pub fn laplace_intervals(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Option<Vec<(f64, f64, f64)>> {
    let neg_h = negative_hessian(f, x, h);
    let cov = neg_h.cholesky()?.inverse();
    let mut out = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let v = cov[(k, k)];
        if !(v > 0.0) || !v.is_finite() {
            return None;
        }
        let sd = v.sqrt();
        out.push((x[k], x[k] - Z975 * sd, x[k] + Z975 * sd));
    }
    Some(out)
}

/// Table-1-style summary: ranges and standard deviations of the fields,
/// precisions reported as standard deviations `1/√τ`, and the climatic
/// intercept from the latent posterior.
pub fn hyperparameter_quantiles(fit: &LatentFit, h: f64) -> QuantileTable {
    let model = &fit.model;
    let f = |x: &[f64]| match Hyperparameters::from_log(x.try_into().expect("seven parameters")) {
        Ok(t) => model.log_marginal_posterior(&t),
        Err(_) => f64::NEG_INFINITY,
    };
    let x = fit.theta_map.as_array();
    let laplace = laplace_intervals(f, &x, h);
    let names = ["rho_c", "sigma_c", "rho_x", "sigma_x", "sd_beta", "sd_y", "sd_z"];
    let mut rows = Vec::new();
    for k in 0..7 {
        let precision = k >= 4;
        let map = |v: f64| if precision { (-0.5 * v).exp() } else { v.exp() };
        let (median, lo, hi) = match &laplace {
            Some(l) => {
                let (a, b) = (map(l[k].1), map(l[k].2));
                (map(l[k].0), Some(a.min(b)), Some(a.max(b)))
            }
            None => (map(x[k]), None, None),
        };
        rows.push(QuantileRow { name: names[k].to_string(), median, q025: lo, q975: hi });
    }
    let layout = fit.layout();
    let mut a = vec![0.0; layout.dim()];
    a[layout.beta_c()] = 1.0;
    if let Ok((m, s)) = fit.latent_functional(&a) {
        rows.push(QuantileRow { name: "beta_c".into(), median: m, q025: Some(m - Z975 * s), q975: Some(m + Z975 * s) });
    }
    let log_sd = laplace.as_ref().map(|l| l.iter().map(|(m, lo, _)| (m - lo) / Z975).collect());
    if laplace.is_none() {
        log::warn!("negative Hessian at the MAP is not positive definite; reporting the MAP only");
    }
    QuantileTable { rows, log_sd, hessian_pd: laplace.is_some() }
}

/// Log marginal likelihood through the posterior precision:
/// `½(log|Q_prior| + log|D| − log|Q_post|) − (n/2) log 2π − ½(yᵀDy + μᵀQ_prior μ − bᵀμ_post)`.
pub fn precision_route_log_likelihood(sys: &GaussianSystem) -> Result<f64> {
    let fp = CholeskyFactor::new(&sys.q_prior)?;
    let q_post = sys.posterior_precision();
    let fq = CholeskyFactor::new(&q_post)?;
    let b = sys.posterior_rhs();
    let mu_post = fq.solve(&b);
    let log_d: f64 = sys.d.iter().map(|v| v.ln()).sum();
    let ydy: f64 = sys.d.iter().zip(&sys.y).map(|(d, y)| d * y * y).sum();
    let qmu = sys.q_prior.mul_vec(&sys.mu);
    let mqm: f64 = sys.mu.iter().zip(&qmu).map(|(a, b)| a * b).sum();
    let bmu: f64 = b.iter().zip(&mu_post).map(|(a, b)| a * b).sum();
    let n = sys.y.len() as f64;
    Ok(0.5 * (fp.log_det() + log_d - fq.log_det()) - 0.5 * n * (2.0 * PI).ln() - 0.5 * (ydy + mqm - bmu))
}

/// Mixture of conditional posteriors over a 3-point-per-axis grid of θ
/// (MAP ± one Laplace standard deviation), for sensitivity checks.
#[derive(Debug)]
pub struct GridMixture {
    pub components: Vec<(f64, LatentFit)>,
    pub grid_size: usize,
}

impl GridMixture {
    /// Components whose normalized weight is below `min_weight` are dropped
    /// and the rest renormalized.
    pub fn new(fit: &LatentFit, min_weight: f64) -> Result<Self> {
        let sd = fit
            .quantiles
            .as_ref()
            .and_then(|q| q.log_sd.clone())
            .ok_or_else(|| Error::Degenerate("grid mixing needs a positive definite Laplace approximation".into()))?;
        let x = fit.theta_map.as_array();
        let mut points = Vec::new();
        for code in 0..3usize.pow(7) {
            let mut c = code;
            let mut p = x;
            for k in 0..7 {
                p[k] += (c % 3) as f64 * sd[k] - sd[k];
                c /= 3;
            }
            let t = Hyperparameters::from_log(p)?;
            points.push((fit.model.log_marginal_posterior(&t), t));
        }
        let best = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = points.iter().map(|p| (p.0 - best).exp()).sum();
        let mut components = Vec::new();
        for (lp, t) in &points {
            let w = (lp - best).exp() / total;
            if w >= min_weight {
                components.push((w, fit.model.condition(t)?));
            }
        }
        let kept: f64 = components.iter().map(|c| c.0).sum();
        for c in &mut components {
            c.0 /= kept;
        }
        Ok(Self { components, grid_size: points.len() })
    }

    /// Mixture mean and standard deviation of a latent functional.
    pub fn latent_functional(&self, a: &[f64]) -> Result<(f64, f64)> {
        let (mut m1, mut m2) = (0.0, 0.0);
        for (w, fit) in &self.components {
            let (m, s) = fit.latent_functional(a)?;
            m1 += w * m;
            m2 += w * (s * s + m * m);
        }
        Ok((m1, (m2 - m1 * m1).max(0.0).sqrt()))
    }
}
