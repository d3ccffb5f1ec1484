//! Prior densities for the hyperparameters.
//!
//! Precisions get penalized-complexity priors, each field's (range, standard
//! deviation) pair gets the joint PC prior for two-dimensional Matérn fields,
//! and the climatic intercept gets a Gaussian prior (evaluated as part of the
//! latent field).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Hyperparameters;
use crate::spde::MaternParams;

/// PC prior on a precision τ specified through `Prob(1/√τ > u) = alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcPrecisionSpec {
    pub u: f64,
    pub alpha: f64,
}

impl PcPrecisionSpec {
    pub fn new(u: f64, alpha: f64) -> Result<Self> {
        let s = Self { u, alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u > 0.0 && self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("PC precision prior needs u > 0 and 0 < alpha < 1, got {self:?}")));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        -self.alpha.ln() / self.u
    }
}

/// Joint PC prior on (ρ, σ) specified through `Prob(ρ < u_rho) = alpha_rho`
/// and `Prob(σ > u_sigma) = alpha_sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcMaternSpec {
    pub u_rho: f64,
    pub alpha_rho: f64,
    pub u_sigma: f64,
    pub alpha_sigma: f64,
}

impl PcMaternSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.u_rho > 0.0
            && self.u_sigma > 0.0
            && (0.0..1.0).contains(&self.alpha_rho)
            && self.alpha_rho > 0.0
            && (0.0..1.0).contains(&self.alpha_sigma)
            && self.alpha_sigma > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid PC Matérn prior {self:?}")));
        }
        Ok(())
    }

    pub fn lambda_rho(&self) -> f64 {
        -self.alpha_rho.ln() * self.u_rho
    }

    pub fn lambda_sigma(&self) -> f64 {
        -self.alpha_sigma.ln() / self.u_sigma
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPriorSpec {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianPriorSpec {
    pub fn logpdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -0.5 * z * z - self.sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// `log π(τ)` with `π(τ) = (λ/2) τ^{-3/2} exp(-λ τ^{-1/2})`.
pub fn pc_precision_logpdf(tau: f64, spec: &PcPrecisionSpec) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidInput(format!("precision must be positive, got {tau}")));
    }
    let lambda = spec.lambda();
    Ok((0.5 * lambda).ln() - 1.5 * tau.ln() - lambda / tau.sqrt())
}

/// `log π(ρ, σ)` with `π(ρ, σ) = λ_ρ λ_σ ρ⁻² exp(−λ_ρ/ρ − λ_σ σ)`.
pub fn pc_matern_logpdf(p: &MaternParams, spec: &PcMaternSpec) -> Result<f64> {
    p.validate()?;
    let (lr, ls) = (spec.lambda_rho(), spec.lambda_sigma());
    Ok(lr.ln() + ls.ln() - 2.0 * p.rho.ln() - lr / p.rho - ls * p.sigma)
}

/// All prior specifications of the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub beta_c: GaussianPriorSpec,
    pub climate: PcMaternSpec,
    pub annual: PcMaternSpec,
    pub tau_beta: PcPrecisionSpec,
    pub tau_y: PcPrecisionSpec,
    pub tau_z: PcPrecisionSpec,
}

impl Default for PriorConfig {
    fn default() -> Self {
        let field = PcMaternSpec { u_rho: 10.0, alpha_rho: 0.1, u_sigma: 2.0, alpha_sigma: 0.1 };
        Self {
            beta_c: GaussianPriorSpec { mean: 2.0, sd: 0.5 },
            climate: field,
            annual: field,
            tau_beta: PcPrecisionSpec { u: 10.0, alpha: 0.2 },
            tau_y: PcPrecisionSpec { u: 1.5, alpha: 0.1 },
            tau_z: PcPrecisionSpec { u: 1.5, alpha: 0.1 },
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_c.sd > 0.0) {
            return Err(Error::Config("beta_c prior sd must be positive".into()));
        }
        self.climate.validate()?;
        self.annual.validate()?;
        self.tau_beta.validate()?;
        self.tau_y.validate()?;
        self.tau_z.validate()
    }
}

/// Log prior density of the hyperparameters with respect to their log-scale
/// coordinates (includes the log-Jacobian `Σ log θᵢ`).
pub fn hyperprior_logpdf(theta: &Hyperparameters, config: &PriorConfig) -> Result<f64> {
    let v = theta.natural();
    let natural = hyperprior_logpdf_natural(&v, config)?;
    Ok(natural + theta.as_array().iter().sum::<f64>())
}

/// Log prior density with respect to the natural parameters
/// `(ρ_c, σ_c, ρ_x, σ_x, τ_β, τ_y, τ_z)`.
pub fn hyperprior_logpdf_natural(v: &[f64; 7], config: &PriorConfig) -> Result<f64> {
    if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput(format!("hyperparameters out of domain: {v:?}")));
    }
    Ok(pc_matern_logpdf(&MaternParams { rho: v[0], sigma: v[1] }, &config.climate)?
        + pc_matern_logpdf(&MaternParams { rho: v[2], sigma: v[3] }, &config.annual)?
        + pc_precision_logpdf(v[4], &config.tau_beta)?
        + pc_precision_logpdf(v[5], &config.tau_y)?
        + pc_precision_logpdf(v[6], &config.tau_z)?)
}
