//! Matérn fields with smoothness ν = 1 represented as Gaussian Markov random
//! fields through the finite-element solution of
//! `(κ² − Δ) τ x = W` on a triangular mesh (α = 2, d = 2).

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FemMatrices;
use crate::sparse::{CholeskyFactor, CsrMatrix, SymbolicCholesky};

pub const ALPHA: f64 = 2.0;
pub const NU: f64 = 1.0;
pub const DIM: f64 = 2.0;

/// Interpretable field parameters: range (km, correlation 0.1) and marginal
/// standard deviation (m/year).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub rho: f64,
    pub sigma: f64,
}

impl MaternParams {
    pub fn new(rho: f64, sigma: f64) -> Result<Self> {
        let p = Self { rho, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite() && self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "Matérn parameters must be positive and finite (rho = {}, sigma = {})",
                self.rho, self.sigma
            )));
        }
        Ok(())
    }

    pub fn to_spde(&self) -> Result<SpdeParams> {
        let kappa = kappa_from_range(self.rho)?;
        Ok(SpdeParams { kappa, tau: tau_from_sigma(self.sigma, kappa)? })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpdeParams {
    pub kappa: f64,
    pub tau: f64,
}

/// κ = √(8ν)/ρ.
pub fn kappa_from_range(rho: f64) -> Result<f64> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidInput(format!("range must be positive, got {rho}")));
    }
    Ok((8.0 * NU).sqrt() / rho)
}

/// Inverts σ² = Γ(ν) / (Γ(α) (4π)^{d/2} κ^{2ν} τ²), which for ν = 1, α = 2,
/// d = 2 gives τ = 1 / (σ κ √(4π)).
pub fn tau_from_sigma(sigma: f64, kappa: f64) -> Result<f64> {
    if !(sigma > 0.0 && kappa > 0.0) || !sigma.is_finite() || !kappa.is_finite() {
        return Err(Error::InvalidInput(format!("sigma and kappa must be positive (sigma = {sigma}, kappa = {kappa})")));
    }
    Ok(1.0 / (sigma * kappa * (4.0 * PI).sqrt()))
}

pub fn sigma_from_tau(tau: f64, kappa: f64) -> Result<f64> {
    if !(tau > 0.0 && kappa > 0.0) {
        return Err(Error::InvalidInput(format!("tau and kappa must be positive (tau = {tau}, kappa = {kappa})")));
    }
    Ok(1.0 / (tau * kappa * (4.0 * PI).sqrt()))
}

/// Modified Bessel function of the second kind, order one.
pub fn bessel_k1(x: f64) -> f64 {
    assert!(x > 0.0, "K1 is defined for x > 0");
    if x <= 2.0 {
        // K1(x) = 1/x + ln(x/2) I1(x) − (x/4) Σ (ψ(k+1) + ψ(k+2)) (x²/4)^k / (k! (k+1)!)
        let q = 0.25 * x * x;
        let mut term = 0.5 * x; // (x/2)^{2k+1} / (k!(k+1)!)
        let mut i1 = 0.0;
        let mut psi_a = -0.577_215_664_901_532_9; // ψ(1)
        let mut psi_b = psi_a + 1.0; // ψ(2)
        let mut tail = 0.0;
        for k in 0..60 {
            i1 += term;
            tail += (psi_a + psi_b) * term;
            let kf = k as f64;
            psi_a += 1.0 / (kf + 1.0);
            psi_b += 1.0 / (kf + 2.0);
            term *= q / ((kf + 1.0) * (kf + 2.0));
            if term < 1e-18 * i1 {
                break;
            }
        }
        1.0 / x + (0.5 * x).ln() * i1 - 0.5 * tail
    } else {
        // trapezoid rule on ∫₀^∞ exp(−x cosh t) cosh t dt, spectrally accurate
        // because the integrand is analytic and decays doubly exponentially
        let h = 0.05;
        let mut sum = 0.5 * (-x).exp();
        let mut k = 1;
        loop {
            let t = k as f64 * h;
            let v = (-x * t.cosh()).exp() * t.cosh();
            sum += v;
            if v < 1e-18 * sum {
                break;
            }
            k += 1;
        }
        sum * h
    }
}

/// Matérn covariance with ν = 1: σ² (κd) K₁(κd), equal to σ² at d = 0.
pub fn matern_covariance(dist: f64, p: &MaternParams) -> f64 {
    let s2 = p.sigma * p.sigma;
    if dist <= 0.0 {
        return s2;
    }
    let kd = (8.0 * NU).sqrt() / p.rho * dist;
    if kd > 700.0 {
        return 0.0;
    }
    s2 * kd * bessel_k1(kd)
}

#[derive(Clone, Debug)]
pub struct FieldPrecision {
    pub q: CsrMatrix,
}

/// Q = τ²(κ⁴C + 2κ²G + G C⁻¹ G) for the given parameters, checked to be
/// positive definite by a sparse factorization.
pub fn assemble_precision(fem: &FemMatrices, p: &MaternParams) -> Result<FieldPrecision> {
    let template = PrecisionTemplate::new(fem)?;
    let q = template.precision(p)?;
    CholeskyFactor::factor(template.symbolic(), &q)?;
    Ok(FieldPrecision { q })
}

/// The three sparse components of the precision on a common pattern, plus a
/// symbolic Cholesky analysis shared by every parameter value.
#[derive(Debug)]
pub struct PrecisionTemplate {
    pattern: CsrMatrix,
    c_part: Vec<f64>,
    g_part: Vec<f64>,
    k_part: Vec<f64>,
    symbolic: Arc<SymbolicCholesky>,
}

impl PrecisionTemplate {
    pub fn new(fem: &FemMatrices) -> Result<Self> {
        if let Some(c) = fem.c.iter().find(|c| !(**c > 0.0)) {
            return Err(Error::Degenerate(format!("lumped mass entry {c} is not positive")));
        }
        let c = fem.c_matrix();
        let c_inv = CsrMatrix::diagonal(&fem.c.iter().map(|v| 1.0 / v).collect::<Vec<_>>());
        let k = fem.g.matmul(&c_inv).matmul(&fem.g);
        let pattern = k.add_scaled(&fem.g, 1.0).add_scaled(&c, 1.0);
        let c_part = c.on_pattern(&pattern).values().to_vec();
        let g_part = fem.g.on_pattern(&pattern).values().to_vec();
        let k_part = k.on_pattern(&pattern).values().to_vec();
        let symbolic = SymbolicCholesky::analyze(&pattern)?;
        Ok(Self { pattern, c_part, g_part, k_part, symbolic })
    }

    pub fn dim(&self) -> usize {
        self.pattern.n_rows()
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    pub fn precision(&self, p: &MaternParams) -> Result<CsrMatrix> {
        let s = p.to_spde()?;
        let (k2, t2) = (s.kappa * s.kappa, s.tau * s.tau);
        let mut q = self.pattern.clone();
        for (i, v) in q.values_mut().iter_mut().enumerate() {
            *v = t2 * (k2 * k2 * self.c_part[i] + 2.0 * k2 * self.g_part[i] + self.k_part[i]);
        }
        Ok(q)
    }

    pub fn factor(&self, p: &MaternParams) -> Result<CholeskyFactor> {
        CholeskyFactor::factor(&self.symbolic, &self.precision(p)?)
    }
}
