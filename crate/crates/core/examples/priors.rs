//! Evaluates the default hyperpriors and prints their calibration
//! probabilities in closed form.
//!
//!     cargo run --example priors

use runoff_lgm::model::Hyperparameters;
use runoff_lgm::priors::{hyperprior_logpdf, PriorConfig};

fn main() -> runoff_lgm::Result<()> {
    let p = PriorConfig::default();
    let f = p.climate;
    // π(ρ) ∝ ρ⁻² exp(−λ_ρ/ρ), π(σ) ∝ exp(−λ_σ σ), σ_ε = τ^{-1/2} ~ Exp(λ)
    println!("Prob(rho < {}) = {:.3}", f.u_rho, (-f.lambda_rho() / f.u_rho).exp());
    println!("Prob(sigma > {}) = {:.3}", f.u_sigma, (-f.lambda_sigma() * f.u_sigma).exp());
    for (name, s) in [("tau_beta", p.tau_beta), ("tau_y", p.tau_y), ("tau_z", p.tau_z)] {
        println!("Prob(1/sqrt({name}) > {}) = {:.3}", s.u, (-s.lambda() * s.u).exp());
    }
    println!("beta_c ~ N({}, {}²)", p.beta_c.mean, p.beta_c.sd);

    for (rho, sigma) in [(5.0, 0.3), (20.0, 0.8), (100.0, 0.3)] {
        let theta = Hyperparameters::from_natural(rho, sigma, rho, sigma, 5.0, 1.0, 1.0)?;
        println!("log prior at rho = {rho}, sigma = {sigma}: {:.3}", hyperprior_logpdf(&theta, &p)?);
    }
    Ok(())
}
