//! Fits the two-field model to one simulated climate and prints the
//! hyperparameter summary next to the values used for the simulation.
//!
//!     cargo run --release --example fit_model

use std::sync::Arc;

use runoff_lgm::inference::{fit_map, FitOptions, MarginalModel};
use runoff_lgm::model::Design;
use runoff_lgm::priors::PriorConfig;
use runoff_lgm::simstudy::{sim_mesh_settings, simulate_dataset, synthetic_layout, table3};

fn main() -> runoff_lgm::Result<()> {
    let layout = synthetic_layout(&sim_mesh_settings())?;
    let scenario = &table3()[0];
    let data = simulate_dataset(&layout.geometry, scenario, 0)?;
    for design in [Design::Points, Design::Areal, Design::Combined] {
        let obs = data.observed.for_design(design);
        let model = Arc::new(MarginalModel::new(Arc::clone(&layout.geometry), obs, PriorConfig::default())?);
        let fit = fit_map(&model, &model.default_start(), &FitOptions::default())?;
        println!(
            "design {}: log posterior {:.3}, {} evaluations, converged {}",
            design.tag(),
            fit.log_posterior,
            fit.evaluations,
            fit.converged
        );
        if let Some(q) = fit.summary().quantiles {
            for r in &q.rows {
                let ci = match (r.q025, r.q975) {
                    (Some(lo), Some(hi)) => format!("({lo:.3}, {hi:.3})"),
                    _ => "-".into(),
                };
                println!("  {:<9} {:>8.3} {ci}", r.name, r.median);
            }
        }
    }
    println!("simulated with {}", scenario.theta());
    Ok(())
}
