//! Runs a few climates of one simulation scenario and reports coverage and
//! the probability of systematic bias.
//!
//!     cargo run --release --example simulation_study -- 1 5

use runoff_lgm::simstudy::{run_scenario, sim_mesh_settings, synthetic_layout, table3, SimOptions};

fn main() -> runoff_lgm::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("numeric argument"));
    let set = args.next().unwrap_or(1);
    let climates = args.next().unwrap_or(5);
    let layout = synthetic_layout(&sim_mesh_settings())?;
    let mut scenario = table3().into_iter().nth(set - 1).expect("scenario 1..=9");
    scenario.climates = climates;
    println!(
        "set {set}: sigma_c {}, sigma_x {}, rho_c {}, rho_x {}, climatic dominance {:.3}",
        scenario.sigma_c,
        scenario.sigma_x,
        scenario.rho_c,
        scenario.rho_x,
        scenario.climate_ratio()
    );
    for gauged in [0, 1] {
        let r = run_scenario(&layout, &scenario, gauged, &SimOptions::default())?;
        println!(
            "gauged {gauged}: coverage {:.3}, systematic bias {:.3}, failed fits {}",
            r.coverage, r.bias_probability, r.failures
        );
        for rec in &r.records {
            println!(
                "  climate {:>2} {}: {}/10 covered, future RMSE {:.3}",
                rec.climate,
                rec.target,
                rec.covered(),
                rec.future_rmse
            );
        }
    }
    Ok(())
}
