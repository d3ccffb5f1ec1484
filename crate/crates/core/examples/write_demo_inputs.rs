//! Writes a simulated study (scenario 1, first climate) as CSV input files
//! plus a config for the `runoff` command-line tool.
//!
//!     cargo run --example write_demo_inputs -- demo
//!     cargo run --bin runoff -- fit --config demo/config.toml

use std::path::PathBuf;

use runoff_lgm::io::write_simulated_inputs;
use runoff_lgm::simstudy::{sim_mesh_settings, simulate_dataset, synthetic_layout, table3};

fn main() -> runoff_lgm::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    let layout = synthetic_layout(&sim_mesh_settings())?;
    let scenario = &table3()[0];
    let data = simulate_dataset(&layout.geometry, scenario, 0)?;
    let cfg = write_simulated_inputs(&dir, &layout.geometry, &data, 1990, 42)?;
    println!("wrote {}", cfg.display());
    Ok(())
}
