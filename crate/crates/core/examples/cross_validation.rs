//! Leave-one-catchment-out cross-validation (T2) and future-year tests
//! (T3u, T3g) for the three observation designs.
//!
//!     cargo run --release --example cross_validation

use std::sync::Arc;

use runoff_lgm::evaluation::{run_t2, run_t3g, run_t3u, Dataset, DriverOptions};
use runoff_lgm::model::Design;
use runoff_lgm::simstudy::{sim_mesh_settings, simulate_dataset, synthetic_layout, table3};

fn main() -> runoff_lgm::Result<()> {
    let layout = synthetic_layout(&sim_mesh_settings())?;
    let sim = simulate_dataset(&layout.geometry, &table3()[0], 2)?;
    let data = Dataset::new(Arc::clone(&layout.geometry), sim.observed, sim.future)?;
    let opts = DriverOptions::default();
    for design in [Design::Points, Design::Areal, Design::Combined] {
        let r = run_t2(&data, design, &opts)?;
        println!("T2 {:>3}: RMSE {:.4}  CRPS {:.4}  coverage {:.3}", design.tag(), r.mean_rmse, r.mean_crps, r.pooled_coverage);
        for c in &r.catchments {
            println!("        {}: RMSE {:.4}  CRPS {:.4}", c.catchment, c.rmse, c.crps);
        }
    }
    let u = run_t3u(&data, Design::Combined, &opts)?;
    println!("T3u P+A: RMSE {:.4}  CRPS {:.4}", u.mean_rmse, u.mean_crps);
    for i in [1, 3] {
        let g = run_t3g(&data, Design::Combined, i, 3, 5, &opts)?;
        println!("T3g P+A, {i} year(s): RMSE {:.4}  CRPS {:.4}", g.mean_rmse, g.mean_crps);
    }
    println!("point data reads: {}", data.point_reads());
    Ok(())
}
