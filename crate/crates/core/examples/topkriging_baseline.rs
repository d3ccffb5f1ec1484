//! Top-Kriging baseline: variogram fit on catchment observations, one
//! block-kriging prediction and the cross-validation score next to the
//! latent model's.
//!
//!     cargo run --release --example topkriging_baseline

use std::sync::Arc;

use runoff_lgm::evaluation::{run_t2, Dataset, DriverOptions};
use runoff_lgm::geometry::Catchment;
use runoff_lgm::kriging::{fit_variogram, krige, run_topkriging_cv, VariogramModel};
use runoff_lgm::model::{Design, Support};
use runoff_lgm::simstudy::{sim_mesh_settings, simulate_dataset, synthetic_layout, table3};

fn main() -> runoff_lgm::Result<()> {
    let layout = synthetic_layout(&sim_mesh_settings())?;
    let g = &layout.geometry;
    let sim = simulate_dataset(g, &table3()[0], 0)?;
    let data = Dataset::new(Arc::clone(g), sim.observed, sim.future)?;
    let default = VariogramModel { nugget: 0.0, sill: 0.1, range: 50.0 };

    // year 0, predict C1 from the other four catchments
    let target = g.catchment_index("C1")?;
    let obs: Vec<(usize, f64)> = data
        .areal()
        .observations()
        .iter()
        .filter(|o| o.year == 0 && o.support != Support::Catchment(target))
        .filter_map(|o| match o.support {
            Support::Catchment(k) => Some((k, o.value)),
            Support::Site(_) => None,
        })
        .collect();
    let v = fit_variogram(&obs, g.catchments(), &default)?;
    println!("variogram: {:?} (fallback {})", v.model, v.fallback);
    let pairs: Vec<(&Catchment, f64)> = obs.iter().map(|&(k, z)| (&g.catchments()[k], z)).collect();
    let k = krige(&g.catchments()[target], &pairs, &v.model)?;
    println!("C1 year 0: {:.3} ± {:.3}, weights {:?}", k.mean, k.sd, k.weights);

    let tk = run_topkriging_cv(&data, &default)?;
    let lgm = run_t2(&data, Design::Areal, &DriverOptions::default())?;
    println!("Top-Kriging: RMSE {:.4}  CRPS {:.4}  coverage {:.3}", tk.mean_rmse, tk.mean_crps, tk.pooled_coverage);
    println!("LGM (A):     RMSE {:.4}  CRPS {:.4}  coverage {:.3}", lgm.mean_rmse, lgm.mean_crps, lgm.pooled_coverage);
    Ok(())
}
