//! Fits without catchment C4, then predicts it for the observed years and
//! for a future year, and writes a small raster of the climatic mean.
//!
//!     cargo run --release --example predict_catchments

use std::sync::Arc;

use runoff_lgm::geometry::Point2D;
use runoff_lgm::inference::{fit_map, FitOptions, MarginalModel};
use runoff_lgm::model::Support;
use runoff_lgm::prediction::{predict_lattice, predict_support, Noise, PredictOptions, YearTag};
use runoff_lgm::priors::PriorConfig;
use runoff_lgm::simstudy::{sim_mesh_settings, simulate_dataset, synthetic_layout, table3};

fn main() -> runoff_lgm::Result<()> {
    let layout = synthetic_layout(&sim_mesh_settings())?;
    let g = &layout.geometry;
    let data = simulate_dataset(g, &table3()[0], 1)?;
    let c4 = Support::Catchment(g.catchment_index("C4")?);
    let model = Arc::new(MarginalModel::new(Arc::clone(g), data.observed.filtered(|o| o.support != c4), PriorConfig::default())?);
    let fit = fit_map(&model, &model.default_start(), &FitOptions { quantiles: false, ..FitOptions::default() })?;

    let opts = PredictOptions::default();
    println!("year  observed  predicted  95% interval");
    for o in data.observed.observations().iter().filter(|o| o.support == c4) {
        let p = predict_support(&fit, c4, YearTag::Observed(o.year), Noise::Areal(o.scale), &opts)?;
        println!("{:>4} {:9.3} {:10.3}  ({:.3}, {:.3})", o.year, o.value, p.mean, p.lo, p.hi);
    }
    let f = predict_support(&fit, c4, YearTag::Future, Noise::None, &opts)?;
    println!("future year: {:.3} ± {:.3}", f.mean, f.sd_process);

    let raster = predict_lattice(&fit, Point2D::new(5.0, 5.0), 10.0, 8, 8, YearTag::Future)?;
    print!("{}", raster.to_ascii_grid(|p| p.mean));
    Ok(())
}
