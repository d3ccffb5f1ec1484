//! Synthetic datasets drawn from the two-field model and the coverage and
//! systematic-bias analysis of ungauged and partially gauged catchments.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Catchment, GridLattice, MeshSettings, Point2D, Polygon};
use crate::inference::{fit_map, FitOptions, LatentFit, MarginalModel};
use crate::model::{Hyperparameters, ModelGeometry, ObservationSet, Site, Support, SCALE_FLOOR};
use crate::prediction::{predict_support, Noise, PredictOptions, YearTag};
use crate::priors::PriorConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub id: usize,
    pub sigma_c: f64,
    pub sigma_x: f64,
    pub rho_c: f64,
    pub rho_x: f64,
    pub beta_c: f64,
    pub tau_beta: f64,
    pub point_sd_fraction: f64,
    pub areal_sd_fraction: f64,
    pub climates: usize,
    pub years: usize,
    pub future_years: usize,
    pub seed: u64,
}

impl SimScenario {
    pub fn new(id: usize, sigma_c: f64, sigma_x: f64, rho_c: f64, rho_x: f64) -> Self {
        Self {
            id,
            sigma_c,
            sigma_x,
            rho_c,
            rho_x,
            beta_c: 2.0,
            tau_beta: 5.0,
            point_sd_fraction: 0.15,
            areal_sd_fraction: 0.03,
            climates: 50,
            years: 10,
            future_years: 17,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [self.sigma_c, self.sigma_x, self.rho_c, self.rho_x, self.tau_beta];
        if pos.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("scenario {} has non-positive parameters", self.id)));
        }
        for f in [self.point_sd_fraction, self.areal_sd_fraction] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Config(format!("noise fraction {f} outside [0, 1)")));
            }
        }
        if self.years == 0 || self.climates == 0 {
            return Err(Error::Config("scenario needs at least one year and one climate".into()));
        }
        Ok(())
    }

    /// Climatic spatial dominance `σ_c² / (σ_c² + σ_x²)`.
    pub fn climate_ratio(&self) -> f64 {
        let (c, x) = (self.sigma_c * self.sigma_c, self.sigma_x * self.sigma_x);
        c / (c + x)
    }

    /// Generating hyperparameters; noise scales are defined so that τ_y = τ_z = 1.
    pub fn theta(&self) -> Hyperparameters {
        Hyperparameters::from_natural(self.rho_c, self.sigma_c, self.rho_x, self.sigma_x, self.tau_beta, 1.0, 1.0)
            .expect("validated scenario")
    }
}

/// The nine parameter sets `(σ_c, σ_x, ρ_c, ρ_x)` of the simulation study.
pub fn table3() -> Vec<SimScenario> {
    let sets = [
        (0.8, 0.3, 20.0),
        (0.5, 0.5, 20.0),
        (0.3, 0.8, 20.0),
        (0.8, 0.3, 50.0),
        (0.5, 0.5, 50.0),
        (0.3, 0.8, 50.0),
        (0.8, 0.3, 100.0),
        (0.3, 0.5, 100.0),
        (0.5, 0.8, 100.0),
    ];
    sets.iter().enumerate().map(|(k, &(sc, sx, rc))| SimScenario::new(k + 1, sc, sx, rc, 100.0)).collect()
}

/// Geometry of the synthetic study area: an 80 km × 80 km domain with 15
/// point sites and five catchments, three of them nested (C3 ⊂ C4 ⊂ C5).
#[derive(Debug, Clone)]
pub struct SimLayout {
    pub geometry: Arc<ModelGeometry>,
    /// Catchment indices left out in turn.
    pub targets: Vec<usize>,
}

pub const SIM_SITES: [(f64, f64); 15] = [
    (10.3, 20.7),
    (25.1, 8.4),
    (47.9, 12.2),
    (70.6, 15.3),
    (8.2, 40.6),
    (22.4, 57.9),
    (12.7, 72.1),
    (33.8, 70.4),
    (52.3, 66.8),
    (75.1, 48.2),
    (66.9, 31.7),
    (41.2, 49.1),
    (56.4, 37.8),
    (28.6, 33.9),
    (45.0, 78.0),
];

pub fn sim_catchments() -> Result<Vec<Catchment>> {
    let lat = GridLattice::default();
    let rects = [
        ("C1", (5.5, 50.5, 17.5, 65.5)),
        ("C2", (60.5, 60.5, 72.5, 72.5)),
        ("C3", (38.5, 33.5, 45.5, 40.5)),
        ("C4", (35.5, 30.5, 52.5, 45.5)),
        ("C5", (30.5, 25.5, 60.5, 55.5)),
    ];
    rects
        .iter()
        .map(|(id, (x0, y0, x1, y1))| Catchment::from_polygons(*id, &[Polygon::rectangle(*x0, *y0, *x1, *y1)], lat))
        .collect()
}

/// Simulation mesh. The 60 km extension keeps boundary variance
/// inflation at the sites small for ranges up to 100 km.
pub fn sim_mesh_settings() -> MeshSettings {
    MeshSettings::new(5.0).with_outer_edge(15.0).with_extension(60.0)
}

pub fn synthetic_layout(settings: &MeshSettings) -> Result<SimLayout> {
    let sites = SIM_SITES
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| Site { id: format!("P{}", k + 1), location: Point2D::new(x, y) })
        .collect();
    let geometry = ModelGeometry::build(sites, sim_catchments()?, settings)?;
    let targets = vec![geometry.catchment_index("C1")?, geometry.catchment_index("C4")?];
    Ok(SimLayout { geometry, targets })
}

/// Observations (truth plus noise) and the underlying truth.
#[derive(Clone, Debug)]
pub struct SimDataset {
    pub observed: ObservationSet,
    /// Noise-free value of every observation in `observed`.
    pub truth: Vec<f64>,
    /// Areal observations of `future_years` fresh years (year index in `0..future_years`).
    pub future: ObservationSet,
    pub future_truth: Vec<f64>,
}

/// Independent stream for a labelled job.
pub fn derived_seed(seed: u64, labels: &[u64]) -> u64 {
    // splitmix64 over the labels
    let mut z = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &l in labels {
        z = z.wrapping_add(l.wrapping_mul(0xBF58_476D_1CE4_E5B9)).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Draws one climate: `c` once, then `β_j` and `x_j` for every observed and
/// every future year, and noisy observations at all supports.
pub fn simulate_dataset(geometry: &ModelGeometry, scenario: &SimScenario, climate: usize) -> Result<SimDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(scenario.seed, &[scenario.id as u64, climate as u64]));
    let theta = scenario.theta();
    let template = geometry.template();
    let fc = template.factor(&theta.climate())?;
    let fx = template.factor(&theta.annual())?;
    let m = geometry.m();
    let c = fc.sample_transform(&normals(&mut rng, m));
    let sd_beta = 1.0 / scenario.tau_beta.sqrt();

    let supports: Vec<Support> =
        (0..geometry.sites().len()).map(Support::Site).chain((0..geometry.catchments().len()).map(Support::Catchment)).collect();
    let draw_year = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let z: f64 = StandardNormal.sample(rng);
        let beta = sd_beta * z;
        let x = fx.sample_transform(&normals(rng, m));
        supports.iter().map(|s| scenario.beta_c + beta + geometry.row(*s).dot(&c) + geometry.row(*s).dot(&x)).collect()
    };

    let mut observed = ObservationSet::new(scenario.years);
    let mut truth = Vec::new();
    let mut future = ObservationSet::new(scenario.future_years.max(1));
    let mut future_truth = Vec::new();
    for j in 0..scenario.years + scenario.future_years {
        let values = draw_year(&mut rng);
        for (s, &t) in supports.iter().zip(&values) {
            let frac = if s.is_point() { scenario.point_sd_fraction } else { scenario.areal_sd_fraction };
            let sd = frac * t.abs();
            let eps: f64 = StandardNormal.sample(&mut rng);
            let o = crate::model::Observation { support: *s, year: j, value: t + sd * eps, scale: (sd * sd).max(SCALE_FLOOR) };
            if j < scenario.years {
                observed.push(o)?;
                truth.push(t);
            } else if !s.is_point() {
                future.push(crate::model::Observation { year: j - scenario.years, ..o })?;
                future_truth.push(t);
            }
        }
    }
    Ok(SimDataset { observed, truth, future, future_truth })
}

/// Predictions for one left-out target in one climate.
#[derive(Clone, Debug, Serialize)]
pub struct ClimateRecord {
    pub climate: usize,
    pub target: String,
    pub gauged_years: Vec<usize>,
    /// Simulated (noisy) areal values of the observed years.
    pub values: Vec<f64>,
    pub medians: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// RMSE of the future-year prediction against the simulated future values.
    pub future_rmse: f64,
    pub theta_map: [f64; 7],
}

impl ClimateRecord {
    pub fn covered(&self) -> usize {
        self.values.iter().zip(self.lo.iter().zip(&self.hi)).filter(|(v, (l, h))| *l <= *v && *v <= *h).count()
    }

    /// All values on the same side of their medians.
    pub fn systematic(&self) -> bool {
        let below = self.values.iter().zip(&self.medians).all(|(v, m)| v < m);
        let above = self.values.iter().zip(&self.medians).all(|(v, m)| v > m);
        below || above
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SimResult {
    pub scenario: usize,
    pub gauged: usize,
    pub climate_ratio: f64,
    pub coverage: f64,
    pub bias_probability: f64,
    pub failures: usize,
    pub records: Vec<ClimateRecord>,
}

/// Fraction of (climate, target) events in which every value falls on one
/// side of its posterior median.
pub fn systematic_bias_probability(records: &[ClimateRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records".into()));
    }
    for r in records {
        if r.values.is_empty() || r.values.len() != r.medians.len() {
            return Err(Error::InvalidInput(format!("incomplete record for climate {} target {}", r.climate, r.target)));
        }
    }
    Ok(records.iter().filter(|r| r.systematic()).count() as f64 / records.len() as f64)
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    pub fit: FitOptions,
    /// Condition on the generating θ instead of estimating it.
    pub fixed_theta: bool,
    pub priors: PriorConfig,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { fit: FitOptions { quantiles: false, ..FitOptions::default() }, fixed_theta: false, priors: PriorConfig::default() }
    }
}

/// Fits the model with one target catchment left out (plus `gauged`
/// randomly drawn years of it) and predicts the target's observed and
/// future years.
pub fn run_target(
    layout: &SimLayout,
    scenario: &SimScenario,
    data: &SimDataset,
    climate: usize,
    target: usize,
    gauged: usize,
    opts: &SimOptions,
) -> Result<ClimateRecord> {
    let g = &layout.geometry;
    let tsupport = Support::Catchment(target);
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(scenario.seed, &[scenario.id as u64, climate as u64, target as u64, 7]));
    let mut gauged_years: Vec<usize> = sample(&mut rng, scenario.years, gauged.min(scenario.years)).into_vec();
    gauged_years.sort_unstable();
    let obs = data.observed.filtered(|o| o.support != tsupport || gauged_years.contains(&o.year));
    let model = Arc::new(MarginalModel::new(Arc::clone(g), obs, opts.priors)?);
    let fit: LatentFit =
        if opts.fixed_theta { model.condition(&scenario.theta())? } else { fit_map(&model, &scenario.theta(), &opts.fit)? };

    let held: Vec<&crate::model::Observation> = data.observed.observations().iter().filter(|o| o.support == tsupport).collect();
    let popts = PredictOptions::default();
    let (mut values, mut medians, mut lo, mut hi) = (vec![], vec![], vec![], vec![]);
    for o in &held {
        let p = predict_support(&fit, tsupport, YearTag::Observed(o.year), Noise::Areal(o.scale), &popts)?;
        values.push(o.value);
        medians.push(p.mean);
        lo.push(p.lo);
        hi.push(p.hi);
    }
    let future = predict_support(&fit, tsupport, YearTag::Future, Noise::None, &popts)?;
    let fut: Vec<f64> = data.future.observations().iter().filter(|o| o.support == tsupport).map(|o| o.value).collect();
    let future_rmse = if fut.is_empty() {
        f64::NAN
    } else {
        (fut.iter().map(|v| (v - future.mean).powi(2)).sum::<f64>() / fut.len() as f64).sqrt()
    };
    Ok(ClimateRecord {
        climate,
        target: g.catchments()[target].id().to_string(),
        gauged_years,
        values,
        medians,
        lo,
        hi,
        future_rmse,
        theta_map: fit.theta_map.natural(),
    })
}

/// Runs every climate of a scenario for every target at one gauging level.
pub fn run_scenario(layout: &SimLayout, scenario: &SimScenario, gauged: usize, opts: &SimOptions) -> Result<SimResult> {
    scenario.validate()?;
    let jobs: Vec<(usize, usize)> = (0..scenario.climates).flat_map(|c| layout.targets.iter().map(move |&t| (c, t))).collect();
    let outcomes: Vec<Result<ClimateRecord>> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let data = simulate_dataset(&layout.geometry, scenario, c)?;
            run_target(layout, scenario, &data, c, t, gauged, opts)
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = 0;
    for (o, (c, t)) in outcomes.into_iter().zip(&jobs) {
        match o {
            Ok(r) => records.push(r),
            Err(e) => {
                failures += 1;
                log::warn!("scenario {} climate {c} target {t} failed: {e}", scenario.id);
            }
        }
    }
    if records.is_empty() {
        return Err(Error::Degenerate(format!("every fit of scenario {} failed", scenario.id)));
    }
    let n_values: usize = records.iter().map(|r| r.values.len()).sum();
    let coverage = records.iter().map(|r| r.covered()).sum::<usize>() as f64 / n_values as f64;
    let bias_probability = systematic_bias_probability(&records)?;
    Ok(SimResult {
        scenario: scenario.id,
        gauged,
        climate_ratio: scenario.climate_ratio(),
        coverage,
        bias_probability,
        failures,
        records,
    })
}
