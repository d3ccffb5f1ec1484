//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset: `cargo test --test acceptance -- 2 9`.

mod common;

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};

use common::{dense_log_marginal_posterior, dense_model, random_case, simpson};
use runoff_lgm::evaluation::crps_gaussian;
use runoff_lgm::geometry::{fem_matrices, Catchment, GridLattice, MeshSettings, Point2D, Polygon, TriangleMesh};
use runoff_lgm::inference::{fit_map, FitOptions, LatentFit, MarginalModel};
use runoff_lgm::io::RunConfig;
use runoff_lgm::kriging::{fit_variogram, krige, VariogramModel};
use runoff_lgm::model::{ModelGeometry, ObservationSet, Site, Support};
use runoff_lgm::prediction::{predict_support, Noise, PredictOptions, YearTag};
use runoff_lgm::priors::{pc_matern_logpdf, pc_precision_logpdf, PcMaternSpec, PcPrecisionSpec, PriorConfig};
use runoff_lgm::simstudy::{
    run_scenario, sim_catchments, sim_mesh_settings, simulate_dataset, synthetic_layout, table3, ClimateRecord, SimOptions,
    SimResult,
};
use runoff_lgm::spde::{MaternParams, PrecisionTemplate};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

// 1. dense-oracle equivalence

fn criterion_1() -> Outcome {
    let (mut worst_lmp, mut worst_fun) = (0.0f64, 0.0f64);
    let n = 8;
    for seed in 0..n {
        let case = random_case(1000 + seed);
        assert!(case.geometry.m() <= 50 && case.obs.n_years() <= 3);
        let model = case.model();
        let ours = model.log_marginal_posterior(&case.theta);
        let oracle = dense_log_marginal_posterior(&case.geometry, &case.obs, &case.theta, &PriorConfig::default());
        worst_lmp = worst_lmp.max(rel(ours, oracle));
        let fit = model.condition(&case.theta).unwrap();
        let dense = dense_model(&case.geometry, &case.obs, &case.theta, &PriorConfig::default());
        for k in 0..4 {
            let a = case.functional(seed * 31 + k);
            let (m, s) = fit.latent_functional(&a).unwrap();
            let (mo, so) = dense.functional(&a);
            let scale = a.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            worst_fun = worst_fun.max((m - mo).abs() / mo.abs().max(scale)).max(rel(s, so));
        }
    }
    outcome(
        worst_lmp < 1e-6 && worst_fun < 1e-8,
        format!("{n} systems: max rel error log posterior {worst_lmp:.2e} (tol 1e-6), functionals {worst_fun:.2e} (tol 1e-8)"),
    )
}

// 2. SPDE fidelity

fn criterion_2() -> Outcome {
    let (rho, sigma, h, cells) = (20.0, 1.0, 1.0, 160);
    let mesh = TriangleMesh::regular_grid(Point2D::new(0.0, 0.0), cells, cells, h).unwrap();
    let fem = fem_matrices(&mesh).unwrap();
    let factor = PrecisionTemplate::new(&fem).unwrap().factor(&MaternParams::new(rho, sigma).unwrap()).unwrap();
    let idx = |i: usize, j: usize| j * (cells + 1) + i;
    let centre = idx(cells / 2, cells / 2);
    let mut e = vec![0.0; mesh.n_vertices()];
    e[centre] = 1.0;
    let col = factor.solve(&e);
    let var_c = col[centre];
    let off = (rho / h).round() as usize;
    let mut corrs = Vec::new();
    for (i, j) in
        [(cells / 2 + off, cells / 2), (cells / 2 - off, cells / 2), (cells / 2, cells / 2 + off), (cells / 2, cells / 2 - off)]
    {
        let mut e = vec![0.0; mesh.n_vertices()];
        e[idx(i, j)] = 1.0;
        let var_o = factor.solve(&e)[idx(i, j)];
        corrs.push(col[idx(i, j)] / (var_c * var_o).sqrt());
    }
    let corr = corrs.iter().sum::<f64>() / corrs.len() as f64;
    // interior: farther than ρ from the boundary
    let mut worst_var = 0.0f64;
    for (i, j) in [(cells / 2, cells / 2), (30, 30), (130, 40), (45, 120), (110, 110)] {
        let mut e = vec![0.0; mesh.n_vertices()];
        e[idx(i, j)] = 1.0;
        worst_var = worst_var.max(rel(factor.solve(&e)[idx(i, j)], sigma * sigma));
    }
    let pass = (corr - 0.10).abs() <= 0.02 && worst_var <= 0.15;
    outcome(
        pass,
        format!(
            "{}×{} mesh, h={h} km, ρ={rho}: correlation at ρ {corr:.4} (target 0.10 ± 0.02; continuous Matérn ν=1 gives √8·K₁(√8) = 0.1397), interior variance max rel error {worst_var:.3} (tol 0.15)",
            cells + 1,
            cells + 1
        ),
    )
}

// 3. prior calibration by quadrature

fn log_simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    // ∫ f(x) dx over [e^lo, e^hi] with x = e^v
    simpson(|v| f(v.exp()) * v.exp(), lo, hi, n)
}

fn criterion_3() -> Outcome {
    let p = PriorConfig::default();
    let field = p.climate;
    let joint = |rho: f64, sigma: f64, spec: &PcMaternSpec| pc_matern_logpdf(&MaternParams { rho, sigma }, spec).unwrap().exp();
    // Prob(ρ < 10) and Prob(σ > 2) from the joint density
    let n = 1200;
    let sigma_marg = |spec: PcMaternSpec, rho: f64| log_simpson(|s| joint(rho, s, &spec), -30.0, 80f64.ln(), n);
    let p_rho = log_simpson(|r| sigma_marg(field, r), -8.0, 10f64.ln(), n);
    let rho_marg = |spec: PcMaternSpec, s: f64| log_simpson(|r| joint(r, s, &spec), -8.0, 1e7f64.ln(), n);
    let p_sigma = log_simpson(|s| rho_marg(field, s), 2f64.ln(), 80f64.ln(), n);
    let tail = |spec: PcPrecisionSpec| {
        // Prob(1/√τ > u) = Prob(τ < u⁻²)
        log_simpson(|t| pc_precision_logpdf(t, &spec).unwrap().exp(), -80.0, (spec.u * spec.u).recip().ln(), 40_000)
    };
    let checks = [
        ("P(rho<10)", p_rho, field.alpha_rho),
        ("P(sigma>2)", p_sigma, field.alpha_sigma),
        ("P(1/sqrt(tau_y)>1.5)", tail(p.tau_y), 0.1),
        ("P(1/sqrt(tau_z)>1.5)", tail(p.tau_z), 0.1),
        ("P(1/sqrt(tau_beta)>10)", tail(p.tau_beta), 0.2),
    ];
    assert_eq!((field.u_rho, field.u_sigma, p.tau_y.u, p.tau_beta.u), (10.0, 2.0, 1.5, 10.0));
    let worst = checks.iter().map(|c| (c.1 - c.2).abs()).fold(0.0, f64::max);
    let detail = checks.iter().map(|c| format!("{} = {:.5}", c.0, c.1)).collect::<Vec<_>>().join(", ");
    outcome(worst < 1e-3, format!("{detail}; max abs error {worst:.1e} (tol 1e-3)"))
}

// 4. water balance

/// Simulation layout plus the difference catchments C4∖C3 and C5∖C4.
fn nested_layout() -> (Arc<ModelGeometry>, [usize; 5]) {
    let base = synthetic_layout(&sim_mesh_settings()).unwrap();
    let mut cs = sim_catchments().unwrap();
    let get = |cs: &[Catchment], id: &str| cs.iter().find(|k| k.id() == id).unwrap().clone();
    let (c3, c4, c5) = (get(&cs, "C3"), get(&cs, "C4"), get(&cs, "C5"));
    let lat = *c3.lattice();
    cs.push(Catchment::from_nodes("C4-C3", &c4.nodes_outside(&c3), lat).unwrap());
    cs.push(Catchment::from_nodes("C5-C4", &c5.nodes_outside(&c4), lat).unwrap());
    let g = ModelGeometry::new(base.geometry.mesh().clone(), base.geometry.sites().to_vec(), cs).unwrap();
    let idx = ["C3", "C4", "C5", "C4-C3", "C5-C4"].map(|id| g.catchment_index(id).unwrap());
    (g, idx)
}

fn water_balance_error(fit: &LatentFit, idx: &[usize; 5]) -> f64 {
    let g = fit.geometry();
    let n = |k: usize| g.catchments()[k].n_nodes() as f64;
    let mut worst = 0.0f64;
    let years = (0..fit.layout().r).map(YearTag::Observed).chain([YearTag::Future]);
    for year in years {
        let p = |k| predict_support(fit, Support::Catchment(k), year, Noise::None, &PredictOptions::default()).unwrap().mean;
        for (big, small, rest) in [(idx[1], idx[0], idx[3]), (idx[2], idx[1], idx[4])] {
            let lhs = p(big);
            let rhs = n(small) / n(big) * p(small) + (n(big) - n(small)) / n(big) * p(rest);
            worst = worst.max((lhs - rhs).abs() / lhs.abs());
        }
    }
    worst
}

fn criterion_4() -> Outcome {
    let (g, idx) = nested_layout();
    let mut worst = 0.0f64;
    let mut fits = 0;
    for (set, climate) in [(0usize, 0usize), (2, 1), (6, 2)] {
        let scenario = &table3()[set];
        let data = simulate_dataset(&g, scenario, climate).unwrap();
        for design in [runoff_lgm::model::Design::Areal, runoff_lgm::model::Design::Combined] {
            let obs = data.observed.for_design(design);
            let model = Arc::new(MarginalModel::new(Arc::clone(&g), obs, PriorConfig::default()).unwrap());
            let fit = fit_map(&model, &model.default_start(), &FitOptions { quantiles: false, ..FitOptions::default() }).unwrap();
            worst = worst.max(water_balance_error(&fit, &idx));
            fits += 1;
        }
    }
    outcome(
        worst <= 1e-12,
        format!("{fits} fitted models, C4 = C3 ⊕ C4∖C3 and C5 = C4 ⊕ C5∖C4 in all years: max rel error {worst:.1e}"),
    )
}

// 5. CRPS oracle

fn crps_integral(mean: f64, sd: f64, y: f64) -> f64 {
    let d = Normal::new(mean, sd).unwrap();
    let (lo, hi) = (mean - 40.0 * sd - y.abs(), mean + 40.0 * sd + y.abs());
    simpson(|x| d.cdf(x).powi(2), lo, y, 40_000) + simpson(|x| (1.0 - d.cdf(x)).powi(2), y, hi, 40_000)
}

fn criterion_5() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..=40 {
        let z = -10.0 + 0.5 * k as f64;
        for (m, s) in [(0.0, 1.0), (1.3, 0.4), (-2.0, 2.5)] {
            worst = worst.max((crps_gaussian(m, s, z) - crps_integral(m, s, z)).abs());
        }
    }
    let ten = crps_gaussian(0.0, 1.0, 10.0);
    outcome(
        worst < 1e-6,
        format!("123 (μ, σ, z) triples with z ∈ [−10, 10]: max abs diff {worst:.1e} (tol 1e-6); CRPS(N(0,1), 10) = {ten:.7}"),
    )
}

// 6–8. simulation study

struct Simulations {
    results: HashMap<(usize, usize), SimResult>,
}

impl Simulations {
    fn run() -> Self {
        let layout = synthetic_layout(&sim_mesh_settings()).unwrap();
        let mut results = HashMap::new();
        let opts = SimOptions::default();
        for gauged in [0, 1] {
            for s in table3() {
                let mut s = s;
                s.climates = if gauged == 0 && [1, 3, 6].contains(&s.id) { 50 } else { 20 };
                let t = Instant::now();
                let r = run_scenario(&layout, &s, gauged, &opts).unwrap();
                eprintln!(
                    "  set {} gauged {gauged}: {} climates, coverage {:.3}, bias probability {:.3}, failures {} ({:.0} s)",
                    s.id,
                    s.climates,
                    r.coverage,
                    r.bias_probability,
                    r.failures,
                    t.elapsed().as_secs_f64()
                );
                results.insert((s.id, gauged), r);
            }
        }
        Self { results }
    }

    fn records(&self, set: usize, gauged: usize, climates: usize) -> Vec<&ClimateRecord> {
        self.results[&(set, gauged)].records.iter().filter(|r| r.climate < climates).collect()
    }
}

fn coverage(records: &[&ClimateRecord]) -> f64 {
    let n: usize = records.iter().map(|r| r.values.len()).sum();
    records.iter().map(|r| r.covered()).sum::<usize>() as f64 / n as f64
}

fn criterion_6(sims: &Simulations) -> Outcome {
    let mut rows = Vec::new();
    let mut pass = true;
    for gauged in [0, 1] {
        for set in 1..=9 {
            let recs = sims.records(set, gauged, 20);
            let c = coverage(&recs);
            let failures = 40 - recs.len();
            pass &= (0.90..=0.99).contains(&c) && failures == 0;
            rows.push(format!("{set}/{gauged}:{c:.3}"));
        }
    }
    outcome(pass, format!("20 climates, coverage by set/gauged ∈ [0.90, 0.99]: {}", rows.join(" ")))
}

fn criterion_7(sims: &Simulations) -> Outcome {
    let p = |set: usize| {
        let recs: Vec<ClimateRecord> = sims.records(set, 0, 50).into_iter().cloned().collect();
        runoff_lgm::simstudy::systematic_bias_probability(&recs).unwrap()
    };
    let (p1, p3, p6, p9) = (p(1), p(3), p(6), sims.results[&(9, 0)].bias_probability);
    let analytic = 2.0 * 0.5f64.powi(10);
    // Monte Carlo of ten independent values around their median
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let trials = 2_000_000;
    let hits = (0..trials)
        .filter(|_| {
            let signs: Vec<bool> = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal) > 0.0).collect();
            signs.iter().all(|&s| s) || signs.iter().all(|&s| !s)
        })
        .count();
    let mc = hits as f64 / trials as f64;
    let ratios = table3().iter().map(|s| s.climate_ratio()).collect::<Vec<_>>();
    assert!((ratios[2] - 0.1233).abs() < 1e-3 && (ratios[5] - 0.1233).abs() < 1e-3);
    let pass = (0.45..=0.85).contains(&p1)
        && p3 <= 0.05
        && p6 <= 0.05
        && (analytic - 0.001953125).abs() < 1e-12
        && (mc - analytic).abs() < 2e-4;
    outcome(
        pass,
        format!(
            "50 climates, ungauged: set 1 {p1:.3} (∈ [0.45, 0.85]), set 3 {p3:.3}, set 6 {p6:.3} (≤ 0.05); set 9 (20 climates, informational) {p9:.3}; 2·0.5¹⁰ = {analytic:.6}, Monte Carlo {mc:.6}"
        ),
    )
}

fn criterion_8(sims: &Simulations) -> Outcome {
    let g0: HashMap<(usize, String), f64> =
        sims.records(1, 0, 20).into_iter().map(|r| ((r.climate, r.target.clone()), r.future_rmse)).collect();
    let pairs: Vec<(f64, f64)> = sims
        .records(1, 1, 20)
        .into_iter()
        .filter_map(|r| g0.get(&(r.climate, r.target.clone())).map(|&a| (a, r.future_rmse)))
        .collect();
    let n = pairs.len() as u64;
    let wins = pairs.iter().filter(|(a, b)| b < a).count() as u64;
    let ties = pairs.iter().filter(|(a, b)| a == b).count() as u64;
    let m = n - ties;
    // P(X ≥ wins) for X ~ Bin(m, 1/2)
    let p_value = if wins == 0 { 1.0 } else { 1.0 - Binomial::new(0.5, m).unwrap().cdf(wins - 1) };
    let mean0 = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let mean1 = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let climates = pairs.iter().map(|_| ()).count() / 2;
    outcome(
        mean1 < mean0 && p_value < 0.05 && climates >= 20,
        format!("set 1, {n} (climate, target) pairs: mean future RMSE 0 years {mean0:.4}, 1 year {mean1:.4}; 1 year better in {wins}/{m}, sign test p = {p_value:.2e}"),
    )
}

// 9. baseline contrast on a nested scenario

fn criterion_9() -> Outcome {
    let lat = GridLattice::default();
    let rect = |id: &str, x0, y0, x1, y1| Catchment::from_polygons(id, &[Polygon::rectangle(x0, y0, x1, y1)], lat).unwrap();
    let catchments = vec![
        rect("B", 10.5, 10.5, 40.5, 40.5),
        rect("I", 15.5, 15.5, 30.5, 30.5),
        rect("N1", 40.5, 10.5, 55.5, 25.5),
        rect("N2", 10.5, 40.5, 25.5, 55.5),
        rect("N3", -4.5, 20.5, 10.5, 35.5),
        rect("N4", 25.5, -4.5, 40.5, 10.5),
    ];
    // two dry gauges in B∖I, the rest outside B
    let pts = [(13.0, 34.0), (36.0, 20.0), (48.0, 35.0), (3.0, 5.0), (47.0, 3.0), (3.0, 47.0), (30.0, 48.0), (52.0, 48.0)];
    let sites: Vec<Site> =
        pts.iter().enumerate().map(|(k, &(x, y))| Site { id: format!("P{k}"), location: Point2D::new(x, y) }).collect();
    let g = ModelGeometry::build(sites, catchments, &MeshSettings::new(3.0).with_outer_edge(8.0).with_extension(25.0)).unwrap();
    let inner = g.catchment_index("I").unwrap();
    let big = g.catchment_index("B").unwrap();
    let in_inner = |p: &Point2D| (15.5..30.5).contains(&p.x) && (15.5..30.5).contains(&p.y);
    // long-term runoff: 1 m/yr, 3 m/yr inside I
    let f = |p: &Point2D| if in_inner(p) { 3.0 } else { 1.0 };

    let years = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut all = ObservationSet::new(years);
    let mut truth_inner = Vec::new();
    for j in 0..years {
        let beta = 0.15 * rng.sample::<f64, _>(StandardNormal);
        for (s, site) in g.sites().iter().enumerate() {
            let t = f(&site.location) + beta;
            let sd = 0.05 * t;
            all.push_point(s, j, t + sd * rng.sample::<f64, _>(StandardNormal), sd * sd).unwrap();
        }
        for (k, c) in g.catchments().iter().enumerate() {
            let t = c.nodes().iter().map(f).sum::<f64>() / c.n_nodes() as f64 + beta;
            if k == inner {
                truth_inner.push(t);
                continue;
            }
            let sd = 0.03 * t;
            all.push_areal(k, j, t + sd * rng.sample::<f64, _>(StandardNormal), sd * sd).unwrap();
        }
    }
    let model = Arc::new(MarginalModel::new(Arc::clone(&g), all.clone(), PriorConfig::default()).unwrap());
    let fit = fit_map(&model, &model.default_start(), &FitOptions { quantiles: false, ..FitOptions::default() }).unwrap();
    let reproduced = big_catchment_reproduced(&fit, big);

    let default = VariogramModel { nugget: 0.0, sill: 0.1, range: 50.0 };
    let (mut lgm_above, mut krig_above) = (0, 0);
    let (mut lgm_sum, mut krig_sum, mut max_sum) = (0.0, 0.0, 0.0);
    for j in 0..years {
        let year_obs: Vec<_> = all.observations().iter().filter(|o| o.year == j).collect();
        let max_obs = year_obs.iter().map(|o| o.value).fold(f64::NEG_INFINITY, f64::max);
        let lgm = predict_support(&fit, Support::Catchment(inner), YearTag::Observed(j), Noise::None, &PredictOptions::default())
            .unwrap()
            .mean;
        let areal: Vec<(usize, f64)> = year_obs
            .iter()
            .filter_map(|o| match o.support {
                Support::Catchment(k) => Some((k, o.value)),
                Support::Site(_) => None,
            })
            .collect();
        let v = fit_variogram(&areal, g.catchments(), &default).unwrap().model;
        let obs: Vec<(&Catchment, f64)> = areal.iter().map(|&(k, z)| (&g.catchments()[k], z)).collect();
        let kr = krige(&g.catchments()[inner], &obs, &v).unwrap().mean;
        lgm_above += (lgm > max_obs) as usize;
        krig_above += (kr > max_obs) as usize;
        lgm_sum += lgm;
        krig_sum += kr;
        max_sum += max_obs;
    }
    let truth = truth_inner.iter().sum::<f64>() / years as f64;
    let y = years as f64;
    outcome(
        lgm_above == years && krig_above == 0 && reproduced,
        format!(
            "inner catchment held out, {years} years: P+A above the nearby maximum in {lgm_above}/{years} years, Kriging in {krig_above}/{years}; means P+A {:.3}, Kriging {:.3}, nearby max {:.3}, truth {truth:.3}",
            lgm_sum / y,
            krig_sum / y,
            max_sum / y
        ),
    )
}

/// The big catchment's prediction stays close to its own observations.
fn big_catchment_reproduced(fit: &LatentFit, big: usize) -> bool {
    let obs = fit.model().observations();
    obs.observations().iter().filter(|o| o.support == Support::Catchment(big)).all(|o| {
        let p = predict_support(fit, o.support, YearTag::Observed(o.year), Noise::None, &PredictOptions::default()).unwrap();
        (p.mean - o.value).abs() < 3.0 * (p.sd_process + o.scale.sqrt())
    })
}

// 10. CLI determinism

fn run_cli(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_runoff")).current_dir(dir).args(args).output().unwrap();
    assert!(out.status.success(), "runoff {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let layout = synthetic_layout(&sim_mesh_settings()).unwrap();
    let data = simulate_dataset(&layout.geometry, &table3()[0], 0).unwrap();
    runoff_lgm::io::write_simulated_inputs(dir.path(), &layout.geometry, &data, 1990, 42).unwrap();
    let mut cfg = RunConfig::load(&dir.path().join("config.toml")).unwrap();
    cfg.plan.repeats = 2;
    cfg.raster_spacing = Some(10.0);
    fs::write(dir.path().join("config.toml"), cfg.to_toml()).unwrap();
    let commands: [&[&str]; 7] = [
        &["fit"],
        &["predict"],
        &["cv"],
        &["future"],
        &["shortrec"],
        &["baseline"],
        &["simulate", "--scenario", "1", "--climates", "3", "--seed", "7"],
    ];
    let mut files = 0;
    let mut differing = Vec::new();
    for cmd in commands {
        let mut trees = Vec::new();
        for run in ["a", "b"] {
            let out = format!("out_{}_{run}", cmd[0]);
            let mut args: Vec<&str> = cmd.to_vec();
            args.extend(["--config", "config.toml", "--out", &out]);
            run_cli(dir.path(), &args);
            trees.push(read_tree(&dir.path().join(&out)));
        }
        files += trees[0].len();
        if trees[0] != trees[1] || trees[0].is_empty() {
            differing.push(cmd[0]);
        }
    }
    outcome(
        differing.is_empty(),
        format!("7 commands run twice, {files} result files compared byte for byte; differing: {differing:?}"),
    )
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |k: usize| wanted.is_empty() || wanted.contains(&k);
    let mut results: Vec<(usize, Outcome, f64)> = Vec::new();
    let mut timed = |k: usize, f: &dyn Fn() -> Outcome| {
        if run(k) {
            let t = Instant::now();
            let o = f();
            let secs = t.elapsed().as_secs_f64();
            println!("criterion {k:>2}: {} ({secs:.1} s) {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            results.push((k, o, secs));
        }
    };
    timed(1, &criterion_1);
    timed(2, &criterion_2);
    timed(3, &criterion_3);
    timed(4, &criterion_4);
    timed(5, &criterion_5);
    timed(9, &criterion_9);
    timed(10, &criterion_10);
    if run(6) || run(7) || run(8) {
        eprintln!("running the simulation study (this takes a while)");
        let t = Instant::now();
        let sims = Simulations::run();
        eprintln!("simulation study finished in {:.0} s", t.elapsed().as_secs_f64());
        timed(6, &|| criterion_6(&sims));
        timed(7, &|| criterion_7(&sims));
        timed(8, &|| criterion_8(&sims));
    }
    results.sort_by_key(|r| r.0);
    let failed: Vec<usize> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("acceptance: FAILED criteria {failed:?}");
        std::process::exit(1);
    }
}
