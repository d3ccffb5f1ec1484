use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use runoff_lgm::evaluation::{run_t1, run_t2, run_t3g, run_t3u, DriverOptions, ScoreReport};
use runoff_lgm::io::{self, Metadata, Needs, RunConfig, StudyData};
use runoff_lgm::kriging::run_topkriging_cv;
use runoff_lgm::model::{Design, Support};
use runoff_lgm::prediction::{predict_grid, predict_support, Noise, PredictOptions, YearTag};
use runoff_lgm::simstudy::{run_scenario, sim_mesh_settings, synthetic_layout, table3, SimOptions};
use runoff_lgm::{Error, Result};

/// Runoff interpolation with a two-field latent Gaussian model.
/// Set RUNOFF_THREADS to limit the worker threads.
#[derive(Parser)]
#[command(name = "runoff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// P, A or P+A.
    #[arg(long)]
    design: Option<Design>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to all data and report hyperparameter quantiles.
    Fit(Common),
    /// Fit and predict every catchment in observed and future years.
    Predict(Common),
    /// Leave-one-catchment-out cross-validation.
    Cv(Common),
    /// Future-year prediction for ungauged catchments.
    Future(Common),
    /// Future-year prediction with a short record of the target catchment.
    Shortrec(Common),
    /// Simulation study for one scenario of the built-in table.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Scenario number 1..=9.
        #[arg(long)]
        scenario: usize,
        #[arg(long)]
        climates: Option<usize>,
    },
    /// Top-Kriging cross-validation baseline.
    Baseline(Common),
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if let Some(d) = c.design {
        cfg.design = d;
    }
    if let Some(o) = &c.out {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn driver(cfg: &RunConfig) -> DriverOptions {
    DriverOptions { fit: cfg.fit.options(false), priors: cfg.priors, theta0: None }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let p = io::write_file(dir, name, text)?;
    log::info!("wrote {}", p.display());
    Ok(())
}

fn write_scores(cfg: &RunConfig, meta: &Metadata, method: &str, stem: &str, report: &ScoreReport) -> Result<()> {
    write(&cfg.output, &format!("{stem}.csv"), &io::scores_csv(meta, method, report))?;
    write(&cfg.output, &format!("{stem}.json"), &io::json_document(meta, report)?)?;
    let mut s = String::new();
    writeln!(
        s,
        "{stem}: mean RMSE {:.4}, mean CRPS {:.4}, coverage {:.3}",
        report.mean_rmse, report.mean_crps, report.pooled_coverage
    )
    .unwrap();
    print!("{s}");
    Ok(())
}

fn study(cfg: &RunConfig, needs: Needs) -> Result<StudyData> {
    cfg.validate(Needs { data: true, ..needs })?;
    cfg.load_study()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(c) => {
            let cfg = load_config(&c)?;
            let s = study(&cfg, Needs::default())?;
            let meta = Metadata::new(&cfg, "fit");
            let (report, _) = run_t1(&s.dataset, cfg.design, &DriverOptions { fit: cfg.fit.options(true), ..driver(&cfg) })?;
            write(&cfg.output, "fit.json", &io::json_document(&meta, &report)?)?;
            write(&cfg.output, "fit.csv", &io::fit_csv(&meta, &report.summary))?;
            println!(
                "fit ({}): log posterior {:.4}, converged {}",
                cfg.design.tag(),
                report.summary.log_posterior,
                report.summary.converged
            );
        }
        Command::Predict(c) => {
            let cfg = load_config(&c)?;
            let s = study(&cfg, Needs::default())?;
            let meta = Metadata::new(&cfg, "predict");
            let (_, fit) = run_t1(&s.dataset, cfg.design, &driver(&cfg))?;
            let g = fit.geometry();
            let popts = PredictOptions::default();
            let mut preds = Vec::new();
            for k in 0..g.catchments().len() {
                for j in 0..s.years.len() {
                    preds.push(predict_support(&fit, Support::Catchment(k), YearTag::Observed(j), Noise::None, &popts)?);
                }
                preds.push(predict_support(&fit, Support::Catchment(k), YearTag::Future, Noise::None, &popts)?);
            }
            let negative = preds.iter().filter(|p| p.is_negative()).count();
            if negative > 0 {
                log::warn!("{negative} negative predicted means");
            }
            write(&cfg.output, "predictions.csv", &io::predictions_csv(&meta, "lgm", &preds, Some(&s.years)))?;
            if let Some(spacing) = cfg.raster_spacing {
                let r = predict_grid(&fit, spacing, YearTag::Future)?;
                write(&cfg.output, "future_mean.asc", &io::raster_text(&meta, &r.to_ascii_grid(|p| p.mean)))?;
                write(&cfg.output, "future_sd.asc", &io::raster_text(&meta, &r.to_ascii_grid(|p| p.sd_process)))?;
            }
            println!("predict: {} predictions ({negative} negative)", preds.len());
        }
        Command::Cv(c) => {
            let cfg = load_config(&c)?;
            let s = study(&cfg, Needs::default())?;
            let report = run_t2(&s.dataset, cfg.design, &driver(&cfg))?;
            write_scores(&cfg, &Metadata::new(&cfg, "cv"), "lgm", "cv_scores", &report)?;
        }
        Command::Future(c) => {
            let cfg = load_config(&c)?;
            let s = study(&cfg, Needs { future: true, ..Needs::default() })?;
            let report = run_t3u(&s.dataset, cfg.design, &driver(&cfg))?;
            write_scores(&cfg, &Metadata::new(&cfg, "future"), "lgm", "future_scores", &report)?;
        }
        Command::Shortrec(c) => {
            let cfg = load_config(&c)?;
            let s = study(&cfg, Needs { future: true, seed: true, ..Needs::default() })?;
            let seed = cfg.seed.expect("validated");
            let report = run_t3g(&s.dataset, cfg.design, cfg.plan.short_record, cfg.plan.repeats, seed, &driver(&cfg))?;
            write_scores(&cfg, &Metadata::new(&cfg, "shortrec"), "lgm", "shortrec_scores", &report)?;
        }
        Command::Simulate { common, scenario, climates } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = climates {
                cfg.simulation.climates = n;
            }
            let found = table3().into_iter().find(|s| s.id == scenario);
            let mut problems = cfg.problems(Needs { seed: true, ..Needs::default() });
            if found.is_none() {
                problems.insert(0, format!("unknown scenario {scenario} (expected 1..=9)"));
            }
            if !problems.is_empty() {
                return Err(Error::Config(problems.join("; ")));
            }
            let mut sc = found.expect("checked");
            sc.climates = cfg.simulation.climates;
            sc.seed = cfg.seed.expect("validated");
            let layout = synthetic_layout(&sim_mesh_settings())?;
            let opts = SimOptions { fit: cfg.fit.options(false), fixed_theta: cfg.simulation.fixed_theta, priors: cfg.priors };
            let res = run_scenario(&layout, &sc, cfg.simulation.gauged, &opts)?;
            let meta = Metadata::new(&cfg, &format!("simulate --scenario {scenario}"));
            let stem = format!("sim_scenario{scenario}_gauged{}", cfg.simulation.gauged);
            write(&cfg.output, &format!("{stem}.json"), &io::json_document(&meta, &res)?)?;
            let mut csv = meta.comment_header("#");
            csv.push_str("climate,target,year,value,median,lo,hi,covered\n");
            for r in &res.records {
                for i in 0..r.values.len() {
                    let covered = r.lo[i] <= r.values[i] && r.values[i] <= r.hi[i];
                    writeln!(
                        csv,
                        "{},{},{i},{:.6},{:.6},{:.6},{:.6},{covered}",
                        r.climate, r.target, r.values[i], r.medians[i], r.lo[i], r.hi[i]
                    )
                    .unwrap();
                }
            }
            write(&cfg.output, &format!("{stem}.csv"), &csv)?;
            println!(
                "scenario {scenario}: ratio {:.3}, coverage {:.3}, systematic-bias probability {:.3}, failures {}",
                res.climate_ratio, res.coverage, res.bias_probability, res.failures
            );
        }
        Command::Baseline(c) => {
            let mut cfg = load_config(&c)?;
            cfg.design = Design::Areal;
            let s = study(&cfg, Needs::default())?;
            let report = run_topkriging_cv(&s.dataset, &cfg.baseline.default_variogram)?;
            let meta = Metadata::new(&cfg, "baseline");
            write_scores(&cfg, &meta, "topkriging", "baseline_scores", &report)?;
            let preds: Vec<_> = report.catchments.iter().flat_map(|c| c.predictions.iter().cloned()).collect();
            write(&cfg.output, "baseline_predictions.csv", &io::predictions_csv(&meta, "topkriging", &preds, Some(&s.years)))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = std::env::var("RUNOFF_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not set thread count: {e}");
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
