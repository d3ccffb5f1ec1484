//! Scoring rules and the experiment drivers: full fit (T1), leave-one-out
//! cross-validation (T2), ungauged future prediction (T3u) and future
//! prediction with a short record (T3g).

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::inference::{fit_map, FitOptions, FitSummary, LatentFit, MarginalModel};
use crate::model::{Design, Hyperparameters, ModelGeometry, Observation, ObservationSet, Support};
use crate::prediction::{predict_support, Noise, PredictOptions, Prediction, YearTag};
use crate::priors::PriorConfig;
use crate::simstudy::derived_seed;

pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("RMSE of an empty list".into()));
    }
    Ok((pairs.iter().map(|(p, o)| (p - o).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt())
}

/// CRPS of `N(mean, sd²)` for observation `y`:
/// `σ [z (2Φ(z) − 1) + 2φ(z) − 1/√π]`, and `|y − μ|` when `σ = 0`.
pub fn crps_gaussian(mean: f64, sd: f64, y: f64) -> f64 {
    assert!(sd >= 0.0, "sd must be non-negative");
    if sd == 0.0 {
        return (y - mean).abs();
    }
    let n = Normal::standard();
    let z = (y - mean) / sd;
    sd * (z * (2.0 * n.cdf(z) - 1.0) + 2.0 * n.pdf(z) - 1.0 / std::f64::consts::PI.sqrt())
}

/// Fraction of observations inside their `(lo, hi)` interval.
pub fn coverage(intervals: &[(f64, f64)], observed: &[f64]) -> Result<f64> {
    if intervals.len() != observed.len() {
        return Err(Error::Dimension(format!("{} intervals for {} observations", intervals.len(), observed.len())));
    }
    if observed.is_empty() {
        return Err(Error::InvalidInput("coverage of an empty list".into()));
    }
    let inside = intervals.iter().zip(observed).filter(|((lo, hi), y)| lo <= *y && *y <= hi).count();
    Ok(inside as f64 / observed.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    T1,
    T2,
    T3u,
    T3g,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub design: Design,
    pub test: TestKind,
    pub short_record: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        match self.test {
            TestKind::T3u if self.short_record != 0 => Err(Error::Config("T3u uses a short record of length 0".into())),
            TestKind::T3g if self.short_record == 0 || self.short_record > 10 => {
                Err(Error::Config(format!("T3g needs a short record of 1..=10 years, got {}", self.short_record)))
            }
            _ if self.repeats == 0 => Err(Error::Config("repeats must be at least 1".into())),
            _ => Ok(()),
        }
    }
}

/// Observations of a study: point and areal data for the fitting years and
/// held-out areal data for future years. Point data reads are counted.
#[derive(Debug)]
pub struct Dataset {
    geometry: Arc<ModelGeometry>,
    points: ObservationSet,
    areal: ObservationSet,
    future: ObservationSet,
    point_reads: AtomicUsize,
}

impl Dataset {
    pub fn new(geometry: Arc<ModelGeometry>, observed: ObservationSet, future: ObservationSet) -> Result<Self> {
        for o in observed.observations().iter().chain(future.observations()) {
            geometry.check_support(o.support)?;
        }
        if future.observations().iter().any(|o| o.support.is_point()) {
            return Err(Error::InvalidInput("future observations must be areal".into()));
        }
        Ok(Self {
            geometry,
            points: observed.filtered(|o| o.support.is_point()),
            areal: observed.filtered(|o| !o.support.is_point()),
            future,
            point_reads: AtomicUsize::new(0),
        })
    }

    pub fn geometry(&self) -> &Arc<ModelGeometry> {
        &self.geometry
    }

    pub fn n_years(&self) -> usize {
        self.areal.n_years().max(self.points.n_years())
    }

    pub fn areal(&self) -> &ObservationSet {
        &self.areal
    }

    pub fn future(&self) -> &ObservationSet {
        &self.future
    }

    pub fn points(&self) -> &ObservationSet {
        self.point_reads.fetch_add(1, Ordering::Relaxed);
        &self.points
    }

    pub fn point_reads(&self) -> usize {
        self.point_reads.load(Ordering::Relaxed)
    }

    /// Observations of the design, optionally dropping some areal ones.
    pub fn design_observations(&self, design: Design, keep_areal: impl Fn(&Observation) -> bool) -> Result<ObservationSet> {
        let mut out = ObservationSet::new(self.n_years());
        if design != Design::Areal {
            out.extend(self.points())?;
        }
        if design != Design::Points {
            out.extend(&self.areal.filtered(|o| keep_areal(o)))?;
        }
        Ok(out)
    }

    /// Catchments with at least one observed areal value.
    pub fn observed_catchments(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .areal
            .observations()
            .iter()
            .filter_map(|o| match o.support {
                Support::Catchment(k) => Some(k),
                Support::Site(_) => None,
            })
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[derive(Clone, Debug)]
pub struct DriverOptions {
    pub fit: FitOptions,
    pub priors: PriorConfig,
    /// Starting point of every fit; the model's default when absent.
    pub theta0: Option<Hyperparameters>,
}

impl Default for DriverOptions {
    fn default() -> Self {
        Self { fit: FitOptions { quantiles: false, ..FitOptions::default() }, priors: PriorConfig::default(), theta0: None }
    }
}

fn fit(data: &Dataset, obs: ObservationSet, opts: &DriverOptions) -> Result<LatentFit> {
    if obs.is_empty() {
        return Err(Error::InvalidInput("design has no observations".into()));
    }
    let model = Arc::new(MarginalModel::new(Arc::clone(&data.geometry), obs, opts.priors)?);
    let start = opts.theta0.unwrap_or_else(|| model.default_start());
    fit_map(&model, &start, &opts.fit)
}

#[derive(Clone, Debug, Serialize)]
pub struct T1Report {
    pub design: Design,
    pub summary: FitSummary,
}

/// Fits the design to all fitting-period observations.
pub fn run_t1(data: &Dataset, design: Design, opts: &DriverOptions) -> Result<(T1Report, LatentFit)> {
    let obs = data.design_observations(design, |_| true)?;
    let mut o = opts.clone();
    o.fit.quantiles = true;
    let f = fit(data, obs, &o)?;
    Ok((T1Report { design, summary: f.summary() }, f))
}

#[derive(Clone, Debug, Serialize)]
pub struct CatchmentScore {
    pub catchment: String,
    pub n: usize,
    pub rmse: f64,
    pub crps: f64,
    pub coverage: f64,
    pub failed: bool,
    pub predictions: Vec<Prediction>,
    pub observed: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScoreReport {
    pub test: TestKind,
    pub design: Design,
    pub short_record: usize,
    pub catchments: Vec<CatchmentScore>,
    pub mean_rmse: f64,
    pub mean_crps: f64,
    pub mean_coverage: f64,
    /// Coverage over all predictions pooled.
    pub pooled_coverage: f64,
    pub failed_folds: Vec<String>,
}

pub(crate) fn score(catchment: String, preds: Vec<Prediction>, observed: Vec<f64>) -> Result<CatchmentScore> {
    let pairs: Vec<(f64, f64)> = preds.iter().map(|p| p.mean).zip(observed.iter().copied()).collect();
    let crps = preds.iter().zip(&observed).map(|(p, y)| crps_gaussian(p.mean, p.sd_predictive, *y)).sum::<f64>()
        / observed.len().max(1) as f64;
    let cov = coverage(&preds.iter().map(|p| (p.lo, p.hi)).collect::<Vec<_>>(), &observed)?;
    Ok(CatchmentScore {
        catchment,
        n: observed.len(),
        rmse: rmse(&pairs)?,
        crps,
        coverage: cov,
        failed: false,
        predictions: preds,
        observed,
    })
}

fn failed_score(catchment: String) -> CatchmentScore {
    CatchmentScore {
        catchment,
        n: 0,
        rmse: f64::NAN,
        crps: f64::NAN,
        coverage: f64::NAN,
        failed: true,
        predictions: Vec::new(),
        observed: Vec::new(),
    }
}

pub(crate) fn aggregate(test: TestKind, design: Design, short_record: usize, catchments: Vec<CatchmentScore>) -> ScoreReport {
    let ok: Vec<&CatchmentScore> = catchments.iter().filter(|c| !c.failed).collect();
    let mean = |f: &dyn Fn(&CatchmentScore) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|c| f(c)).sum::<f64>() / ok.len() as f64
        }
    };
    let n: usize = ok.iter().map(|c| c.n).sum();
    let inside: f64 = ok.iter().map(|c| c.coverage * c.n as f64).sum();
    let failed_folds: Vec<String> = catchments.iter().filter(|c| c.failed).map(|c| c.catchment.clone()).collect();
    if !failed_folds.is_empty() {
        log::warn!("{} fold(s) failed and are excluded from the averages: {failed_folds:?}", failed_folds.len());
    }
    ScoreReport {
        test,
        design,
        short_record,
        mean_rmse: mean(&|c| c.rmse),
        mean_crps: mean(&|c| c.crps),
        mean_coverage: mean(&|c| c.coverage),
        pooled_coverage: if n > 0 { inside / n as f64 } else { f64::NAN },
        catchments,
        failed_folds,
    }
}

/// One cross-validation fold: fit without (or, as a control, with) the
/// catchment's areal data and predict its observed years.
pub fn cross_validation_fold(
    data: &Dataset,
    design: Design,
    catchment: usize,
    drop: bool,
    opts: &DriverOptions,
) -> Result<CatchmentScore> {
    let target = Support::Catchment(catchment);
    let obs = data.design_observations(design, |o| !drop || o.support != target)?;
    let f = fit(data, obs, opts)?;
    let held: Vec<Observation> = data.areal.observations().iter().filter(|o| o.support == target).copied().collect();
    let popts = PredictOptions::default();
    let preds = held
        .iter()
        .map(|o| predict_support(&f, target, YearTag::Observed(o.year), Noise::Areal(o.scale), &popts))
        .collect::<Result<Vec<_>>>()?;
    score(data.geometry.catchments()[catchment].id().to_string(), preds, held.iter().map(|o| o.value).collect())
}

/// Leave-one-catchment-out cross-validation over the fitting years.
pub fn run_t2(data: &Dataset, design: Design, opts: &DriverOptions) -> Result<ScoreReport> {
    let targets = data.observed_catchments();
    if targets.len() < 2 {
        return Err(Error::InvalidInput("cross-validation needs at least two observed catchments".into()));
    }
    let scores: Vec<CatchmentScore> = targets
        .par_iter()
        .map(|&k| {
            let id = data.geometry.catchments()[k].id().to_string();
            cross_validation_fold(data, design, k, true, opts).unwrap_or_else(|e| {
                log::warn!("T2 fold {id} failed: {e}");
                failed_score(id)
            })
        })
        .collect();
    Ok(aggregate(TestKind::T2, design, 0, scores))
}

/// Future-year scores for one catchment given `years` of its record.
fn future_fold(
    data: &Dataset,
    design: Design,
    catchment: usize,
    years: &[usize],
    opts: &DriverOptions,
) -> Result<CatchmentScore> {
    let target = Support::Catchment(catchment);
    let obs = data.design_observations(design, |o| o.support != target || years.contains(&o.year))?;
    let f = fit(data, obs, opts)?;
    let fut: Vec<Observation> = data.future.observations().iter().filter(|o| o.support == target).copied().collect();
    if fut.is_empty() {
        return Err(Error::InvalidInput(format!("no future observations for catchment {catchment}")));
    }
    let popts = PredictOptions::default();
    let preds = fut
        .iter()
        .map(|o| predict_support(&f, target, YearTag::Future, Noise::Areal(o.scale), &popts))
        .collect::<Result<Vec<_>>>()?;
    score(data.geometry.catchments()[catchment].id().to_string(), preds, fut.iter().map(|o| o.value).collect())
}

fn future_targets(data: &Dataset) -> Vec<usize> {
    let mut v: Vec<usize> = data
        .future
        .observations()
        .iter()
        .filter_map(|o| match o.support {
            Support::Catchment(k) => Some(k),
            Support::Site(_) => None,
        })
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Future prediction for each catchment without any of its own data.
pub fn run_t3u(data: &Dataset, design: Design, opts: &DriverOptions) -> Result<ScoreReport> {
    let targets = future_targets(data);
    if targets.is_empty() {
        return Err(Error::InvalidInput("no held-out future observations".into()));
    }
    let scores: Vec<CatchmentScore> = targets
        .par_iter()
        .map(|&k| {
            let id = data.geometry.catchments()[k].id().to_string();
            future_fold(data, design, k, &[], opts).unwrap_or_else(|e| {
                log::warn!("T3u fold {id} failed: {e}");
                failed_score(id)
            })
        })
        .collect();
    Ok(aggregate(TestKind::T3u, design, 0, scores))
}

/// Year subsets used by T3g for one catchment, one per repeat.
pub fn short_record_subsets(
    available: &[usize],
    i: usize,
    repeats: usize,
    seed: u64,
    catchment: usize,
) -> Result<Vec<Vec<usize>>> {
    if i > available.len() {
        return Err(Error::InvalidInput(format!("short record of {i} years exceeds the {} available", available.len())));
    }
    if i == available.len() {
        return Ok(vec![available.to_vec()]);
    }
    Ok((0..repeats)
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(seed, &[catchment as u64, rep as u64]));
            let mut ys: Vec<usize> = sample(&mut rng, available.len(), i).into_iter().map(|k| available[k]).collect();
            ys.sort_unstable();
            ys
        })
        .collect())
}

/// Future prediction for each catchment given `i` randomly drawn years of
/// its own record, averaged over repeats. `i = 0` is T3u.
pub fn run_t3g(data: &Dataset, design: Design, i: usize, repeats: usize, seed: u64, opts: &DriverOptions) -> Result<ScoreReport> {
    if i == 0 {
        return run_t3u(data, design, opts);
    }
    if design == Design::Points {
        return Err(Error::InvalidInput("T3g adds areal observations; use design A or P+A".into()));
    }
    let targets = future_targets(data);
    let mut jobs = Vec::new();
    for &k in &targets {
        let mut avail: Vec<usize> =
            data.areal.observations().iter().filter(|o| o.support == Support::Catchment(k)).map(|o| o.year).collect();
        avail.sort_unstable();
        for ys in short_record_subsets(&avail, i, repeats, seed, k)? {
            jobs.push((k, ys));
        }
    }
    let results: Vec<(usize, Result<CatchmentScore>)> =
        jobs.par_iter().map(|(k, ys)| (*k, future_fold(data, design, *k, ys, opts))).collect();
    let mut scores = Vec::new();
    for &k in &targets {
        let id = data.geometry.catchments()[k].id().to_string();
        let mine: Vec<&Result<CatchmentScore>> = results.iter().filter(|r| r.0 == k).map(|r| &r.1).collect();
        let ok: Vec<&CatchmentScore> = mine.iter().filter_map(|r| r.as_ref().ok()).collect();
        for r in mine.iter().filter_map(|r| r.as_ref().err()) {
            log::warn!("T3g repeat for {id} failed: {r}");
        }
        if ok.is_empty() {
            scores.push(failed_score(id));
            continue;
        }
        let nrep = ok.len() as f64;
        let preds: Vec<Prediction> = ok.iter().flat_map(|s| s.predictions.iter().cloned()).collect();
        let observed: Vec<f64> = ok.iter().flat_map(|s| s.observed.iter().copied()).collect();
        scores.push(CatchmentScore {
            catchment: id,
            n: observed.len(),
            rmse: ok.iter().map(|s| s.rmse).sum::<f64>() / nrep,
            crps: ok.iter().map(|s| s.crps).sum::<f64>() / nrep,
            coverage: ok.iter().map(|s| s.coverage).sum::<f64>() / nrep,
            failed: false,
            predictions: preds,
            observed,
        });
    }
    Ok(aggregate(TestKind::T3g, design, i, scores))
}
