//! Ordinary kriging of areal runoff with grid-node averaged exponential
//! covariances, solved independently per year. Used as a baseline.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{aggregate, score, Dataset, ScoreReport, TestKind};
use crate::geometry::{Catchment, Point2D};
use crate::model::{Design, Support};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::prediction::{interval, Prediction, YearTag};

/// Exponential model with the practical-range convention
/// `C(d) = sill · exp(−3d/range)`, plus `nugget` at zero distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariogramModel {
    pub nugget: f64,
    pub sill: f64,
    pub range: f64,
}

impl VariogramModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.nugget >= 0.0 && self.sill > 0.0 && self.range > 0.0) {
            return Err(Error::InvalidInput(format!("invalid variogram {self:?}")));
        }
        Ok(())
    }

    pub fn covariance(&self, d: f64, same_node: bool) -> f64 {
        let c = self.sill * (-3.0 * d / self.range).exp();
        if same_node {
            c + self.nugget
        } else {
            c
        }
    }
}

fn node_average(a: &[Point2D], b: &[Point2D], v: &VariogramModel) -> f64 {
    let mut s = 0.0;
    for p in a {
        for q in b {
            let d = p.dist(q);
            s += v.covariance(d, d == 0.0);
        }
    }
    s / (a.len() * b.len()) as f64
}

/// Mean point covariance over all node pairs of two catchments.
pub fn catchment_covariance(a: &Catchment, b: &Catchment, v: &VariogramModel) -> Result<f64> {
    if a.n_nodes() == 0 || b.n_nodes() == 0 {
        return Err(Error::Degenerate("catchment without grid nodes".into()));
    }
    Ok(node_average(a.nodes(), b.nodes(), v))
}

/// Every `k`-th node so that at most `max` remain.
fn thin(nodes: &[Point2D], max: usize) -> Vec<Point2D> {
    let step = nodes.len().div_ceil(max).max(1);
    nodes.iter().step_by(step).copied().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariogramFit {
    pub model: VariogramModel,
    /// The sill hit its lower bound (no variability in the data).
    pub sill_at_bound: bool,
    /// Too few catchments; the default model was used.
    pub fallback: bool,
}

/// Weighted least squares fit of the sill and range to binned empirical
/// semivariances `½(z_a − z_b)²` of catchment pairs, with lag = centroid
/// distance and weights = pair count / lag². Model semivariances are
/// regularized over the (thinned) grid nodes of each pair. The nugget is 0.
pub fn fit_variogram(obs: &[(usize, f64)], catchments: &[Catchment], default: &VariogramModel) -> Result<VariogramFit> {
    let mut sorted: Vec<(usize, f64)> = obs.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if sorted.len() < 3 {
        log::warn!("only {} catchments observed; using the default variogram", sorted.len());
        return Ok(VariogramFit { model: *default, sill_at_bound: false, fallback: true });
    }
    let nodes: Vec<Vec<Point2D>> = sorted.iter().map(|(k, _)| thin(catchments[*k].nodes(), 60)).collect();
    let cent: Vec<Point2D> = sorted.iter().map(|(k, _)| catchments[*k].centroid()).collect();
    let mut pairs = Vec::new();
    for a in 0..sorted.len() {
        for b in a + 1..sorted.len() {
            let lag = cent[a].dist(&cent[b]).max(1e-6);
            pairs.push((lag, 0.5 * (sorted[a].1 - sorted[b].1).powi(2), a, b));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n_bins = (pairs.len() / 3).clamp(1, 12);
    let per = pairs.len().div_ceil(n_bins);
    let bins: Vec<&[(f64, f64, usize, usize)]> = pairs.chunks(per).collect();

    let values: Vec<f64> = sorted.iter().map(|s| s.1).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    let sill_floor = 1e-10;
    if var <= sill_floor {
        log::warn!("constant areal observations; variogram sill set to its lower bound");
        return Ok(VariogramFit {
            model: VariogramModel { nugget: 0.0, sill: sill_floor, range: default.range },
            sill_at_bound: true,
            fallback: false,
        });
    }
    let max_lag = pairs.last().map(|p| p.0).unwrap_or(1.0);
    let min_lag = pairs.first().map(|p| p.0).unwrap_or(1.0);

    let objective = |x: &[f64]| {
        let v = VariogramModel { nugget: 0.0, sill: x[0].exp(), range: x[1].exp() };
        let mut ss = 0.0;
        for bin in &bins {
            let n = bin.len() as f64;
            let lag = bin.iter().map(|p| p.0).sum::<f64>() / n;
            let emp = bin.iter().map(|p| p.1).sum::<f64>() / n;
            let model = bin
                .iter()
                .map(|&(_, _, a, b)| {
                    let caa = node_average(&nodes[a], &nodes[a], &v);
                    let cbb = node_average(&nodes[b], &nodes[b], &v);
                    0.5 * (caa + cbb) - node_average(&nodes[a], &nodes[b], &v)
                })
                .sum::<f64>()
                / n;
            ss += n / (lag * lag) * (emp - model).powi(2);
        }
        ss
    };
    let opts = NelderMeadOptions {
        max_iter: 400,
        tol: 1e-5,
        initial_step: 0.5,
        lower: vec![sill_floor.ln(), (0.1 * min_lag).ln()],
        upper: vec![(100.0 * var).ln(), (10.0 * max_lag).ln()],
    };
    let start = [var.ln(), (0.5 * max_lag).ln()];
    let res = nelder_mead(objective, &start, &opts);
    let model = VariogramModel { nugget: 0.0, sill: res.x[0].exp(), range: res.x[1].exp() };
    let sill_at_bound = res.x[0] <= opts.lower[0] + 1e-9;
    Ok(VariogramFit { model, sill_at_bound, fallback: false })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KrigingResult {
    pub mean: f64,
    pub sd: f64,
    pub weights: Vec<f64>,
    pub ridge: bool,
    pub variance_floored: bool,
    pub negative_weights: bool,
}

/// Ordinary kriging from precomputed covariances: `c` between observed
/// catchments, `c0` between target and observed, `c00` of the target.
pub fn krige_covariances(c: &DMatrix<f64>, c0: &[f64], c00: f64, z: &[f64]) -> Result<KrigingResult> {
    let n = z.len();
    if n == 0 {
        return Err(Error::InvalidInput("kriging needs at least one observation".into()));
    }
    let build = |ridge: f64| {
        let mut a = DMatrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = c[(i, j)];
            }
            a[(i, i)] += ridge;
            a[(i, n)] = 1.0;
            a[(n, i)] = 1.0;
        }
        a
    };
    let rhs = DVector::from_column_slice(c0).push(1.0);
    let mut ridge = false;
    let sol = match build(0.0).lu().solve(&rhs) {
        Some(s) if s.iter().all(|v| v.is_finite()) => s,
        _ => {
            ridge = true;
            log::warn!("singular kriging system; adding a 1e-8 ridge");
            build(1e-8).lu().solve(&rhs).ok_or_else(|| Error::Degenerate("kriging system is singular".into()))?
        }
    };
    let weights: Vec<f64> = sol.iter().take(n).copied().collect();
    let lagrange = sol[n];
    let mean = weights.iter().zip(z).map(|(w, v)| w * v).sum();
    let var = c00 - weights.iter().zip(c0).map(|(w, v)| w * v).sum::<f64>() - lagrange;
    let variance_floored = var < 0.0;
    let negative_weights = weights.iter().any(|w| *w < 0.0);
    Ok(KrigingResult { mean, sd: var.max(0.0).sqrt(), weights, ridge, variance_floored, negative_weights })
}

/// Ordinary kriging of `target` from observed `(catchment, value)` pairs.
pub fn krige(target: &Catchment, obs: &[(&Catchment, f64)], v: &VariogramModel) -> Result<KrigingResult> {
    v.validate()?;
    let n = obs.len();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let val = catchment_covariance(obs[i].0, obs[j].0, v)?;
            c[(i, j)] = val;
            c[(j, i)] = val;
        }
    }
    let c0 = obs.iter().map(|(k, _)| catchment_covariance(target, k, v)).collect::<Result<Vec<_>>>()?;
    let c00 = catchment_covariance(target, target, v)?;
    let z: Vec<f64> = obs.iter().map(|o| o.1).collect();
    krige_covariances(&c, &c0, c00, &z)
}

/// Leave-one-catchment-out cross-validation of the kriging baseline,
/// refitting the variogram for every year.
pub fn run_topkriging_cv(data: &Dataset, default: &VariogramModel) -> Result<ScoreReport> {
    let catchments = data.geometry().catchments();
    let targets = data.observed_catchments();
    if targets.len() < 2 {
        return Err(Error::InvalidInput("cross-validation needs at least two observed catchments".into()));
    }
    let mut by_year: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for o in data.areal().observations() {
        if let Support::Catchment(k) = o.support {
            by_year.entry(o.year).or_default().push((k, o.value));
        }
    }
    let mut scores = Vec::new();
    for &t in &targets {
        let mut preds = Vec::new();
        let mut observed = Vec::new();
        for (&year, obs) in &by_year {
            let Some(&(_, truth)) = obs.iter().find(|o| o.0 == t) else { continue };
            let rest: Vec<(usize, f64)> = obs.iter().copied().filter(|o| o.0 != t).collect();
            if rest.is_empty() {
                continue;
            }
            let vf = fit_variogram(&rest, catchments, default)?;
            let refs: Vec<(&Catchment, f64)> = rest.iter().map(|&(k, z)| (&catchments[k], z)).collect();
            let kr = krige(&catchments[t], &refs, &vf.model)?;
            let (lo, hi) = interval(kr.mean, kr.sd, 0.95);
            preds.push(Prediction {
                target: catchments[t].id().to_string(),
                year: YearTag::Observed(year),
                mean: kr.mean,
                sd_process: kr.sd,
                sd_predictive: kr.sd,
                lo,
                hi,
            });
            observed.push(truth);
        }
        if observed.is_empty() {
            continue;
        }
        scores.push(score(catchments[t].id().to_string(), preds, observed)?);
    }
    Ok(aggregate(TestKind::T2, Design::Areal, 0, scores))
}
