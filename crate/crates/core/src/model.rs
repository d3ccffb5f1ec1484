//! The latent Gaussian system: layout of the latent vector, hyperparameters,
//! observations on point and areal supports, and sparse assembly of the prior
//! precision and the observation design.
//!
//! For year `j` the runoff field is `q_j(u) = β_c + c(u) + β_j + x_j(u)`; a
//! catchment observes the grid-node average of `q_j`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    areal_projector, build_mesh, fem_matrices, point_projector, resolve_nesting, Catchment, FemMatrices, MeshSettings, Point2D,
    ProjectionRow, TriangleMesh,
};
use crate::priors::PriorConfig;
use crate::sparse::CsrMatrix;
use crate::spde::{MaternParams, PrecisionTemplate};

/// Smallest admissible observation variance scale (m²/year²).
pub const SCALE_FLOOR: f64 = 1e-8;

/// Default standard deviation of an areal observation as a fraction of its value.
pub const DEFAULT_AREAL_SD_FRACTION: f64 = 0.03;

/// Index ranges of `[β_c, c(m), β_1..β_r, x_1(m)..x_r(m)]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatentLayout {
    pub m: usize,
    pub r: usize,
}

impl LatentLayout {
    pub fn new(m: usize, r: usize) -> Self {
        Self { m, r }
    }

    pub fn dim(&self) -> usize {
        1 + self.m + self.r + self.r * self.m
    }

    pub fn beta_c(&self) -> usize {
        0
    }

    pub fn climate(&self) -> std::ops::Range<usize> {
        1..1 + self.m
    }

    pub fn beta(&self, j: usize) -> usize {
        assert!(j < self.r);
        1 + self.m + j
    }

    pub fn annual(&self, j: usize) -> std::ops::Range<usize> {
        assert!(j < self.r);
        let s = 1 + self.m + self.r + j * self.m;
        s..s + self.m
    }
}

/// The seven free hyperparameters, stored on the log scale in the order
/// `(ρ_c, σ_c, ρ_x, σ_x, τ_β, τ_y, τ_z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    log: [f64; 7],
}

impl Hyperparameters {
    pub const NAMES: [&'static str; 7] = ["rho_c", "sigma_c", "rho_x", "sigma_x", "tau_beta", "tau_y", "tau_z"];

    pub fn from_log(log: [f64; 7]) -> Result<Self> {
        if log.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite log hyperparameter in {log:?}")));
        }
        Ok(Self { log })
    }

    pub fn from_natural(
        rho_c: f64,
        sigma_c: f64,
        rho_x: f64,
        sigma_x: f64,
        tau_beta: f64,
        tau_y: f64,
        tau_z: f64,
    ) -> Result<Self> {
        let v = [rho_c, sigma_c, rho_x, sigma_x, tau_beta, tau_y, tau_z];
        if v.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidInput(format!("hyperparameters must be positive, got {v:?}")));
        }
        Self::from_log(v.map(f64::ln))
    }

    pub fn as_array(&self) -> [f64; 7] {
        self.log
    }

    pub fn natural(&self) -> [f64; 7] {
        self.log.map(f64::exp)
    }

    pub fn climate(&self) -> MaternParams {
        MaternParams { rho: self.log[0].exp(), sigma: self.log[1].exp() }
    }

    pub fn annual(&self) -> MaternParams {
        MaternParams { rho: self.log[2].exp(), sigma: self.log[3].exp() }
    }

    pub fn tau_beta(&self) -> f64 {
        self.log[4].exp()
    }

    pub fn tau_y(&self) -> f64 {
        self.log[5].exp()
    }

    pub fn tau_z(&self) -> f64 {
        self.log[6].exp()
    }
}

impl fmt::Display for Hyperparameters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.natural();
        for (k, name) in Self::NAMES.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{name}={:.4}", v[k])?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: String,
    pub location: Point2D,
}

/// Observation support: a registered point site or catchment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Support {
    Site(usize),
    Catchment(usize),
}

impl Support {
    pub fn is_point(&self) -> bool {
        matches!(self, Support::Site(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Design {
    #[serde(rename = "P")]
    Points,
    #[serde(rename = "A")]
    Areal,
    #[serde(rename = "P+A")]
    Combined,
}

impl Design {
    pub fn includes(&self, support: &Support) -> bool {
        match self {
            Design::Points => support.is_point(),
            Design::Areal => !support.is_point(),
            Design::Combined => true,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Design::Points => "P",
            Design::Areal => "A",
            Design::Combined => "P+A",
        }
    }
}

impl std::str::FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "P" | "p" => Ok(Design::Points),
            "A" | "a" => Ok(Design::Areal),
            "P+A" | "p+a" | "PA" => Ok(Design::Combined),
            other => Err(Error::Config(format!("unknown design '{other}' (expected P, A or P+A)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub support: Support,
    /// Year index in `0..r`.
    pub year: usize,
    pub value: f64,
    /// Variance scale `s`; the noise variance is `s/τ_y` or `s/τ_z`.
    pub scale: f64,
}

/// Point and areal observations over `r` replicate years.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservationSet {
    n_years: usize,
    obs: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(n_years: usize) -> Self {
        Self { n_years, obs: Vec::new() }
    }

    pub fn n_years(&self) -> usize {
        self.n_years
    }

    pub fn push(&mut self, o: Observation) -> Result<()> {
        if o.year >= self.n_years {
            return Err(Error::InvalidInput(format!("year index {} outside 0..{}", o.year, self.n_years)));
        }
        if !o.value.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite observation value for {:?}", o.support)));
        }
        if !(o.scale > 0.0) || !o.scale.is_finite() {
            return Err(Error::InvalidInput(format!("observation scale must be positive, got {}", o.scale)));
        }
        self.obs.push(o);
        Ok(())
    }

    pub fn push_point(&mut self, site: usize, year: usize, value: f64, scale: f64) -> Result<()> {
        if value < 0.0 {
            log::warn!("negative point runoff {value:.4} at site {site}, year {year}");
        }
        self.push(Observation { support: Support::Site(site), year, value, scale })
    }

    pub fn push_areal(&mut self, catchment: usize, year: usize, value: f64, scale: f64) -> Result<()> {
        if value <= 0.0 {
            log::warn!("non-positive areal runoff {value:.4} for catchment {catchment}, year {year}");
        }
        self.push(Observation { support: Support::Catchment(catchment), year, value, scale })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.obs
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn n_points(&self) -> usize {
        self.obs.iter().filter(|o| o.support.is_point()).count()
    }

    pub fn n_areal(&self) -> usize {
        self.len() - self.n_points()
    }

    /// Keeps the observations accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&Observation) -> bool) -> Self {
        Self { n_years: self.n_years, obs: self.obs.iter().copied().filter(|o| keep(o)).collect() }
    }

    pub fn for_design(&self, design: Design) -> Self {
        self.filtered(|o| design.includes(&o.support))
    }

    pub fn extend(&mut self, other: &ObservationSet) -> Result<()> {
        for o in &other.obs {
            self.push(*o)?;
        }
        Ok(())
    }
}

/// Mesh, finite-element matrices and projection rows of all registered supports.
#[derive(Debug)]
pub struct ModelGeometry {
    mesh: TriangleMesh,
    fem: FemMatrices,
    template: PrecisionTemplate,
    sites: Vec<Site>,
    catchments: Vec<Catchment>,
    site_rows: Vec<ProjectionRow>,
    catchment_rows: Vec<ProjectionRow>,
    site_index: HashMap<String, usize>,
    catchment_index: HashMap<String, usize>,
}

impl ModelGeometry {
    /// Builds a mesh around every site and catchment grid node.
    pub fn build(sites: Vec<Site>, catchments: Vec<Catchment>, settings: &MeshSettings) -> Result<Arc<Self>> {
        let locs: Vec<Point2D> = sites.iter().map(|s| s.location).collect();
        let nodes: Vec<Point2D> = catchments.iter().flat_map(|c| c.nodes().iter().copied()).collect();
        let mesh = build_mesh(&locs, &nodes, settings)?;
        Self::new(mesh, sites, catchments)
    }

    pub fn new(mesh: TriangleMesh, sites: Vec<Site>, mut catchments: Vec<Catchment>) -> Result<Arc<Self>> {
        let mut site_index = HashMap::new();
        for (k, s) in sites.iter().enumerate() {
            if site_index.insert(s.id.clone(), k).is_some() {
                return Err(Error::InvalidInput(format!("duplicate site id '{}'", s.id)));
            }
        }
        let mut catchment_index = HashMap::new();
        for (k, c) in catchments.iter().enumerate() {
            if catchment_index.insert(c.id().to_string(), k).is_some() {
                return Err(Error::InvalidInput(format!("duplicate catchment id '{}'", c.id())));
            }
        }
        resolve_nesting(&mut catchments)?;
        let fem = fem_matrices(&mesh)?;
        let template = PrecisionTemplate::new(&fem)?;
        let site_rows = sites.iter().map(|s| point_projector(&mesh, &s.location)).collect::<Result<Vec<_>>>()?;
        let catchment_rows = catchments.iter().map(|c| areal_projector(&mesh, c)).collect::<Result<Vec<_>>>()?;
        Ok(Arc::new(Self { mesh, fem, template, sites, catchments, site_rows, catchment_rows, site_index, catchment_index }))
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn fem(&self) -> &FemMatrices {
        &self.fem
    }

    pub fn template(&self) -> &PrecisionTemplate {
        &self.template
    }

    pub fn m(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn catchments(&self) -> &[Catchment] {
        &self.catchments
    }

    pub fn site_index(&self, id: &str) -> Result<usize> {
        self.site_index.get(id).copied().ok_or_else(|| Error::UnknownId { kind: "site", id: id.to_string() })
    }

    pub fn catchment_index(&self, id: &str) -> Result<usize> {
        self.catchment_index.get(id).copied().ok_or_else(|| Error::UnknownId { kind: "catchment", id: id.to_string() })
    }

    pub fn row(&self, support: Support) -> &ProjectionRow {
        match support {
            Support::Site(k) => &self.site_rows[k],
            Support::Catchment(k) => &self.catchment_rows[k],
        }
    }

    pub fn support_label(&self, support: Support) -> &str {
        match support {
            Support::Site(k) => &self.sites[k].id,
            Support::Catchment(k) => self.catchments[k].id(),
        }
    }

    pub fn check_support(&self, support: Support) -> Result<()> {
        let ok = match support {
            Support::Site(k) => k < self.sites.len(),
            Support::Catchment(k) => k < self.catchments.len(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::UnknownId { kind: "support", id: format!("{support:?}") })
        }
    }
}

/// Pearson correlation over the years where both series are present.
/// Returns `None` when fewer than two pairs exist or either series is constant.
pub fn pairwise_correlation(p: &[Option<f64>], e: &[Option<f64>]) -> (Option<f64>, usize) {
    let pairs: Vec<(f64, f64)> = p.iter().zip(e).filter_map(|(a, b)| Some(((*a)?, (*b)?))).collect();
    let n = pairs.len();
    if n < 2 {
        return (None, n);
    }
    let (mp, me) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mp, me) = (mp / n as f64, me / n as f64);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        sxy += (x - mp) * (y - me);
        sxx += (x - mp) * (x - mp);
        syy += (y - me) * (y - me);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return (None, n);
    }
    (Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)), n)
}

/// `(0.1 p)² + (0.2 e)² − 2 (0.1 p)(0.2 e) cor`, floored at [`SCALE_FLOOR`].
pub fn point_scale(p: f64, e: f64, cor: f64) -> f64 {
    let (a, b) = (0.1 * p, 0.2 * e);
    (a * a + b * b - 2.0 * a * b * cor).max(SCALE_FLOOR)
}

/// Variance scale of the point observation `p_j − e_j` of one gauge, with
/// the precipitation/evaporation correlation estimated from the gauge's
/// whole record.
pub fn compute_point_scale(p_series: &[Option<f64>], e_series: &[Option<f64>], j: usize) -> Result<f64> {
    if p_series.len() != e_series.len() {
        return Err(Error::Dimension(format!(
            "precipitation ({}) and evaporation ({}) series differ in length",
            p_series.len(),
            e_series.len()
        )));
    }
    let (p, e) = match (p_series.get(j).copied().flatten(), e_series.get(j).copied().flatten()) {
        (Some(p), Some(e)) => (p, e),
        _ => return Err(Error::InvalidInput(format!("no precipitation/evaporation pair in year index {j}"))),
    };
    if p < 0.0 || e < 0.0 {
        return Err(Error::InvalidInput(format!("negative precipitation or evaporation ({p}, {e})")));
    }
    let (cor, n) = pairwise_correlation(p_series, e_series);
    if n < 3 {
        log::warn!("only {n} complete precipitation/evaporation pairs for the correlation");
    }
    let cor = cor.unwrap_or_else(|| {
        log::warn!("correlation undefined (constant or too short series); using 0");
        0.0
    });
    Ok(point_scale(p, e, cor))
}

/// Areal variance scale: the reported variance, or `(fraction · z)²` when missing.
pub fn areal_scale(reported_variance: Option<f64>, value: f64, default_fraction: f64) -> Result<f64> {
    match reported_variance {
        Some(v) if v > 0.0 && v.is_finite() => Ok(v),
        Some(v) => Err(Error::InvalidInput(format!("reported variance must be positive, got {v}"))),
        None => {
            log::warn!("missing areal observation variance; using sd = {default_fraction} x value");
            Ok(((default_fraction * value).powi(2)).max(SCALE_FLOOR))
        }
    }
}

/// `Q_prior`, prior mean, design `M`, noise precisions `D` and data `y`.
#[derive(Clone, Debug)]
pub struct GaussianSystem {
    pub layout: LatentLayout,
    pub q_prior: CsrMatrix,
    pub mu: Vec<f64>,
    pub m: CsrMatrix,
    pub d: Vec<f64>,
    pub y: Vec<f64>,
}

impl GaussianSystem {
    /// `Q_prior + Mᵀ D M`.
    pub fn posterior_precision(&self) -> CsrMatrix {
        let mt = self.m.transpose();
        let dm = CsrMatrix::diagonal(&self.d).matmul(&self.m);
        self.q_prior.add_scaled(&mt.matmul(&dm), 1.0)
    }

    /// `Q_prior μ + Mᵀ D y`.
    pub fn posterior_rhs(&self) -> Vec<f64> {
        let mut b = self.q_prior.mul_vec(&self.mu);
        let dy: Vec<f64> = self.d.iter().zip(&self.y).map(|(d, y)| d * y).collect();
        for (bi, v) in b.iter_mut().zip(self.m.transpose().mul_vec(&dy)) {
            *bi += v;
        }
        b
    }
}

/// Noise precision `τ/s` of an observation.
pub fn noise_precision(o: &Observation, theta: &Hyperparameters) -> f64 {
    let tau = if o.support.is_point() { theta.tau_y() } else { theta.tau_z() };
    tau / o.scale
}

/// Sparse design row `(index, weight)` of an observation.
pub fn observation_row(geometry: &ModelGeometry, layout: &LatentLayout, o: &Observation) -> Vec<(usize, f64)> {
    let proj = geometry.row(o.support);
    let c0 = layout.climate().start;
    let x0 = layout.annual(o.year).start;
    let mut row = Vec::with_capacity(2 + 2 * proj.nnz());
    row.push((layout.beta_c(), 1.0));
    row.extend(proj.entries().iter().map(|&(v, w)| (c0 + v, w)));
    row.push((layout.beta(o.year), 1.0));
    row.extend(proj.entries().iter().map(|&(v, w)| (x0 + v, w)));
    row
}

pub fn assemble_system(
    geometry: &ModelGeometry,
    obs: &ObservationSet,
    theta: &Hyperparameters,
    priors: &PriorConfig,
) -> Result<GaussianSystem> {
    let r = obs.n_years();
    if r == 0 {
        return Err(Error::InvalidInput("at least one year is required".into()));
    }
    let layout = LatentLayout::new(geometry.m(), r);
    let qc = geometry.template().precision(&theta.climate())?;
    let qx = geometry.template().precision(&theta.annual())?;
    let b_c = CsrMatrix::diagonal(&[1.0 / (priors.beta_c.sd * priors.beta_c.sd)]);
    let b_j = CsrMatrix::diagonal(&vec![theta.tau_beta(); r]);
    let mut blocks: Vec<&CsrMatrix> = vec![&b_c, &qc, &b_j];
    blocks.extend(std::iter::repeat(&qx).take(r));
    let q_prior = CsrMatrix::block_diag(&blocks);

    let mut mu = vec![0.0; layout.dim()];
    mu[layout.beta_c()] = priors.beta_c.mean;

    let mut triplets = Vec::new();
    let mut d = Vec::with_capacity(obs.len());
    let mut y = Vec::with_capacity(obs.len());
    for (i, o) in obs.observations().iter().enumerate() {
        geometry.check_support(o.support)?;
        triplets.extend(observation_row(geometry, &layout, o).into_iter().map(|(c, w)| (i, c, w)));
        d.push(noise_precision(o, theta));
        y.push(o.value);
    }
    let m = CsrMatrix::from_triplets(obs.len(), layout.dim(), &triplets);
    Ok(GaussianSystem { layout, q_prior, mu, m, d, y })
}
