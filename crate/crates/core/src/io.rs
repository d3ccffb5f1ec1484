//! File formats: gauge and runoff CSV, catchment GeoJSON or node CSV, the
//! TOML run configuration and result writers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::{Dataset, ScoreReport, TestKind};
use crate::geometry::{Catchment, GridLattice, MeshSettings, Point2D, Polygon};
use crate::inference::{Bounds, FitOptions, FitSummary};
use crate::kriging::VariogramModel;
use crate::model::{
    areal_scale, compute_point_scale, Design, ModelGeometry, ObservationSet, Site, Support, DEFAULT_AREAL_SD_FRACTION,
};
use crate::prediction::Prediction;
use crate::priors::PriorConfig;
use crate::simstudy::SimDataset;

pub const POINT_HEADER: [&str; 6] = ["site_id", "x_km", "y_km", "year", "precip_m", "evap_m"];
pub const AREAL_HEADER: [&str; 4] = ["catchment_id", "year", "runoff_m", "obs_sd_m"];
pub const NODE_HEADER: [&str; 3] = ["id", "x", "y"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointRecord {
    pub site_id: String,
    pub location: Point2D,
    pub year: i64,
    pub precip_m: f64,
    pub evap_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArealRecord {
    pub catchment_id: String,
    pub year: i64,
    pub runoff_m: f64,
    pub obs_sd_m: Option<f64>,
}

/// Column positions of `required` (and `optional`) names in the header.
fn columns(path: &Path, header: &csv::StringRecord, required: &[&str], optional: &[&str]) -> Result<Vec<Option<usize>>> {
    let find = |name: &str| header.iter().position(|h| h.trim() == name);
    let mut out = Vec::new();
    for name in required {
        match find(name) {
            Some(i) => out.push(Some(i)),
            None => return Err(Error::MissingColumn { path: path.display().to_string(), column: name.to_string() }),
        }
    }
    out.extend(optional.iter().map(|n| find(n)));
    Ok(out)
}

struct Row<'a> {
    path: &'a Path,
    line: usize,
    rec: csv::StringRecord,
}

impl Row<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { path: self.path.display().to_string(), line: self.line, message: message.into() }
    }

    fn text(&self, col: usize, name: &str) -> Result<String> {
        match self.rec.get(col).map(str::trim) {
            Some(s) if !s.is_empty() => Ok(s.to_string()),
            _ => Err(self.err(format!("empty {name}"))),
        }
    }

    fn num(&self, col: usize, name: &str) -> Result<f64> {
        let s = self.text(col, name)?;
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(format!("{name} '{s}' is not a finite number"))),
        }
    }

    fn int(&self, col: usize, name: &str) -> Result<i64> {
        let s = self.text(col, name)?;
        s.parse::<i64>().map_err(|_| self.err(format!("{name} '{s}' is not an integer")))
    }

    fn opt_num(&self, col: Option<usize>, name: &str) -> Result<Option<f64>> {
        match col.and_then(|c| self.rec.get(c)).map(str::trim) {
            None | Some("") => Ok(None),
            Some(_) => self.num(col.unwrap(), name).map(Some),
        }
    }
}

fn read_rows<'a>(path: &'a Path, required: &[&str], optional: &[&str]) -> Result<(Vec<Option<usize>>, Vec<Row<'a>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    let cols = columns(path, &header, required, optional)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse { path: path.display().to_string(), line, message: e.to_string() }
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        rows.push(Row { path, line, rec });
    }
    Ok((cols, rows))
}

/// Gauge records from `site_id,x_km,y_km,year,precip_m,evap_m`.
pub fn load_point_data(path: impl AsRef<Path>) -> Result<Vec<PointRecord>> {
    let path = path.as_ref();
    let (c, rows) = read_rows(path, &POINT_HEADER, &[])?;
    let mut out = Vec::with_capacity(rows.len());
    let mut seen: HashMap<(String, i64), usize> = HashMap::new();
    let mut locations: HashMap<String, Point2D> = HashMap::new();
    for row in &rows {
        let site_id = row.text(c[0].unwrap(), "site_id")?;
        let location = Point2D::new(row.num(c[1].unwrap(), "x_km")?, row.num(c[2].unwrap(), "y_km")?);
        let year = row.int(c[3].unwrap(), "year")?;
        let precip_m = row.num(c[4].unwrap(), "precip_m")?;
        let evap_m = row.num(c[5].unwrap(), "evap_m")?;
        if precip_m < 0.0 {
            return Err(row.err(format!("negative precipitation {precip_m}")));
        }
        if evap_m < 0.0 {
            return Err(row.err(format!("negative evaporation {evap_m}")));
        }
        if evap_m > precip_m {
            log::warn!("{}:{}: evaporation exceeds precipitation (negative point runoff)", path.display(), row.line);
        }
        if let Some(prev) = seen.insert((site_id.clone(), year), row.line) {
            return Err(row.err(format!("duplicate site {site_id} year {year} (first on line {prev})")));
        }
        match locations.get(&site_id) {
            Some(p) if p.dist(&location) > 1e-9 => {
                return Err(row.err(format!("site {site_id} has inconsistent coordinates")));
            }
            Some(_) => {}
            None => {
                locations.insert(site_id.clone(), location);
            }
        }
        out.push(PointRecord { site_id, location, year, precip_m, evap_m });
    }
    Ok(out)
}

/// Runoff records from `catchment_id,year,runoff_m,obs_sd_m`; the sd column
/// may be absent or empty.
pub fn load_areal_data(path: impl AsRef<Path>) -> Result<Vec<ArealRecord>> {
    let path = path.as_ref();
    let (c, rows) = read_rows(path, &AREAL_HEADER[..3], &AREAL_HEADER[3..])?;
    let mut out = Vec::with_capacity(rows.len());
    let mut seen: HashMap<(String, i64), usize> = HashMap::new();
    for row in &rows {
        let catchment_id = row.text(c[0].unwrap(), "catchment_id")?;
        let year = row.int(c[1].unwrap(), "year")?;
        let runoff_m = row.num(c[2].unwrap(), "runoff_m")?;
        let obs_sd_m = row.opt_num(c[3], "obs_sd_m")?;
        if let Some(sd) = obs_sd_m {
            if sd < 0.0 {
                return Err(row.err(format!("negative obs_sd_m {sd}")));
            }
        }
        if runoff_m <= 0.0 {
            log::warn!("{}:{}: non-positive runoff {runoff_m}", path.display(), row.line);
        }
        if let Some(prev) = seen.insert((catchment_id.clone(), year), row.line) {
            return Err(row.err(format!("duplicate catchment {catchment_id} year {year} (first on line {prev})")));
        }
        out.push(ArealRecord { catchment_id, year, runoff_m, obs_sd_m });
    }
    Ok(out)
}

fn ring(v: &serde_json::Value, what: &str) -> Result<Vec<Point2D>> {
    let arr = v.as_array().ok_or_else(|| Error::InvalidInput(format!("{what}: ring is not an array")))?;
    let mut pts = Vec::with_capacity(arr.len());
    for c in arr {
        let xy = c.as_array().filter(|a| a.len() >= 2).ok_or_else(|| Error::InvalidInput(format!("{what}: bad coordinate")))?;
        let (x, y) = (xy[0].as_f64(), xy[1].as_f64());
        match (x, y) {
            (Some(x), Some(y)) => pts.push(Point2D::new(x, y)),
            _ => return Err(Error::InvalidInput(format!("{what}: non-numeric coordinate"))),
        }
    }
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    Ok(pts)
}

fn polygon(v: &serde_json::Value, what: &str) -> Result<Polygon> {
    let rings = v.as_array().ok_or_else(|| Error::InvalidInput(format!("{what}: polygon is not an array")))?;
    let mut it = rings.iter();
    let exterior = ring(it.next().ok_or_else(|| Error::InvalidInput(format!("{what}: empty polygon")))?, what)?;
    let holes = it.map(|r| ring(r, what)).collect::<Result<Vec<_>>>()?;
    Ok(Polygon { exterior, holes })
}

/// Catchments from a GeoJSON FeatureCollection of Polygon or MultiPolygon
/// features in planar km. The id is taken from `properties.id`
/// (or `catchment_id`, or `name`).
pub fn parse_catchments_geojson(text: &str, lattice: GridLattice) -> Result<Vec<Catchment>> {
    let doc: serde_json::Value = serde_json::from_str(text)?;
    let features = doc
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| Error::InvalidInput("GeoJSON has no features array".into()))?;
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, f) in features.iter().enumerate() {
        let props = f.get("properties");
        let id = ["id", "catchment_id", "name"]
            .iter()
            .find_map(|k| props.and_then(|p| p.get(*k)))
            .map(|v| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string()))
            .ok_or_else(|| Error::InvalidInput(format!("feature {i} has no id property")))?;
        let geom = f.get("geometry").ok_or_else(|| Error::InvalidInput(format!("feature {id} has no geometry")))?;
        let coords = geom.get("coordinates").ok_or_else(|| Error::InvalidInput(format!("feature {id} has no coordinates")))?;
        let polys = match geom.get("type").and_then(|t| t.as_str()) {
            Some("Polygon") => vec![polygon(coords, &id)?],
            Some("MultiPolygon") => coords
                .as_array()
                .ok_or_else(|| Error::InvalidInput(format!("{id}: bad MultiPolygon")))?
                .iter()
                .map(|p| polygon(p, &id))
                .collect::<Result<_>>()?,
            other => return Err(Error::InvalidInput(format!("{id}: unsupported geometry type {other:?}"))),
        };
        if !ids.insert(id.clone()) {
            return Err(Error::InvalidInput(format!("duplicate catchment id {id}")));
        }
        out.push(Catchment::from_polygons(id, &polys, lattice)?);
    }
    Ok(out)
}

/// Catchments from explicit grid nodes, `id,x,y` with one row per node.
pub fn load_catchment_nodes(path: impl AsRef<Path>, lattice: GridLattice) -> Result<Vec<Catchment>> {
    let path = path.as_ref();
    let (c, rows) = read_rows(path, &NODE_HEADER, &[])?;
    let mut nodes: BTreeMap<String, Vec<Point2D>> = BTreeMap::new();
    let mut order = Vec::new();
    for row in &rows {
        let id = row.text(c[0].unwrap(), "id")?;
        let p = Point2D::new(row.num(c[1].unwrap(), "x")?, row.num(c[2].unwrap(), "y")?);
        if !nodes.contains_key(&id) {
            order.push(id.clone());
        }
        nodes.entry(id).or_default().push(p);
    }
    order.into_iter().map(|id| Catchment::from_nodes(id.clone(), &nodes[&id], lattice)).collect()
}

/// GeoJSON when the extension is `.geojson`/`.json`, node CSV otherwise.
pub fn load_catchments(path: impl AsRef<Path>, lattice: GridLattice) -> Result<Vec<Catchment>> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("geojson") | Some("json") => parse_catchments_geojson(&fs::read_to_string(path)?, lattice),
        _ => load_catchment_nodes(path, lattice),
    }
}

/// Observations assembled from raw records with years mapped to indices.
#[derive(Debug)]
pub struct StudyData {
    pub dataset: Dataset,
    /// Calendar year of each fitting-year index.
    pub years: Vec<i64>,
    pub future_years: Vec<i64>,
}

/// Registers the gauges as sites, builds the geometry and converts the
/// records into observations. Point scales use each gauge's p/e correlation;
/// areal scales use `obs_sd_m²` or the default 3% rule.
pub fn assemble_study(
    points: &[PointRecord],
    areal: &[ArealRecord],
    future: &[ArealRecord],
    catchments: Vec<Catchment>,
    settings: &MeshSettings,
) -> Result<StudyData> {
    let years: Vec<i64> =
        points.iter().map(|p| p.year).chain(areal.iter().map(|a| a.year)).collect::<BTreeSet<_>>().into_iter().collect();
    if years.is_empty() {
        return Err(Error::InvalidInput("no observations".into()));
    }
    let future_years: Vec<i64> = future.iter().map(|a| a.year).collect::<BTreeSet<_>>().into_iter().collect();
    let year_index = |y: i64, list: &[i64]| list.binary_search(&y).unwrap();

    let mut site_ids: Vec<String> = Vec::new();
    let mut sites = Vec::new();
    for p in points {
        if !site_ids.contains(&p.site_id) {
            site_ids.push(p.site_id.clone());
            sites.push(Site { id: p.site_id.clone(), location: p.location });
        }
    }
    let geometry = ModelGeometry::build(sites, catchments, settings)?;

    let r = years.len();
    let mut observed = ObservationSet::new(r);
    let mut series: HashMap<&str, (Vec<Option<f64>>, Vec<Option<f64>>)> = HashMap::new();
    for p in points {
        let s = series.entry(&p.site_id).or_insert_with(|| (vec![None; r], vec![None; r]));
        let j = year_index(p.year, &years);
        s.0[j] = Some(p.precip_m);
        s.1[j] = Some(p.evap_m);
    }
    for p in points {
        let (ps, es) = &series[p.site_id.as_str()];
        let j = year_index(p.year, &years);
        let scale = compute_point_scale(ps, es, j)?;
        observed.push_point(geometry.site_index(&p.site_id)?, j, p.precip_m - p.evap_m, scale)?;
    }
    let push_areal = |set: &mut ObservationSet, a: &ArealRecord, j: usize| -> Result<()> {
        let k = geometry.catchment_index(&a.catchment_id)?;
        let scale = areal_scale(a.obs_sd_m.map(|s| s * s), a.runoff_m, DEFAULT_AREAL_SD_FRACTION)?;
        set.push_areal(k, j, a.runoff_m, scale)
    };
    for a in areal {
        push_areal(&mut observed, a, year_index(a.year, &years))?;
    }
    let mut fut = ObservationSet::new(future_years.len().max(1));
    for a in future {
        push_areal(&mut fut, a, year_index(a.year, &future_years))?;
    }
    Ok(StudyData { dataset: Dataset::new(Arc::clone(&geometry), observed, fut)?, years, future_years })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub gauges: Option<PathBuf>,
    pub runoff: Option<PathBuf>,
    /// Runoff of held-out future years (T3u/T3g scoring).
    pub future_runoff: Option<PathBuf>,
    /// GeoJSON polygons or node CSV.
    pub catchments: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub max_edge: f64,
    pub outer_edge: Option<f64>,
    pub extension: Option<f64>,
    pub grid_spacing: f64,
    pub grid_origin: [f64; 2],
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { max_edge: 5.0, outer_edge: Some(12.0), extension: None, grid_spacing: 1.0, grid_origin: [0.0, 0.0] }
    }
}

impl MeshConfig {
    pub fn settings(&self) -> MeshSettings {
        let mut s = MeshSettings::new(self.max_edge);
        s.outer_max_edge = self.outer_edge;
        s.extension = self.extension;
        s
    }

    pub fn lattice(&self) -> GridLattice {
        GridLattice { origin: Point2D::new(self.grid_origin[0], self.grid_origin[1]), spacing: self.grid_spacing }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub initial_step: f64,
    pub rho_bounds: (f64, f64),
    pub sigma_bounds: (f64, f64),
    pub tau_bounds: (f64, f64),
    pub hessian_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let f = FitOptions::default();
        Self {
            max_iter: f.max_iter,
            tol: f.tol,
            initial_step: f.initial_step,
            rho_bounds: f.bounds.rho,
            sigma_bounds: f.bounds.sigma,
            tau_bounds: f.bounds.tau,
            hessian_step: f.hessian_step,
        }
    }
}

impl FitConfig {
    pub fn options(&self, quantiles: bool) -> FitOptions {
        FitOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            initial_step: self.initial_step,
            bounds: Bounds { rho: self.rho_bounds, sigma: self.sigma_bounds, tau: self.tau_bounds },
            quantiles,
            hessian_step: self.hessian_step,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    /// Years of target-catchment data for `shortrec`.
    pub short_record: usize,
    pub repeats: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self { short_record: 1, repeats: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub climates: usize,
    /// Target-catchment years available to the fit.
    pub gauged: usize,
    /// Condition on the generating θ instead of estimating it.
    pub fixed_theta: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { climates: 20, gauged: 0, fixed_theta: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Used when fewer than three catchments are observed in a year.
    pub default_variogram: VariogramModel,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { default_variogram: VariogramModel { nugget: 0.0, sill: 0.1, range: 50.0 } }
    }
}

/// Contents of a run configuration file. Relative paths are resolved
/// against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub design: Design,
    pub output: PathBuf,
    /// Raster spacing (km) for `predict`; no raster when absent.
    pub raster_spacing: Option<f64>,
    pub paths: PathsConfig,
    pub mesh: MeshConfig,
    pub priors: PriorConfig,
    pub fit: FitConfig,
    pub plan: PlanConfig,
    pub simulation: SimulationConfig,
    pub baseline: BaselineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            design: Design::Combined,
            output: PathBuf::from("out"),
            raster_spacing: None,
            paths: PathsConfig::default(),
            mesh: MeshConfig::default(),
            priors: PriorConfig::default(),
            fit: FitConfig::default(),
            plan: PlanConfig::default(),
            simulation: SimulationConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

/// What a command needs from the configuration.
#[derive(Clone, Copy, Debug, Default)]
pub struct Needs {
    pub data: bool,
    pub future: bool,
    pub seed: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut cfg.paths.gauges);
        fix(&mut cfg.paths.runoff);
        fix(&mut cfg.paths.future_runoff);
        fix(&mut cfg.paths.catchments);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical TOML form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let canon = Self { output: PathBuf::new(), ..self.clone() };
        let digest = Sha256::digest(canon.to_toml().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
    }

    /// All problems with the configuration, reported together.
    pub fn problems(&self, needs: Needs) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.priors.validate() {
            out.push(e.to_string());
        }
        let m = &self.mesh;
        if !(m.max_edge > 0.0) {
            out.push(format!("mesh.max_edge must be positive, got {}", m.max_edge));
        }
        if m.outer_edge.is_some_and(|o| !(o >= m.max_edge)) {
            out.push("mesh.outer_edge must be at least mesh.max_edge".into());
        }
        if m.extension.is_some_and(|e| !(e >= 0.0)) {
            out.push("mesh.extension must be non-negative".into());
        }
        if !(m.grid_spacing > 0.0) {
            out.push("mesh.grid_spacing must be positive".into());
        }
        let f = &self.fit;
        if f.max_iter == 0 || !(f.tol > 0.0) || !(f.initial_step > 0.0) || !(f.hessian_step > 0.0) {
            out.push("fit: max_iter, tol, initial_step and hessian_step must be positive".into());
        }
        for (name, (lo, hi)) in [("rho", f.rho_bounds), ("sigma", f.sigma_bounds), ("tau", f.tau_bounds)] {
            if !(lo > 0.0 && hi > lo) {
                out.push(format!("fit.{name}_bounds must satisfy 0 < lower < upper"));
            }
        }
        if self.raster_spacing.is_some_and(|s| !(s > 0.0)) {
            out.push("raster_spacing must be positive".into());
        }
        if self.plan.repeats == 0 {
            out.push("plan.repeats must be at least 1".into());
        }
        if self.simulation.climates == 0 {
            out.push("simulation.climates must be at least 1".into());
        }
        if let Err(e) = self.baseline.default_variogram.validate() {
            out.push(format!("baseline.default_variogram: {e}"));
        }
        if needs.seed && self.seed.is_none() {
            out.push("a seed is required (config `seed` or --seed)".into());
        }
        let mut need_file = |name: &str, p: &Option<PathBuf>, required: bool| match p {
            Some(p) if !p.is_file() => out.push(format!("paths.{name}: file {} does not exist", p.display())),
            None if required => out.push(format!("paths.{name} is required")),
            _ => {}
        };
        if needs.data {
            need_file("catchments", &self.paths.catchments, true);
            need_file("gauges", &self.paths.gauges, self.design != Design::Areal);
            need_file("runoff", &self.paths.runoff, self.design != Design::Points);
        }
        need_file("future_runoff", &self.paths.future_runoff, needs.future);
        out
    }

    pub fn validate(&self, needs: Needs) -> Result<()> {
        let p = self.problems(needs);
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("; ")))
        }
    }

    /// Loads every configured input file and assembles the study.
    pub fn load_study(&self) -> Result<StudyData> {
        let lattice = self.mesh.lattice();
        let catchments = match &self.paths.catchments {
            Some(p) => load_catchments(p, lattice)?,
            None => return Err(Error::Config("paths.catchments is required".into())),
        };
        let points = match &self.paths.gauges {
            Some(p) => load_point_data(p)?,
            None => Vec::new(),
        };
        let areal = match &self.paths.runoff {
            Some(p) => load_areal_data(p)?,
            None => Vec::new(),
        };
        let future = match &self.paths.future_runoff {
            Some(p) => load_areal_data(p)?,
            None => Vec::new(),
        };
        assemble_study(&points, &areal, &future, catchments, &self.mesh.settings())
    }
}

/// Provenance written at the top of every output file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub command: String,
}

impl Metadata {
    pub fn new(config: &RunConfig, command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            command: command.to_string(),
        }
    }

    /// `# key=value` comment lines.
    pub fn comment_header(&self, prefix: &str) -> String {
        let seed = self.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into());
        format!(
            "{prefix} tool={} version={}\n{prefix} config_sha256={}\n{prefix} seed={seed}\n{prefix} command={}\n",
            self.tool, self.version, self.config_hash, self.command
        )
    }
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "NA".into()
    }
}

/// Prediction table `method,target,year,mean,sd_process,sd_predictive,lo,hi`.
/// Observed years are reported as calendar years when `years` is given.
pub fn predictions_csv(meta: &Metadata, method: &str, preds: &[Prediction], years: Option<&[i64]>) -> String {
    let mut s = meta.comment_header("#");
    s.push_str("method,target,year,mean,sd_process,sd_predictive,lo,hi\n");
    for p in preds {
        let year = match (p.year, years) {
            (crate::prediction::YearTag::Observed(j), Some(y)) if j < y.len() => y[j].to_string(),
            (y, _) => y.to_string(),
        };
        writeln!(
            s,
            "{method},{},{year},{},{},{},{},{}",
            p.target,
            num(p.mean),
            num(p.sd_process),
            num(p.sd_predictive),
            num(p.lo),
            num(p.hi)
        )
        .unwrap();
    }
    s
}

fn test_tag(t: TestKind) -> &'static str {
    match t {
        TestKind::T1 => "T1",
        TestKind::T2 => "T2",
        TestKind::T3u => "T3u",
        TestKind::T3g => "T3g",
    }
}

/// Per-catchment score table, one row per catchment.
pub fn scores_csv(meta: &Metadata, method: &str, report: &ScoreReport) -> String {
    let mut s = meta.comment_header("#");
    s.push_str("method,test,design,short_record,catchment,n,rmse,crps,coverage,failed\n");
    for c in &report.catchments {
        writeln!(
            s,
            "{method},{},{},{},{},{},{},{},{},{}",
            test_tag(report.test),
            report.design.tag(),
            report.short_record,
            c.catchment,
            c.n,
            num(c.rmse),
            num(c.crps),
            num(c.coverage),
            c.failed
        )
        .unwrap();
    }
    s
}

/// Table of hyperparameter medians and 95% intervals.
pub fn fit_csv(meta: &Metadata, summary: &FitSummary) -> String {
    let mut s = meta.comment_header("#");
    s.push_str("parameter,q025,median,q975\n");
    match &summary.quantiles {
        Some(q) => {
            for row in &q.rows {
                let o = |v: Option<f64>| v.map(num).unwrap_or_else(|| "NA".into());
                writeln!(s, "{},{},{},{}", row.name, o(row.q025), num(row.median), o(row.q975)).unwrap();
            }
        }
        None => {
            for (k, v) in &summary.theta_map {
                writeln!(s, "{k},NA,{},NA", num(*v)).unwrap();
            }
        }
    }
    s
}

/// Pretty JSON document `{ "metadata": ..., "result": ... }`.
pub fn json_document<T: Serialize>(meta: &Metadata, result: &T) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        metadata: &'a Metadata,
        result: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Doc { metadata: meta, result })?;
    s.push('\n');
    Ok(s)
}

/// ASCII grid with the metadata as leading comment lines.
pub fn raster_text(meta: &Metadata, grid: &str) -> String {
    let mut s = meta.comment_header("#");
    s.push_str(grid);
    s
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

/// Writes a simulated study as input files (`gauges.csv`, `runoff.csv`,
/// `future_runoff.csv`, `catchments.csv`, `config.toml`) and returns the
/// configuration path. Point values are split into precipitation and a
/// smoothly varying evaporation; calendar years start at `first_year`.
pub fn write_simulated_inputs(
    dir: &Path,
    geometry: &ModelGeometry,
    data: &SimDataset,
    first_year: i64,
    seed: u64,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut g = String::from("site_id,x_km,y_km,year,precip_m,evap_m\n");
    let mut a = String::from("catchment_id,year,runoff_m,obs_sd_m\n");
    for o in data.observed.observations() {
        let year = first_year + o.year as i64;
        match o.support {
            Support::Site(k) => {
                let site = &geometry.sites()[k];
                let mut e = 0.4 + 0.1 * ((o.year + 3 * k) as f64).sin();
                let mut p = o.value + e;
                if p < 0.0 {
                    p = 0.0;
                    e = -o.value;
                }
                writeln!(g, "{},{},{},{year},{p:.6},{e:.6}", site.id, site.location.x, site.location.y).unwrap();
            }
            Support::Catchment(k) => {
                writeln!(a, "{},{year},{:.6},{:.6}", geometry.catchments()[k].id(), o.value, o.scale.sqrt()).unwrap();
            }
        }
    }
    let mut f = String::from("catchment_id,year,runoff_m,obs_sd_m\n");
    let n_obs = data.observed.n_years() as i64;
    for o in data.future.observations() {
        if let Support::Catchment(k) = o.support {
            writeln!(
                f,
                "{},{},{:.6},{:.6}",
                geometry.catchments()[k].id(),
                first_year + n_obs + o.year as i64,
                o.value,
                o.scale.sqrt()
            )
            .unwrap();
        }
    }
    let mut n = String::from("id,x,y\n");
    for c in geometry.catchments() {
        for p in c.nodes() {
            writeln!(n, "{},{},{}", c.id(), p.x, p.y).unwrap();
        }
    }
    write_file(dir, "gauges.csv", &g)?;
    write_file(dir, "runoff.csv", &a)?;
    write_file(dir, "future_runoff.csv", &f)?;
    write_file(dir, "catchments.csv", &n)?;
    let cfg = RunConfig {
        seed: Some(seed),
        output: PathBuf::from("out"),
        paths: PathsConfig {
            gauges: Some("gauges.csv".into()),
            runoff: Some("runoff.csv".into()),
            future_runoff: Some("future_runoff.csv".into()),
            catchments: Some("catchments.csv".into()),
        },
        mesh: MeshConfig { outer_edge: Some(15.0), extension: Some(60.0), ..MeshConfig::default() },
        ..RunConfig::default()
    };
    write_file(dir, "config.toml", &cfg.to_toml())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash(), back.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sed = 3").is_err());
        let c = RunConfig::from_toml("seed = 3\ndesign = \"A\"\n[mesh]\nmax_edge = 4.0\n").unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.design, Design::Areal);
        assert_eq!(c.mesh.max_edge, 4.0);
        assert_eq!(c.mesh.grid_spacing, 1.0);
    }

    #[test]
    fn problems_are_enumerated() {
        let mut c = RunConfig::default();
        c.mesh.max_edge = -1.0;
        c.plan.repeats = 0;
        let p = c.problems(Needs { data: true, future: false, seed: true });
        assert!(p.len() >= 4, "{p:?}");
        assert!(p.iter().any(|s| s.contains("seed")));
        assert!(p.iter().any(|s| s.contains("catchments")));
    }

    #[test]
    fn geojson_polygon_and_multipolygon() {
        let text = r#"{"type":"FeatureCollection","features":[
          {"type":"Feature","properties":{"id":"A"},"geometry":{"type":"Polygon","coordinates":[[[0.5,0.5],[3.5,0.5],[3.5,2.5],[0.5,2.5],[0.5,0.5]]]}},
          {"type":"Feature","properties":{"id":7},"geometry":{"type":"MultiPolygon","coordinates":[[[[10.5,0.5],[11.5,0.5],[11.5,1.5],[10.5,1.5]]],[[[20.5,0.5],[21.5,0.5],[21.5,1.5],[20.5,1.5]]]]}}
        ]}"#;
        let c = parse_catchments_geojson(text, GridLattice::default()).unwrap();
        assert_eq!(c[0].id(), "A");
        assert_eq!(c[0].n_nodes(), 6);
        assert_eq!(c[1].id(), "7");
        assert_eq!(c[1].n_nodes(), 2);
    }
}
