//! Posterior predictive summaries for points, catchments and grids, in
//! observed years and in a fresh future year.

use std::fmt::{self, Write as _};

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::geometry::{point_projector, Point2D, ProjectionRow};
use crate::inference::LatentFit;
use crate::model::Support;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum YearTag {
    /// Year index `0..r` of the fitted data.
    Observed(usize),
    Future,
}

impl fmt::Display for YearTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            YearTag::Observed(j) => write!(f, "{j}"),
            YearTag::Future => write!(f, "FUTURE"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub target: String,
    pub year: YearTag,
    pub mean: f64,
    pub sd_process: f64,
    /// Includes observation noise when a noise scale was supplied.
    pub sd_predictive: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Prediction {
    pub fn is_negative(&self) -> bool {
        self.mean < 0.0
    }
}

/// Central interval `mean ± z sd` at the given level.
pub fn interval(mean: f64, sd: f64, level: f64) -> (f64, f64) {
    assert!(sd >= 0.0, "sd must be non-negative");
    assert!(level > 0.0 && level < 1.0, "level must lie in (0, 1)");
    let z = Normal::standard().inverse_cdf(0.5 + 0.5 * level);
    (mean - z * sd, mean + z * sd)
}

/// Which observation noise to add to the process variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Noise {
    None,
    /// Point support with variance scale `s` (noise variance `s/τ_y`).
    Point(f64),
    /// Areal support with variance scale `s` (noise variance `s/τ_z`).
    Areal(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct PredictOptions {
    pub level: f64,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self { level: 0.95 }
    }
}

/// Mean and process variance of `β_c + row·c (+ β_j + row·x_j)`; a future
/// year adds the prior variance of a fresh year effect and annual field.
pub fn support_moments(fit: &LatentFit, row: &ProjectionRow, year: YearTag) -> Result<(f64, f64)> {
    let layout = fit.layout();
    let mut a = vec![0.0; layout.dim()];
    a[layout.beta_c()] = 1.0;
    let c0 = layout.climate().start;
    for &(v, w) in row.entries() {
        a[c0 + v] += w;
    }
    match year {
        YearTag::Observed(j) => {
            if j >= layout.r {
                return Err(Error::InvalidInput(format!("year index {j} outside 0..{}", layout.r)));
            }
            a[layout.beta(j)] = 1.0;
            let x0 = layout.annual(j).start;
            for &(v, w) in row.entries() {
                a[x0 + v] += w;
            }
            let (m, s) = fit.latent_functional(&a)?;
            Ok((m, s * s))
        }
        YearTag::Future => {
            let (m, s) = fit.latent_functional(&a)?;
            Ok((m, s * s + 1.0 / fit.theta_map.tau_beta() + fit.fresh_annual_variance(row)))
        }
    }
}

fn finish(
    fit: &LatentFit,
    target: String,
    year: YearTag,
    mean: f64,
    var: f64,
    noise: Noise,
    opts: &PredictOptions,
) -> Prediction {
    let noise_var = match noise {
        Noise::None => 0.0,
        Noise::Point(s) => fit.noise_variance(true, s),
        Noise::Areal(s) => fit.noise_variance(false, s),
    };
    let sd_process = var.max(0.0).sqrt();
    let sd_predictive = (var.max(0.0) + noise_var).sqrt();
    let (lo, hi) = interval(mean, sd_predictive, opts.level);
    if mean < 0.0 {
        log::warn!("negative predicted runoff {mean:.4} for {target} ({year})");
    }
    Prediction { target, year, mean, sd_process, sd_predictive, lo, hi }
}

pub fn predict_support(
    fit: &LatentFit,
    support: Support,
    year: YearTag,
    noise: Noise,
    opts: &PredictOptions,
) -> Result<Prediction> {
    let g = fit.geometry();
    g.check_support(support)?;
    let (mean, var) = support_moments(fit, g.row(support), year)?;
    Ok(finish(fit, g.support_label(support).to_string(), year, mean, var, noise, opts))
}

/// Catchment runoff in observed year `j`.
pub fn predict_area(fit: &LatentFit, catchment: usize, j: usize, noise: Noise) -> Result<Prediction> {
    predict_support(fit, Support::Catchment(catchment), YearTag::Observed(j), noise, &PredictOptions::default())
}

/// Catchment runoff in an unobserved future year.
pub fn predict_future_area(fit: &LatentFit, catchment: usize, noise: Noise) -> Result<Prediction> {
    predict_support(fit, Support::Catchment(catchment), YearTag::Future, noise, &PredictOptions::default())
}

/// Point runoff at an arbitrary location.
pub fn predict_point(fit: &LatentFit, location: &Point2D, year: YearTag, noise: Noise) -> Result<Prediction> {
    let row = point_projector(fit.geometry().mesh(), location)?;
    let (mean, var) = support_moments(fit, &row, year)?;
    let label = format!("({:.3},{:.3})", location.x, location.y);
    Ok(finish(fit, label, year, mean, var, noise, &PredictOptions::default()))
}

/// Row-major grid of point predictions, first row at the southern edge.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub origin: Point2D,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<Prediction>,
}

impl Raster {
    pub fn cell(&self, i: usize, j: usize) -> &Prediction {
        &self.cells[j * self.nx + i]
    }

    /// ESRI ASCII grid of one field of the predictions.
    pub fn to_ascii_grid(&self, value: impl Fn(&Prediction) -> f64) -> String {
        let mut s = String::new();
        writeln!(s, "ncols {}", self.nx).unwrap();
        writeln!(s, "nrows {}", self.ny).unwrap();
        // cell-centred registration
        writeln!(s, "xllcenter {}", self.origin.x).unwrap();
        writeln!(s, "yllcenter {}", self.origin.y).unwrap();
        writeln!(s, "cellsize {}", self.spacing).unwrap();
        writeln!(s, "NODATA_value -9999").unwrap();
        for j in (0..self.ny).rev() {
            let line: Vec<String> = (0..self.nx).map(|i| format!("{:.6}", value(self.cell(i, j)))).collect();
            writeln!(s, "{}", line.join(" ")).unwrap();
        }
        s
    }
}

/// Point predictions on a lattice with the given spacing covering the
/// bounding box of the data hull.
pub fn predict_grid(fit: &LatentFit, spacing: f64, year: YearTag) -> Result<Raster> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidInput("grid spacing must be positive".into()));
    }
    let hull = fit.geometry().mesh().data_hull();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in hull {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let nx = ((x1 - x0) / spacing).floor() as usize + 1;
    let ny = ((y1 - y0) / spacing).floor() as usize + 1;
    predict_lattice(fit, Point2D::new(x0, y0), spacing, nx, ny, year)
}

pub fn predict_lattice(fit: &LatentFit, origin: Point2D, spacing: f64, nx: usize, ny: usize, year: YearTag) -> Result<Raster> {
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let p = Point2D::new(origin.x + i as f64 * spacing, origin.y + j as f64 * spacing);
            cells.push(predict_point(fit, &p, year, Noise::None)?);
        }
    }
    Ok(Raster { origin, spacing, nx, ny, cells })
}
