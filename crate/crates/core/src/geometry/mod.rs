//! Planar geometry: triangular meshes, finite-element matrices, catchment
//! discretization and projection rows from the latent field to observation
//! supports. Coordinates are kilometres in a projected planar system.

mod catchment;
mod fem;
mod mesh;
mod projection;

pub use catchment::{resolve_nesting, Catchment, GridLattice, Polygon};
pub use fem::{fem_matrices, FemMatrices};
pub use mesh::{build_mesh, MeshSettings, TriangleMesh};
pub use projection::{areal_projector, nodes_projector, point_projector, ProjectionRow};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Twice the signed area of triangle (a, b, c); positive when counter-clockwise.
pub(crate) fn orient(a: &Point2D, b: &Point2D, c: &Point2D) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Convex hull by the monotone chain, counter-clockwise, collinear points dropped.
pub(crate) fn convex_hull(points: &[Point2D]) -> Vec<Point2D> {
    let mut pts: Vec<Point2D> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point2D> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && orient(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point2D> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && orient(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub(crate) fn segment_distance(p: &Point2D, a: &Point2D, b: &Point2D) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    Point2D::new(a.x + t * dx, a.y + t * dy).dist(p)
}

/// Distance from `p` to the boundary of a closed polygon.
pub(crate) fn boundary_distance(p: &Point2D, poly: &[Point2D]) -> f64 {
    (0..poly.len()).map(|i| segment_distance(p, &poly[i], &poly[(i + 1) % poly.len()])).fold(f64::INFINITY, f64::min)
}

/// Even-odd point-in-polygon test.
pub(crate) fn in_ring(p: &Point2D, ring: &[Point2D]) -> bool {
    let mut inside = false;
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (&ring[i], &ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let xc = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < xc {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Signed distance to a convex counter-clockwise polygon (negative inside).
pub(crate) fn convex_signed_distance(p: &Point2D, hull: &[Point2D]) -> f64 {
    let d = boundary_distance(p, hull);
    let inside = (0..hull.len()).all(|i| orient(&hull[i], &hull[(i + 1) % hull.len()], p) >= 0.0);
    if inside {
        -d
    } else {
        d
    }
}
