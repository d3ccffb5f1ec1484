use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{in_ring, Point2D};
use crate::error::{Error, Result};

/// Global regular lattice that catchment grid nodes are snapped to, so that
/// nested catchments share nodes exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLattice {
    pub origin: Point2D,
    pub spacing: f64,
}

impl Default for GridLattice {
    fn default() -> Self {
        Self { origin: Point2D::new(0.0, 0.0), spacing: 1.0 }
    }
}

impl GridLattice {
    pub fn key(&self, p: &Point2D) -> (i64, i64) {
        (((p.x - self.origin.x) / self.spacing).round() as i64, ((p.y - self.origin.y) / self.spacing).round() as i64)
    }

    pub fn point(&self, key: (i64, i64)) -> Point2D {
        Point2D::new(self.origin.x + key.0 as f64 * self.spacing, self.origin.y + key.1 as f64 * self.spacing)
    }
}

/// Polygon with optional holes; rings are closed implicitly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Vec<Point2D>,
    pub holes: Vec<Vec<Point2D>>,
}

impl Polygon {
    pub fn new(exterior: Vec<Point2D>) -> Self {
        Self { exterior, holes: Vec::new() }
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(vec![Point2D::new(x0, y0), Point2D::new(x1, y0), Point2D::new(x1, y1), Point2D::new(x0, y1)])
    }

    pub fn contains(&self, p: &Point2D) -> bool {
        in_ring(p, &self.exterior) && !self.holes.iter().any(|h| in_ring(p, h))
    }

    fn bbox(&self) -> (f64, f64, f64, f64) {
        self.exterior.iter().fold((f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY), |(a, b, c, d), p| {
            (a.min(p.x), b.min(p.y), c.max(p.x), d.max(p.y))
        })
    }
}

/// An areal unit represented by the lattice nodes that fall inside it.
#[derive(Clone, Debug, PartialEq)]
pub struct Catchment {
    id: String,
    lattice: GridLattice,
    keys: Vec<(i64, i64)>,
    nodes: Vec<Point2D>,
    parents: Vec<String>,
}

impl Catchment {
    /// Discretizes the union of `polygons` onto `lattice`.
    pub fn from_polygons(id: impl Into<String>, polygons: &[Polygon], lattice: GridLattice) -> Result<Self> {
        let id = id.into();
        if !(lattice.spacing > 0.0) {
            return Err(Error::InvalidInput("grid spacing must be positive".into()));
        }
        let mut keys = BTreeSet::new();
        for poly in polygons {
            if poly.exterior.len() < 3 {
                return Err(Error::InvalidInput(format!("catchment '{id}': polygon ring needs ≥ 3 vertices")));
            }
            let (x0, y0, x1, y1) = poly.bbox();
            let (i0, j0) = lattice.key(&Point2D::new(x0, y0));
            let (i1, j1) = lattice.key(&Point2D::new(x1, y1));
            for j in j0 - 1..=j1 + 1 {
                for i in i0 - 1..=i1 + 1 {
                    if poly.contains(&lattice.point((i, j))) {
                        keys.insert((i, j));
                    }
                }
            }
        }
        Self::from_keys(id, keys, lattice)
    }

    /// Builds a catchment from explicit node coordinates, snapping each to the lattice.
    pub fn from_nodes(id: impl Into<String>, nodes: &[Point2D], lattice: GridLattice) -> Result<Self> {
        let id = id.into();
        if let Some(p) = nodes.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!("catchment '{id}': non-finite node {p:?}")));
        }
        let keys: BTreeSet<_> = nodes.iter().map(|p| lattice.key(p)).collect();
        Self::from_keys(id, keys, lattice)
    }

    fn from_keys(id: String, keys: BTreeSet<(i64, i64)>, lattice: GridLattice) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::Degenerate(format!("catchment '{id}' contains no grid nodes")));
        }
        let keys: Vec<_> = keys.into_iter().collect();
        let nodes = keys.iter().map(|&k| lattice.point(k)).collect();
        Ok(Self { id, lattice, keys, nodes, parents: Vec::new() })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn nodes(&self) -> &[Point2D] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn spacing(&self) -> f64 {
        self.lattice.spacing
    }

    pub fn lattice(&self) -> &GridLattice {
        &self.lattice
    }

    pub fn parents(&self) -> &[String] {
        &self.parents
    }

    pub fn declare_parent(&mut self, parent: impl Into<String>) {
        let p = parent.into();
        if !self.parents.contains(&p) {
            self.parents.push(p);
        }
    }

    pub fn centroid(&self) -> Point2D {
        let n = self.nodes.len() as f64;
        let (sx, sy) = self.nodes.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
        Point2D::new(sx / n, sy / n)
    }

    /// True when every node of `self` is also a node of `other`.
    pub fn is_subset_of(&self, other: &Catchment) -> bool {
        self.lattice == other.lattice && self.keys.iter().all(|k| other.keys.binary_search(k).is_ok())
    }

    /// Nodes of `self` that are not nodes of `other`.
    pub fn nodes_outside(&self, other: &Catchment) -> Vec<Point2D> {
        self.keys.iter().filter(|k| other.keys.binary_search(k).is_err()).map(|&k| self.lattice.point(k)).collect()
    }
}

/// Checks declared parents and adds every inferred one: `B` is a parent of
/// `A` when all nodes of `A` are nodes of `B` and `B` is strictly larger.
pub fn resolve_nesting(catchments: &mut [Catchment]) -> Result<()> {
    for a in 0..catchments.len() {
        for p in catchments[a].parents.clone() {
            let b =
                catchments.iter().position(|c| c.id == p).ok_or_else(|| Error::UnknownId { kind: "catchment", id: p.clone() })?;
            if !catchments[a].is_subset_of(&catchments[b]) {
                return Err(Error::InvalidInput(format!(
                    "catchment '{}' declares parent '{}' but does not share all of its grid nodes",
                    catchments[a].id, p
                )));
            }
        }
    }
    for a in 0..catchments.len() {
        for b in 0..catchments.len() {
            if a != b && catchments[b].n_nodes() > catchments[a].n_nodes() && catchments[a].is_subset_of(&catchments[b]) {
                let id = catchments[b].id.clone();
                catchments[a].declare_parent(id);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_discretization_counts() {
        let c = Catchment::from_polygons("a", &[Polygon::rectangle(0.5, 0.5, 4.5, 3.5)], GridLattice::default()).unwrap();
        assert_eq!(c.n_nodes(), 4 * 3);
        assert!((c.spacing() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nested_polygons_share_nodes() {
        let lat = GridLattice::default();
        let big = Catchment::from_polygons("big", &[Polygon::rectangle(0.5, 0.5, 10.5, 10.5)], lat).unwrap();
        let small = Catchment::from_polygons("small", &[Polygon::rectangle(2.3, 2.3, 5.7, 4.2)], lat).unwrap();
        let mut all = vec![big, small];
        resolve_nesting(&mut all).unwrap();
        assert_eq!(all[1].parents(), &["big".to_string()]);
        assert!(all[0].parents().is_empty());
        assert_eq!(all[0].nodes_outside(&all[1]).len(), all[0].n_nodes() - all[1].n_nodes());
    }

    #[test]
    fn false_parent_declaration_is_rejected() {
        let lat = GridLattice::default();
        let a = Catchment::from_polygons("a", &[Polygon::rectangle(0.5, 0.5, 3.5, 3.5)], lat).unwrap();
        let mut b = Catchment::from_polygons("b", &[Polygon::rectangle(2.5, 2.5, 6.5, 6.5)], lat).unwrap();
        b.declare_parent("a");
        assert!(resolve_nesting(&mut [a, b]).is_err());
    }

    #[test]
    fn empty_polygon_errors() {
        let r = Catchment::from_polygons("tiny", &[Polygon::rectangle(0.1, 0.1, 0.2, 0.2)], GridLattice::default());
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn nodes_snap_to_lattice() {
        let c = Catchment::from_nodes(
            "c",
            &[Point2D::new(1.0000001, 2.0), Point2D::new(1.0, 2.0), Point2D::new(3.0, 2.0)],
            GridLattice::default(),
        )
        .unwrap();
        assert_eq!(c.n_nodes(), 2);
    }
}
