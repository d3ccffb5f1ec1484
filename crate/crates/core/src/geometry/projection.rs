use std::collections::BTreeMap;

use super::{Catchment, Point2D, TriangleMesh};
use crate::error::{Error, Result};

/// Sparse non-negative weights over mesh vertices summing to one.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProjectionRow {
    entries: Vec<(usize, f64)>,
}

impl ProjectionRow {
    /// Builds a row from `(vertex, weight)` pairs; duplicates are merged and
    /// zero weights dropped.
    pub fn from_entries(entries: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, w) in entries {
            *acc.entry(i).or_default() += w;
        }
        Self { entries: acc.into_iter().filter(|&(_, w)| w != 0.0).collect() }
    }

    pub fn unit(vertex: usize) -> Self {
        Self { entries: vec![(vertex, 1.0)] }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn weight_sum(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn weight(&self, vertex: usize) -> f64 {
        match self.entries.binary_search_by_key(&vertex, |e| e.0) {
            Ok(k) => self.entries[k].1,
            Err(_) => 0.0,
        }
    }

    pub fn dot(&self, field: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| w * field[i]).sum()
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        Self::from_entries(self.entries.iter().map(|&(i, w)| (i, a * w)).chain(other.entries.iter().map(|&(i, w)| (i, b * w))))
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut d = vec![0.0; n];
        for &(i, w) in &self.entries {
            d[i] += w;
        }
        d
    }

    /// Arithmetic mean of several rows.
    pub fn mean(rows: &[ProjectionRow]) -> Self {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for r in rows {
            for &(i, w) in &r.entries {
                *acc.entry(i).or_default() += w;
            }
        }
        let n = rows.len() as f64;
        Self { entries: acc.into_iter().map(|(i, w)| (i, w / n)).filter(|&(_, w)| w != 0.0).collect() }
    }
}

/// Barycentric interpolation row for a location.
pub fn point_projector(mesh: &TriangleMesh, location: &Point2D) -> Result<ProjectionRow> {
    let (t, bary) = mesh.locate(location).ok_or(Error::OutsideMesh { x: location.x, y: location.y })?;
    let tri = mesh.triangles()[t];
    Ok(ProjectionRow::from_entries((0..3).filter(|&k| bary[k] > 0.0).map(|k| (tri[k], bary[k]))))
}

/// Mean of the point projectors of `nodes`.
pub fn nodes_projector(mesh: &TriangleMesh, nodes: &[Point2D]) -> Result<ProjectionRow> {
    if nodes.is_empty() {
        return Err(Error::Degenerate("cannot average over an empty node set".into()));
    }
    let rows = nodes.iter().map(|p| point_projector(mesh, p)).collect::<Result<Vec<_>>>()?;
    Ok(ProjectionRow::mean(&rows))
}

/// Grid-node average of point projectors over a catchment's discretization.
pub fn areal_projector(mesh: &TriangleMesh, catchment: &Catchment) -> Result<ProjectionRow> {
    nodes_projector(mesh, catchment.nodes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{resolve_nesting, GridLattice, Polygon};

    fn mesh() -> TriangleMesh {
        TriangleMesh::regular_grid(Point2D::new(0.0, 0.0), 6, 6, 2.0).unwrap()
    }

    #[test]
    fn vertex_edge_and_centroid_weights() {
        let m = mesh();
        let v = 8;
        let row = point_projector(&m, &m.vertices()[v]).unwrap();
        assert_eq!(row.entries(), &[(v, 1.0)]);

        let [a, b, c] = m.triangles()[3];
        let (pa, pb, pc) = (m.vertices()[a], m.vertices()[b], m.vertices()[c]);
        let mid = Point2D::new(0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y));
        let row = point_projector(&m, &mid).unwrap();
        assert_eq!(row.nnz(), 2);
        assert!((row.weight(a) - 0.5).abs() < 1e-12 && (row.weight(b) - 0.5).abs() < 1e-12);

        let cen = Point2D::new((pa.x + pb.x + pc.x) / 3.0, (pa.y + pb.y + pc.y) / 3.0);
        let row = point_projector(&m, &cen).unwrap();
        for k in [a, b, c] {
            assert!((row.weight(k) - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_location_errors() {
        assert!(matches!(point_projector(&mesh(), &Point2D::new(-1.0, 3.0)), Err(Error::OutsideMesh { .. })));
    }

    #[test]
    fn two_node_catchment_on_vertices() {
        let m = mesh();
        let c = Catchment::from_nodes("c", &[Point2D::new(2.0, 2.0), Point2D::new(4.0, 2.0)], GridLattice::default()).unwrap();
        let row = areal_projector(&m, &c).unwrap();
        assert_eq!(row.nnz(), 2);
        assert!(row.entries().iter().all(|e| (e.1 - 0.5).abs() < 1e-15));
        let field = vec![3.25; m.n_vertices()];
        assert!((row.dot(&field) - 3.25).abs() < 1e-14);
    }

    #[test]
    fn nested_water_balance_identity() {
        let m = mesh();
        let lat = GridLattice::default();
        // main: 10 nodes, sub: 4 of them
        let main_nodes: Vec<Point2D> =
            (0..5).flat_map(|i| (0..2).map(move |j| Point2D::new(1.0 + 2.0 * i as f64, 3.0 + j as f64))).collect();
        let sub_nodes: Vec<Point2D> = main_nodes[..4].to_vec();
        let main = Catchment::from_nodes("main", &main_nodes, lat).unwrap();
        let sub = Catchment::from_nodes("sub", &sub_nodes, lat).unwrap();
        assert_eq!((main.n_nodes(), sub.n_nodes()), (10, 4));
        let mut cs = vec![main.clone(), sub.clone()];
        resolve_nesting(&mut cs).unwrap();
        let row_main = areal_projector(&m, &main).unwrap();
        let row_sub = areal_projector(&m, &sub).unwrap();
        let row_rest = nodes_projector(&m, &main.nodes_outside(&sub)).unwrap();
        let rebuilt = row_sub.combine(0.4, &row_rest, 0.6);
        for i in 0..m.n_vertices() {
            assert!((rebuilt.weight(i) - row_main.weight(i)).abs() < 1e-15);
        }
        assert!((row_main.weight_sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn polygon_rows_are_convex() {
        let m = mesh();
        let c = Catchment::from_polygons("p", &[Polygon::rectangle(1.5, 1.5, 9.5, 7.5)], GridLattice::default()).unwrap();
        let row = areal_projector(&m, &c).unwrap();
        assert!(row.entries().iter().all(|e| e.1 > 0.0));
        assert!((row.weight_sum() - 1.0).abs() < 1e-12);
    }
}
