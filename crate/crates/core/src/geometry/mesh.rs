use std::collections::HashMap;
use std::f64::consts::PI;

use spade::{DelaunayTriangulation, Point2, Triangulation};

use super::{convex_hull, convex_signed_distance, orient, Point2D};
use crate::error::{Error, Result};

/// Barycentric containment tolerance.
pub const CONTAINMENT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct MeshSettings {
    /// Maximum triangle edge length inside the data hull (km).
    pub max_edge: f64,
    /// Maximum edge length in the outer extension; defaults to `max_edge`.
    pub outer_max_edge: Option<f64>,
    /// Extension beyond the convex hull (km); defaults to 30% of the data diameter.
    pub extension: Option<f64>,
}

impl MeshSettings {
    pub fn new(max_edge: f64) -> Self {
        Self { max_edge, outer_max_edge: None, extension: None }
    }

    pub fn with_outer_edge(mut self, outer: f64) -> Self {
        self.outer_max_edge = Some(outer);
        self
    }

    pub fn with_extension(mut self, ext: f64) -> Self {
        self.extension = Some(ext);
        self
    }
}

#[derive(Clone, Debug)]
pub struct TriangleMesh {
    vertices: Vec<Point2D>,
    triangles: Vec<[usize; 3]>,
    extension: f64,
    /// Convex hull of the points the mesh was built around.
    data_hull: Vec<Point2D>,
    locator: Locator,
}

#[derive(Clone, Debug)]
struct Locator {
    origin: Point2D,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn new(vertices: &[Point2D], triangles: &[[usize; 3]]) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in vertices {
            x0 = x0.min(v.x);
            y0 = y0.min(v.y);
            x1 = x1.max(v.x);
            y1 = y1.max(v.y);
        }
        let area = ((x1 - x0) * (y1 - y0)).max(1e-12);
        let cell = (2.0 * area / triangles.len().max(1) as f64).sqrt().max(1e-9);
        let nx = (((x1 - x0) / cell).floor() as usize + 1).min(4096);
        let ny = (((y1 - y0) / cell).floor() as usize + 1).min(4096);
        let cell = cell.max((x1 - x0) / nx as f64).max((y1 - y0) / ny as f64);
        let mut loc = Self { origin: Point2D::new(x0, y0), cell, nx, ny, buckets: vec![Vec::new(); nx * ny] };
        for (t, tri) in triangles.iter().enumerate() {
            let ps = tri.map(|i| vertices[i]);
            let (bx0, bx1) =
                (ps.iter().map(|p| p.x).fold(f64::INFINITY, f64::min), ps.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max));
            let (by0, by1) =
                (ps.iter().map(|p| p.y).fold(f64::INFINITY, f64::min), ps.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max));
            let (i0, j0) = loc.cell_of(bx0 - 1e-7, by0 - 1e-7);
            let (i1, j1) = loc.cell_of(bx1 + 1e-7, by1 + 1e-7);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    loc.buckets[j * nx + i].push(t);
                }
            }
        }
        loc
    }

    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let i = ((x - self.origin.x) / self.cell).floor().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((y - self.origin.y) / self.cell).floor().clamp(0.0, (self.ny - 1) as f64) as usize;
        (i, j)
    }
}

impl TriangleMesh {
    /// Builds a mesh from explicit vertices and counter-clockwise triangles.
    pub fn from_parts(vertices: Vec<Point2D>, triangles: Vec<[usize; 3]>, extension: f64) -> Result<Self> {
        if vertices.len() < 3 || triangles.is_empty() {
            return Err(Error::Degenerate("a mesh needs at least 3 vertices and one triangle".into()));
        }
        if let Some(v) = vertices.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite vertex {v:?}")));
        }
        let mut triangles = triangles;
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::InvalidInput(format!("triangle {t} references a missing vertex")));
            }
            let a = orient(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if a.abs() <= 1e-12 {
                return Err(Error::Degenerate(format!("triangle {t} has zero area")));
            }
            if a < 0.0 {
                tri.swap(1, 2);
            }
        }
        let data_hull = convex_hull(&vertices);
        let locator = Locator::new(&vertices, &triangles);
        Ok(Self { vertices, triangles, extension, data_hull, locator })
    }

    /// Structured mesh of right triangles on an `nx × ny` cell grid with
    /// spacing `h`, lower-left corner at `origin`. Diagonals alternate so the
    /// mesh has no preferred direction.
    pub fn regular_grid(origin: Point2D, nx: usize, ny: usize, h: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || !(h > 0.0) {
            return Err(Error::InvalidInput("regular grid needs nx, ny ≥ 1 and h > 0".into()));
        }
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let vertices = (0..=ny)
            .flat_map(|j| (0..=nx).map(move |i| Point2D::new(origin.x + i as f64 * h, origin.y + j as f64 * h)))
            .collect();
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                if (i + j) % 2 == 0 {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                } else {
                    triangles.push([a, b, d]);
                    triangles.push([b, c, d]);
                }
            }
        }
        Self::from_parts(vertices, triangles, 0.0)
    }

    pub fn vertices(&self) -> &[Point2D] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn extension(&self) -> f64 {
        self.extension
    }

    /// Convex hull of the points the mesh was built around (the whole mesh
    /// hull for meshes built from parts).
    pub fn data_hull(&self) -> &[Point2D] {
        &self.data_hull
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * orient(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| self.vertices[a].dist(&self.vertices[b]))
            .fold(0.0, f64::max)
    }

    /// Vertex indices on the mesh boundary (edges used by one triangle only).
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut out: Vec<usize> = count.into_iter().filter(|&(_, c)| c == 1).flat_map(|((a, b), _)| [a, b]).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Distance from `p` to the nearest boundary edge of the mesh.
    pub fn distance_to_boundary(&self, p: &Point2D) -> f64 {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        count
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|((a, b), _)| super::segment_distance(p, &self.vertices[a], &self.vertices[b]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Finds a triangle containing `p` and its barycentric coordinates.
    pub fn locate(&self, p: &Point2D) -> Option<(usize, [f64; 3])> {
        if !p.is_finite() {
            return None;
        }
        let loc = &self.locator;
        let (i, j) = loc.cell_of(p.x, p.y);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &loc.buckets[j * loc.nx + i] {
            let [a, b, c] = self.triangles[t];
            let (pa, pb, pc) = (&self.vertices[a], &self.vertices[b], &self.vertices[c]);
            let area = orient(pa, pb, pc);
            let l0 = orient(p, pb, pc) / area;
            let l1 = orient(pa, p, pc) / area;
            let l2 = 1.0 - l0 - l1;
            let min = l0.min(l1).min(l2);
            if min >= -CONTAINMENT_TOL && best.as_ref().is_none_or(|b| min > b.2) {
                best = Some((t, [l0, l1, l2], min));
            }
        }
        best.map(|(t, mut l, _)| {
            l.iter_mut().for_each(|v| *v = v.max(0.0));
            let s: f64 = l.iter().sum();
            l.iter_mut().for_each(|v| *v /= s);
            (t, l)
        })
    }

    pub fn contains(&self, p: &Point2D) -> bool {
        self.locate(p).is_some()
    }

    /// Splits every triangle into four through its edge midpoints.
    pub fn refined(&self) -> Result<Self> {
        let mut vertices = self.vertices.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point2D>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (pa, pb) = (vertices[a], vertices[b]);
                vertices.push(Point2D::new(0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y)));
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        let mut out = Self::from_parts(vertices, triangles, self.extension)?;
        out.data_hull = self.data_hull.clone();
        Ok(out)
    }
}

fn lattice_points(x0: f64, y0: f64, x1: f64, y1: f64, h: f64) -> Vec<Point2D> {
    let dy = h * 3f64.sqrt() / 2.0;
    let j0 = (y0 / dy).floor() as i64 - 1;
    let j1 = (y1 / dy).ceil() as i64 + 1;
    let mut out = Vec::new();
    for j in j0..=j1 {
        let shift = if j.rem_euclid(2) == 1 { 0.5 * h } else { 0.0 };
        let i0 = ((x0 - shift) / h).floor() as i64 - 1;
        let i1 = ((x1 - shift) / h).ceil() as i64 + 1;
        for i in i0..=i1 {
            out.push(Point2D::new(i as f64 * h + shift, j as f64 * dy));
        }
    }
    out
}

/// Builds a Delaunay mesh covering the convex hull of `sites` and `grid_nodes`
/// extended outward. Sites become mesh vertices; grid nodes only need to be
/// covered.
pub fn build_mesh(sites: &[Point2D], grid_nodes: &[Point2D], settings: &MeshSettings) -> Result<TriangleMesh> {
    let h = settings.max_edge;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("max edge must be positive, got {h}")));
    }
    let h_out = settings.outer_max_edge.unwrap_or(h).max(h);
    let mut all: Vec<Point2D> = sites.iter().chain(grid_nodes).copied().collect();
    if let Some(p) = all.iter().find(|p| !p.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite input point {p:?}")));
    }
    all.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    all.dedup();
    if all.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 distinct points, got {}", all.len())));
    }
    let hull = convex_hull(&all);
    let hull_area: f64 =
        0.5 * (0..hull.len()).map(|i| orient(&Point2D::new(0.0, 0.0), &hull[i], &hull[(i + 1) % hull.len()])).sum::<f64>();
    let diameter = all.iter().flat_map(|a| hull.iter().map(move |b| a.dist(b))).fold(0.0, f64::max);
    if hull.len() < 3 || hull_area <= 1e-12 * diameter * diameter {
        return Err(Error::Degenerate("input points are collinear".into()));
    }
    let ext = settings.extension.unwrap_or(0.3 * diameter).max(0.0);

    let outer = if ext > 0.0 {
        let ring: Vec<Point2D> = hull
            .iter()
            .flat_map(|v| {
                (0..32).map(move |k| {
                    let a = 2.0 * PI * k as f64 / 32.0;
                    Point2D::new(v.x + ext * a.cos(), v.y + ext * a.sin())
                })
            })
            .collect();
        convex_hull(&ring)
    } else {
        hull.clone()
    };
    let boundary_spacing = if ext > 0.0 { h_out } else { h };

    let mut points: Vec<Point2D> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut push = |p: Point2D, points: &mut Vec<Point2D>| {
        if seen.insert((p.x.to_bits(), p.y.to_bits())) {
            points.push(p);
        }
    };
    for s in sites {
        push(*s, &mut points);
    }
    for i in 0..outer.len() {
        let (a, b) = (outer[i], outer[(i + 1) % outer.len()]);
        let n = (a.dist(&b) / boundary_spacing).ceil().max(1.0) as usize;
        for k in 0..n {
            let t = k as f64 / n as f64;
            push(Point2D::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)), &mut points);
        }
    }
    if ext == 0.0 {
        // keep hull corners exact so every input point is covered
        for v in &hull {
            push(*v, &mut points);
        }
    }
    let (bx0, bx1) =
        (outer.iter().map(|p| p.x).fold(f64::INFINITY, f64::min), outer.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max));
    let (by0, by1) =
        (outer.iter().map(|p| p.y).fold(f64::INFINITY, f64::min), outer.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max));
    let too_close_to_site = |p: &Point2D, r: f64| sites.iter().any(|s| s.dist(p) < r);
    for p in lattice_points(bx0, by0, bx1, by1, h) {
        let d_outer = convex_signed_distance(&p, &outer);
        let d_hull = convex_signed_distance(&p, &hull);
        if d_outer <= -0.5 * h && (h_out == h || d_hull <= h) && !too_close_to_site(&p, 0.5 * h) {
            push(p, &mut points);
        }
    }
    if h_out > h {
        for p in lattice_points(bx0, by0, bx1, by1, h_out) {
            let d_outer = convex_signed_distance(&p, &outer);
            let d_hull = convex_signed_distance(&p, &hull);
            if d_outer <= -0.5 * h_out && d_hull >= h + 0.5 * h_out && !too_close_to_site(&p, 0.5 * h) {
                push(p, &mut points);
            }
        }
    }

    let mut dt: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    for p in &points {
        dt.insert(Point2::new(p.x, p.y)).map_err(|e| Error::Degenerate(format!("triangulation failed: {e:?}")))?;
    }
    let allowed = |a: &Point2D, b: &Point2D| {
        let m = Point2D::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y));
        if convex_signed_distance(&m, &hull) <= h {
            h
        } else {
            h_out
        }
    };
    for _round in 0..64 {
        let mut splits = Vec::new();
        for e in dt.undirected_edges() {
            let [a, b] = e.positions();
            let (a, b) = (Point2D::new(a.x, a.y), Point2D::new(b.x, b.y));
            if a.dist(&b) > allowed(&a, &b) * (1.0 + 1e-9) {
                splits.push(Point2D::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y)));
            }
        }
        if splits.is_empty() {
            break;
        }
        for p in splits {
            dt.insert(Point2::new(p.x, p.y)).map_err(|e| Error::Degenerate(format!("triangulation failed: {e:?}")))?;
        }
    }

    let vertices: Vec<Point2D> = dt.vertices().map(|v| Point2D::new(v.position().x, v.position().y)).collect();
    let triangles: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| f.vertices().map(|v| v.fix().index()))
        // slivers between nearly collinear boundary points carry no area
        .filter(|t| {
            let p = t.map(|i| vertices[i]);
            let longest = p[0].dist(&p[1]).max(p[1].dist(&p[2])).max(p[2].dist(&p[0]));
            orient(&p[0], &p[1], &p[2]).abs() > 1e-9 * longest * longest
        })
        .collect();
    // boundary points whose only triangles were slivers are dropped
    let mut used = vec![false; vertices.len()];
    triangles.iter().flatten().for_each(|&v| used[v] = true);
    let mut index = vec![usize::MAX; vertices.len()];
    let mut kept = Vec::with_capacity(vertices.len());
    for (v, p) in vertices.iter().enumerate().filter(|(v, _)| used[*v]) {
        index[v] = kept.len();
        kept.push(*p);
    }
    let triangles: Vec<[usize; 3]> = triangles.iter().map(|t| t.map(|v| index[v])).collect();
    let mut mesh = TriangleMesh::from_parts(kept, triangles, ext)?;
    mesh.data_hull = hull;
    if let Some(p) = all.iter().find(|p| !mesh.contains(p)) {
        return Err(Error::OutsideMesh { x: p.x, y: p.y });
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(side: f64, step: f64) -> Vec<Point2D> {
        let n = (side / step).round() as usize;
        (0..=n).flat_map(|i| (0..=n).map(move |j| Point2D::new(i as f64 * step, j as f64 * step))).collect()
    }

    #[test]
    fn minimal_triangle_input() {
        let pts = [Point2D::new(0.0, 0.0), Point2D::new(10.0, 0.0), Point2D::new(0.0, 10.0)];
        let mesh = build_mesh(&pts, &[], &MeshSettings::new(1e6)).unwrap();
        assert!(mesh.n_vertices() >= 3);
        assert!(!mesh.triangles().is_empty());
        for p in &pts {
            assert!(mesh.contains(p));
            // sites are vertices
            assert!(mesh.vertices().iter().any(|v| v == p));
        }
    }

    #[test]
    fn study_area_square_respects_edge_bound() {
        let corners = [Point2D::new(0.0, 0.0), Point2D::new(80.0, 0.0), Point2D::new(80.0, 80.0), Point2D::new(0.0, 80.0)];
        let mesh = build_mesh(&corners, &square(80.0, 10.0), &MeshSettings::new(5.0)).unwrap();
        assert!(mesh.max_edge_length() <= 5.0 + 1e-9, "max edge {}", mesh.max_edge_length());
        for t in 0..mesh.triangles().len() {
            assert!(mesh.triangle_area(t) > 0.0);
        }
    }

    #[test]
    fn mesh_is_deterministic() {
        let sites = [Point2D::new(3.0, 4.0), Point2D::new(20.0, 7.5), Point2D::new(11.0, 25.0), Point2D::new(14.2, 13.1)];
        let s = MeshSettings::new(4.0).with_outer_edge(9.0);
        let a = build_mesh(&sites, &[], &s).unwrap();
        let b = build_mesh(&sites, &[], &s).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        assert_eq!(a.triangles(), b.triangles());
    }

    #[test]
    fn rejects_degenerate_input() {
        let two = [Point2D::new(0.0, 0.0), Point2D::new(1.0, 1.0), Point2D::new(1.0, 1.0)];
        assert!(build_mesh(&two, &[], &MeshSettings::new(1.0)).is_err());
        let line = [Point2D::new(0.0, 0.0), Point2D::new(1.0, 1.0), Point2D::new(2.0, 2.0)];
        assert!(matches!(build_mesh(&line, &[], &MeshSettings::new(1.0)), Err(Error::Degenerate(_))));
        assert!(build_mesh(&line, &[], &MeshSettings::new(0.0)).is_err());
    }

    #[test]
    fn outer_edge_coarsens_extension() {
        let corners = [Point2D::new(0.0, 0.0), Point2D::new(40.0, 0.0), Point2D::new(40.0, 40.0), Point2D::new(0.0, 40.0)];
        let fine = build_mesh(&corners, &[], &MeshSettings::new(4.0)).unwrap();
        let coarse = build_mesh(&corners, &[], &MeshSettings::new(4.0).with_outer_edge(12.0)).unwrap();
        assert!(coarse.n_vertices() < fine.n_vertices());
        assert!(coarse.max_edge_length() <= 12.0 + 1e-9);
    }

    #[test]
    fn regular_grid_areas() {
        let m = TriangleMesh::regular_grid(Point2D::new(0.0, 0.0), 4, 3, 2.0).unwrap();
        assert_eq!(m.n_vertices(), 20);
        assert!((m.total_area() - 48.0).abs() < 1e-12);
        assert!(m.locate(&Point2D::new(8.5, 1.0)).is_none());
    }
}
