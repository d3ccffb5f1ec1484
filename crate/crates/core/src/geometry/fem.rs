use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Piecewise-linear finite element matrices of a mesh.
#[derive(Clone, Debug)]
pub struct FemMatrices {
    /// Lumped mass matrix diagonal (km²).
    pub c: Vec<f64>,
    /// Stiffness matrix.
    pub g: CsrMatrix,
}

impl FemMatrices {
    pub fn c_matrix(&self) -> CsrMatrix {
        CsrMatrix::diagonal(&self.c)
    }

    pub fn total_mass(&self) -> f64 {
        self.c.iter().sum()
    }
}

pub fn fem_matrices(mesh: &TriangleMesh) -> Result<FemMatrices> {
    let n = mesh.n_vertices();
    let v = mesh.vertices();
    let mut c = vec![0.0; n];
    let mut t = Vec::with_capacity(9 * mesh.triangles().len());
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(k);
        if !(area > 0.0) {
            return Err(Error::Degenerate(format!("triangle {k} has non-positive area {area}")));
        }
        let p = tri.map(|i| v[i]);
        let b = [p[1].y - p[2].y, p[2].y - p[0].y, p[0].y - p[1].y];
        let cc = [p[2].x - p[1].x, p[0].x - p[2].x, p[1].x - p[0].x];
        for i in 0..3 {
            c[tri[i]] += area / 3.0;
            for j in 0..3 {
                t.push((tri[i], tri[j], (b[i] * b[j] + cc[i] * cc[j]) / (4.0 * area)));
            }
        }
    }
    Ok(FemMatrices { c, g: CsrMatrix::from_triplets(n, n, &t) })
}
