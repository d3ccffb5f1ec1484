//! Draws a Matérn field through its sparse SPDE precision and compares the
//! empirical covariance against the closed-form Matérn covariance.
//!
//!     cargo run --release --example spde_field

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use runoff_lgm::geometry::{fem_matrices, Point2D, TriangleMesh};
use runoff_lgm::spde::{matern_covariance, MaternParams, PrecisionTemplate};

fn main() -> runoff_lgm::Result<()> {
    let (n, h) = (100, 1.0);
    // lags run along rows, away from the boundary
    let mesh = TriangleMesh::regular_grid(Point2D::new(0.0, 0.0), n, n, h)?;
    let fem = fem_matrices(&mesh)?;
    let params = MaternParams::new(15.0, 0.7)?;
    let template = PrecisionTemplate::new(&fem)?;
    let q = template.precision(&params)?;
    let factor = template.factor(&params)?;
    println!("precision: {} × {}, {} non-zeros, log det {:.2}", q.n_rows(), q.n_cols(), q.nnz(), factor.log_det());

    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let centres = [idx(30, 30), idx(30, 60), idx(50, 45)];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws = 1000;
    let lags = [0usize, 5, 10, 15, 20];
    let mut acc = vec![0.0; lags.len()];
    for _ in 0..draws {
        let z: Vec<f64> = (0..mesh.n_vertices()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x = factor.sample_transform(&z);
        for (k, &l) in lags.iter().enumerate() {
            for &c in &centres {
                acc[k] += x[c] * x[c + l];
            }
        }
    }
    println!("lag km   empirical   Matérn");
    for (k, &l) in lags.iter().enumerate() {
        let d = l as f64 * h;
        println!("{d:6.1} {:11.4} {:8.4}", acc[k] / (draws * centres.len()) as f64, matern_covariance(d, &params));
    }
    Ok(())
}
