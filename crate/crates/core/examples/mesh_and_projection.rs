//! Builds the mesh of the synthetic study area and shows how point sites
//! and catchments map onto mesh vertices.
//!
//!     cargo run --example mesh_and_projection

use runoff_lgm::geometry::{areal_projector, build_mesh, point_projector, MeshSettings, Point2D};
use runoff_lgm::simstudy::{sim_catchments, SIM_SITES};

fn main() -> runoff_lgm::Result<()> {
    let catchments = sim_catchments()?;
    let sites: Vec<Point2D> = SIM_SITES.iter().map(|&(x, y)| Point2D::new(x, y)).collect();
    let nodes: Vec<Point2D> = catchments.iter().flat_map(|c| c.nodes().iter().copied()).collect();
    let mesh = build_mesh(&sites, &nodes, &MeshSettings::new(5.0).with_outer_edge(15.0).with_extension(60.0))?;
    println!(
        "mesh: {} vertices, {} triangles, area {:.0} km², longest edge {:.2} km",
        mesh.n_vertices(),
        mesh.triangles().len(),
        mesh.total_area(),
        mesh.max_edge_length()
    );

    // sites are mesh vertices; any other point is a barycentric
    // combination of three
    let p = Point2D::new(21.3, 44.8);
    let row = point_projector(&mesh, &p)?;
    println!("point ({}, {}):", p.x, p.y);
    for (v, w) in row.entries() {
        let p = mesh.vertices()[*v];
        println!("  vertex {v:>4} ({:7.2}, {:7.2}) weight {w:.4}", p.x, p.y);
    }

    // a catchment is the average over its 1 km grid nodes
    for c in &catchments {
        let row = areal_projector(&mesh, c)?;
        println!(
            "{}: {} grid nodes, {} vertices touched, weights sum to {:.12}",
            c.id(),
            c.n_nodes(),
            row.nnz(),
            row.weight_sum()
        );
    }
    Ok(())
}
