//! Builds each kind of node set and prints a short summary.
//!
//!     cargo run --example point_clouds

use gfdm::geometry::{save_cloud, CloudFormat};
use gfdm::prelude::*;

fn describe(name: &str, cloud: &PointCloud) {
    println!(
        "{name:<22} dim {}  nodes {:>4}  interior {:>4}  min separation {:.4}",
        cloud.dim(),
        cloud.len(),
        cloud.interior_count(),
        cloud.min_separation()
    );
}

fn main() -> gfdm::Result<()> {
    let square = Domain::unit(2)?;
    describe("regular 11x11", &generate_regular_grid(&square, 11)?);
    describe(
        "random 80 + 6-grid",
        &generate_random_cloud(&square, 80, &BoundarySpec::Grid(6), 7)?,
    );
    describe(
        "jittered 11x11",
        &generate_jittered_grid(&square, 11, 0.3, 7)?,
    );

    let line = Domain::unit(1)?;
    let mut cloud = generate_random_cloud(&line, 8, &BoundarySpec::Grid(2), 1)?;
    for level in 0..3 {
        describe(&format!("1D midpoint level {level}"), &cloud);
        cloud = refine_midpoints(&cloud)?;
    }

    let path = std::env::temp_dir().join("gfdm_example_cloud.csv");
    save_cloud(
        &generate_jittered_grid(&Domain::unit(3)?, 5, 0.2, 2)?,
        &path,
        CloudFormat::Csv,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}
