//! Stability bound on a grid, a jittered grid and a random cloud.
//!
//! The bound only looks at the centre coefficient. Random clouds often
//! produce stencils with negative neighbor coefficients, and those can
//! grow even when the bound passes; the spread column flags them.
//!
//!     cargo run --example stability_check

use gfdm::prelude::*;
use gfdm::stencil::coefficient_spread;

fn main() -> gfdm::Result<()> {
    let domain = Domain::unit(2)?;
    let rho = 0.01;
    let clouds = [
        ("grid", generate_regular_grid(&domain, 13)?),
        ("jittered", generate_jittered_grid(&domain, 13, 0.25, 1)?),
        (
            "random",
            generate_random_cloud(&domain, 121, &BoundarySpec::Grid(13), 1)?,
        ),
    ];
    println!(
        "{:<9} {:>12} {:>12} {:>9} {:>8}",
        "cloud", "max theta_c", "stable dt", "negative", "spread"
    );
    for (name, cloud) in &clouds {
        let stars = build_all_stars(cloud, default_star_size(2))?;
        let op = LaplacianOperator::build(&stars, &WeightSpec::default())?;
        let dt = max_stable_dt(rho, op.stencils(), 1.0)?;
        let (negative, spread) = coefficient_spread(op.stencils());
        println!(
            "{name:<9} {:>12.4e} {dt:>12.4e} {negative:>9} {spread:>8.3}",
            op.max_theta_c()
        );
        let report = check_stability(rho, 2.0 * dt, op.stencils());
        println!("          at twice that step: {report}");
    }
    Ok(())
}
