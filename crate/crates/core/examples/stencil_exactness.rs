//! Derivative stencils of a scattered star recover a quadratic exactly.
//!
//!     cargo run --example stencil_exactness

use gfdm::prelude::*;

fn main() -> gfdm::Result<()> {
    let offsets = [
        [0.11, 0.02, 0.0],
        [-0.07, 0.09, 0.0],
        [0.01, -0.12, 0.0],
        [-0.10, -0.04, 0.0],
        [0.06, 0.08, 0.0],
        [0.13, -0.07, 0.0],
        [-0.03, 0.15, 0.0],
        [-0.12, 0.10, 0.0],
    ];
    let star = Star::from_offsets(2, &offsets)?;
    let f = |p: &[f64; 3]| {
        1.0 + 2.0 * p[0] - p[1] + 1.5 * p[0] * p[0] + 0.5 * p[0] * p[1] - 2.0 * p[1] * p[1]
    };

    let w = star_weights(&WeightSpec::default(), &star)?;
    let sys = assemble_moment_system(&star, &w)?;
    let pair = cholesky(&sys)?;
    let d = derivative_coefficients(&sys, &pair);
    // stars keep their neighbors sorted by distance
    let u: Vec<f64> = star.offsets().iter().map(f).collect();
    let got = d.apply(f(&[0.0; 3]), &u)?;

    let names = ["u_x", "u_y", "u_xx", "u_yy", "u_xy"];
    let exact = [2.0, -1.0, 3.0, -4.0, 0.5];
    for ((n, g), e) in names.iter().zip(&got).zip(&exact) {
        println!("{n:<5} {g:>12.9} (exact {e})");
    }

    let lap = laplacian_stencil(&star, &d);
    println!(
        "theta_c = {:.4}, sum theta_i = {:.4}",
        lap.theta_c,
        lap.theta.iter().sum::<f64>()
    );
    Ok(())
}
