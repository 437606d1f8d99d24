//! Nearest-neighbor stars and the three weight functions on one star.
//!
//!     cargo run --example stars_and_weights

use gfdm::prelude::*;

fn main() -> gfdm::Result<()> {
    let cloud = generate_random_cloud(&Domain::unit(2)?, 30, &BoundarySpec::Grid(4), 5)?;
    let m = default_star_size(2);
    let stars = build_all_stars(&cloud, m)?;
    println!("{} stars of {m} neighbors", stars.len());

    let star = &stars.stars()[0];
    let c = cloud.coord(star.center());
    println!("center {} at ({:.3}, {:.3})", star.center(), c[0], c[1]);

    let specs = [
        WeightSpec::default(),
        WeightSpec::exponential(2.0)?,
        WeightSpec::cubic_spline(),
    ];
    let weights: Vec<Vec<f64>> = specs
        .iter()
        .map(|s| star_weights(s, star))
        .collect::<gfdm::Result<_>>()?;
    println!(
        "{:>5} {:>9} {:>12} {:>12} {:>12}",
        "node", "distance", "potential", "exponential", "spline"
    );
    for (i, (&j, d)) in star.neighbors().iter().zip(star.distances()).enumerate() {
        println!(
            "{j:>5} {d:>9.4} {:>12.4e} {:>12.4e} {:>12.4e}",
            weights[0][i], weights[1][i], weights[2][i]
        );
    }
    Ok(())
}
