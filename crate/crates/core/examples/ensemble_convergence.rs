//! Ensemble mean errors on refined 3D grids.
//!
//!     cargo run --release --example ensemble_convergence [realizations]

use gfdm::ensemble::format_table;
use gfdm::prelude::*;

fn main() -> gfdm::Result<()> {
    let realizations = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("realizations must be an integer"))
        .unwrap_or(200);
    let study = StudyConfig::for_problem(
        ProblemId::Diffusion3d,
        EnsembleConfig::new(realizations, 1)?,
    );
    let domain = Domain::unit(3)?;
    let clouds = [4, 5, 6]
        .iter()
        .map(|&n| generate_regular_grid(&domain, n))
        .collect::<gfdm::Result<Vec<_>>>()?;
    let reports = convergence_study(&clouds, &study)?;
    print!("{}", format_table(&reports));
    Ok(())
}
