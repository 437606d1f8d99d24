//! One stochastic path of the 1D problem next to the deterministic solution.
//!
//!     cargo run --example single_realization

use gfdm::prelude::*;

fn main() -> gfdm::Result<()> {
    let study = StudyConfig::for_problem(ProblemId::Diffusion1d, EnsembleConfig::new(1, 1)?);
    let cloud = generate_regular_grid(&Domain::unit(1)?, 37)?;
    let solve = Solve::prepare(cloud, &study)?;
    println!(
        "{}",
        check_stability(study.rho, solve.spec.dt(), solve.op.stencils())
    );

    let noisy = run_realization(&solve.cloud, &solve.op, &solve.spec, 42)?;
    let calm = run_realization(&solve.cloud, &solve.op, &solve.spec.with_mu(0.0)?, 42)?;
    let mid = solve
        .cloud
        .coords()
        .iter()
        .position(|x| (x[0] - 0.5).abs() < 1e-12)
        .expect("grid has x = 0.5");
    println!("{:>6} {:>10} {:>10} {:>10}", "t", "mu=0.1", "mu=0", "exact");
    for s in noisy.iter().step_by(noisy.len() / 10) {
        println!(
            "{:>6.3} {:>10.6} {:>10.6} {:>10.6}",
            s.t,
            s.u[mid],
            calm[s.k].u[mid],
            solve.exact.eval(solve.cloud.coord(mid), s.t)
        );
    }
    Ok(())
}
