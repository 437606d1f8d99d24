use std::sync::Arc;

use gfdm::ensemble::{linf_error_final, realization_seed};
use gfdm::prelude::*;
use gfdm::sde::{sample_wiener_increment, Increment};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn line_setup(n: usize) -> (PointCloud, LaplacianOperator) {
    let cloud = generate_regular_grid(&Domain::unit(1).unwrap(), n).unwrap();
    let stars = build_all_stars(&cloud, 4).unwrap();
    let op = LaplacianOperator::build(&stars, &WeightSpec::default()).unwrap();
    (cloud, op)
}

fn sine_problem(rho: f64, mu: f64, dt: f64, amp: f64) -> ProblemSpec {
    ProblemSpec::new(
        rho,
        mu,
        1.0,
        dt,
        Arc::new(move |x| amp * (std::f64::consts::PI * x[0]).sin()),
        Arc::new(move |x, _| amp * x[0] * 0.25),
    )
    .unwrap()
}

#[test]
fn trajectories_are_linear_in_the_data() {
    let (cloud, op) = line_setup(19);
    let a = run_realization(&cloud, &op, &sine_problem(0.005, 0.3, 0.01, 1.0), 11).unwrap();
    let b = run_realization(&cloud, &op, &sine_problem(0.005, 0.3, 0.01, -3.5), 11).unwrap();
    for (sa, sb) in a.iter().zip(&b) {
        for (x, y) in sa.u.iter().zip(&sb.u) {
            assert!((-3.5 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}

#[test]
fn shared_increment_scales_every_interior_node_alike() {
    // constant data: the Laplacian vanishes, so one step multiplies interior
    // nodes by 1 + mu dW and leaves boundary nodes at F
    let (cloud, op) = line_setup(11);
    let spec =
        ProblemSpec::new(0.01, 0.7, 1.0, 0.1, Arc::new(|_| 2.0), Arc::new(|_, _| 2.0)).unwrap();
    let stepper = Stepper::new(&cloud, &op, &spec).unwrap();
    let u0 = stepper.initial_state();
    let next = stepper.step(&u0, Increment::Shared(0.05)).unwrap();
    for i in cloud.interior_indices() {
        assert!((next.u[i] - 2.0 * (1.0 + 0.7 * 0.05)).abs() < 1e-12);
    }
    for i in cloud.boundary_indices() {
        assert_eq!(next.u[i], 2.0);
    }
    let per_node: Vec<f64> = (0..op.len()).map(|r| 0.01 * r as f64).collect();
    let next = stepper.step(&u0, Increment::PerNode(&per_node)).unwrap();
    let interior = cloud.interior_indices();
    assert!((next.u[interior[0]] - 2.0).abs() < 1e-12);
    assert!(next.u[interior[1]] != next.u[interior[2]]);
}

#[test]
fn per_node_mode_draws_one_increment_per_interior_node() {
    let (cloud, op) = line_setup(11);
    let mut spec =
        ProblemSpec::new(0.01, 0.5, 1.0, 0.1, Arc::new(|_| 1.0), Arc::new(|_, _| 1.0)).unwrap();
    spec.noise = NoiseMode::PerNode;
    let out = run_realization(&cloud, &op, &spec, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dw: Vec<f64> = (0..op.len())
        .map(|_| sample_wiener_increment(&mut rng, 0.1))
        .collect();
    for (r, &c) in cloud.interior_indices().iter().enumerate() {
        assert!((out[1].u[c] - (1.0 + 0.5 * dw[r])).abs() < 1e-12);
    }
}

#[test]
fn zero_noise_is_seed_independent_and_collapses_the_ensemble() {
    let (cloud, op) = line_setup(19);
    let spec = sine_problem(0.005, 0.0, 0.01, 1.0);
    let a = run_realization(&cloud, &op, &spec, 1).unwrap();
    let b = run_realization(&cloud, &op, &spec, 987_654).unwrap();
    assert_eq!(a, b);
    let one = run_ensemble(&cloud, &op, &spec, &EnsembleConfig::new(1, 3).unwrap()).unwrap();
    let five = run_ensemble(&cloud, &op, &spec, &EnsembleConfig::new(5, 3).unwrap()).unwrap();
    for k in 0..=one.steps() {
        assert_eq!(one.at(k), five.at(k));
        assert_eq!(one.at(k), a[k].u.as_slice());
    }
}

#[test]
fn single_realization_ensemble_is_that_trajectory() {
    let (cloud, op) = line_setup(19);
    let spec = sine_problem(0.005, 0.4, 0.01, 1.0);
    let ens = EnsembleConfig::new(1, 77).unwrap();
    let mean = run_ensemble(&cloud, &op, &spec, &ens).unwrap();
    let path = run_realization(&cloud, &op, &spec, realization_seed(77, 0)).unwrap();
    for (k, s) in path.iter().enumerate() {
        assert_eq!(mean.at(k), s.u.as_slice());
    }
}

#[test]
fn monte_carlo_error_shrinks_with_more_realizations() {
    let (cloud, op) = line_setup(37);
    let noisy = sine_problem(0.005, 0.1, 0.02, 1.0);
    let det = run_realization(&cloud, &op, &noisy.with_mu(0.0).unwrap(), 0).unwrap();
    let last = det.last().unwrap();
    let mut avg = Vec::new();
    for r in [10, 100, 1000] {
        let mut total = 0.0;
        for master in 0..8 {
            let mean = run_ensemble(
                &cloud,
                &op,
                &noisy,
                &EnsembleConfig::new(r, master).unwrap(),
            )
            .unwrap();
            let fin = mean.at(mean.steps());
            total += fin
                .iter()
                .zip(&last.u)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        }
        avg.push(total / 8.0);
    }
    assert!(avg[0] > avg[1] && avg[1] > avg[2], "{avg:?}");
    // roughly 1/sqrt(R): a factor 10 in R should buy at least a factor 2
    assert!(avg[2] < avg[0] / 4.0, "{avg:?}");
}

#[test]
fn analytic_solutions_solve_the_heat_equation() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cases = [
        (ProblemId::Diffusion1d, 0.005),
        (ProblemId::Diffusion2d, 0.01),
        (ProblemId::Diffusion3d, 1.0),
    ];
    let h = 1e-4;
    for (problem, rho) in cases {
        let sol = AnalyticSolution::new(problem, rho);
        let dim = problem.dim();
        let mut checked = 0;
        while checked < 100 {
            let mut x = [0.0; 3];
            for v in x.iter_mut().take(dim) {
                *v = rand::Rng::random_range(&mut rng, 0.05..0.95);
            }
            let t = rand::Rng::random_range(&mut rng, 0.0..1.0);
            let v = sol.eval(&x, t);
            if v.abs() < 1e-3 {
                continue;
            }
            let vt = (sol.eval(&x, t + h) - sol.eval(&x, t - h)) / (2.0 * h);
            let mut lap = 0.0;
            for a in 0..dim {
                let (mut xp, mut xm) = (x, x);
                xp[a] += h;
                xm[a] -= h;
                lap += (sol.eval(&xp, t) - 2.0 * v + sol.eval(&xm, t)) / (h * h);
            }
            let residual = (vt - rho * lap).abs() / vt.abs();
            assert!(residual < 1e-5, "{problem}: residual {residual}");
            checked += 1;
        }
    }
}

#[test]
fn error_metrics_ignore_node_order() {
    let domain = Domain::unit(2).unwrap();
    let cloud = generate_random_cloud(&domain, 40, &BoundarySpec::Grid(5), 3).unwrap();
    let study = StudyConfig {
        time_step: TimeStep::Fixed(0.01),
        ..StudyConfig::for_problem(ProblemId::Diffusion2d, EnsembleConfig::new(20, 1).unwrap())
    };
    let solve = Solve::prepare(cloud.clone(), &study).unwrap();
    let mean = solve.run(&study.ensemble).unwrap();

    // reverse the node order and carry the mean values along
    let n = cloud.len();
    let coords: Vec<Point> = cloud.coords().iter().rev().copied().collect();
    let roles: Vec<Role> = cloud.roles().iter().rev().copied().collect();
    let reversed = PointCloud::new(domain, coords, roles).unwrap();
    let states: Vec<gfdm::sde::FieldState> = (0..=mean.steps())
        .map(|k| gfdm::sde::FieldState {
            k,
            t: mean.time(k),
            u: mean.at(k).iter().rev().copied().collect(),
        })
        .collect();
    let flipped = MeanField::from_states(&states, mean.dt());
    assert_eq!(flipped.n_nodes(), n);
    let l2a = l2_error(&mean, &solve.exact, &cloud);
    let l2b = l2_error(&flipped, &solve.exact, &reversed);
    assert!((l2a - l2b).abs() <= 1e-14 * l2a);
    assert_eq!(
        linf_error(&mean, &solve.exact, &cloud),
        linf_error(&flipped, &solve.exact, &reversed)
    );
    assert_eq!(
        linf_error_final(&mean, &solve.exact, &cloud),
        linf_error_final(&flipped, &solve.exact, &reversed)
    );
}

#[test]
fn ensemble_is_bit_identical_across_thread_counts() {
    let (cloud, op) = line_setup(19);
    let spec = sine_problem(0.005, 0.2, 0.01, 1.0);
    let ens = EnsembleConfig::new(300, 5).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_ensemble(&cloud, &op, &spec, &ens).unwrap())
    };
    let base = run(1);
    for threads in [2, 3, 5] {
        let other = run(threads);
        for k in 0..=base.steps() {
            let a: Vec<u64> = base.at(k).iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = other.at(k).iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn single_cloud_study_equals_direct_run() {
    let cloud = generate_regular_grid(&Domain::unit(1).unwrap(), 19).unwrap();
    let study =
        StudyConfig::for_problem(ProblemId::Diffusion1d, EnsembleConfig::new(50, 9).unwrap());
    let rows = convergence_study(std::slice::from_ref(&cloud), &study).unwrap();
    assert_eq!(rows.len(), 1);
    let solve = Solve::prepare(cloud, &study).unwrap();
    let direct = solve.report(&solve.run(&study.ensemble).unwrap(), &study);
    assert_eq!(rows[0], direct);
}

#[test]
fn overflow_reports_realization_and_seed() {
    let (cloud, op) = line_setup(37);
    let dt = 1.0 / 5.0;
    let mut spec = ProblemSpec::new(
        50.0,
        0.1,
        1000.0,
        dt,
        Arc::new(|x| (std::f64::consts::PI * x[0]).sin() + 0.01 * (40.0 * x[0]).sin()),
        Arc::new(|_, _| 0.0),
    )
    .unwrap();
    spec.force_unstable = true;
    let ens = EnsembleConfig::new(4, 2).unwrap();
    match run_ensemble(&cloud, &op, &spec, &ens) {
        Err(Error::Realization {
            index,
            seed,
            source,
        }) => {
            assert_eq!(index, 0);
            assert_eq!(seed, ens.seed_for(0));
            assert!(matches!(*source, Error::Overflow { .. }));
        }
        other => panic!("expected overflow, got {other:?}"),
    }
    spec.force_unstable = false;
    assert!(matches!(
        run_ensemble(&cloud, &op, &spec, &ens),
        Err(Error::Unstable(_))
    ));
}
