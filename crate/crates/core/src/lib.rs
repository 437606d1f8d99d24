//! Generalized finite differences for the stochastic diffusion equation
//! `dv = rho Lap(v) dt + mu v dW` on scattered point clouds in one, two and
//! three dimensions.
//!
//! The pipeline is cloud ([`geometry`]) → stars ([`stars`]) → weighted
//! least-squares stencils ([`weights`], [`stencil`]) → Euler–Maruyama
//! stepping ([`sde`]) → Monte Carlo means and error metrics ([`ensemble`]).
//!
//! ```
//! use gfdm::prelude::*;
//!
//! let cloud = generate_regular_grid(&Domain::unit(1).unwrap(), 11).unwrap();
//! let stars = build_all_stars(&cloud, 2).unwrap();
//! let op = LaplacianOperator::build(&stars, &WeightSpec::default()).unwrap();
//! assert!((op.max_theta_c() - 200.0).abs() < 1e-9);
//! ```

pub mod cli;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod sde;
pub mod stars;
pub mod stencil;
pub mod weights;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::ensemble::{
        convergence_study, l2_error, linf_error, run_ensemble, AnalyticSolution, EnsembleConfig,
        ErrorReport, MeanField, ProblemId, Solve, StudyConfig, TimeStep,
    };
    pub use crate::error::{Error, Result};
    pub use crate::geometry::{
        generate_jittered_grid, generate_random_cloud, generate_regular_grid, refine_midpoints,
        BoundarySpec, Domain, Point, PointCloud, Role,
    };
    pub use crate::sde::{
        auto_dt, check_stability, max_stable_dt, run_realization, NoiseMode, ProblemSpec,
        StabilityReport, Stepper,
    };
    pub use crate::stars::{build_all_stars, build_star, default_star_size, Star, StarSet};
    pub use crate::stencil::{
        assemble_moment_system, cholesky, derivative_coefficients, laplacian_stencil,
        star_laplacian, LaplacianOperator, LaplacianStencil,
    };
    pub use crate::weights::{star_weights, weight, WeightKind, WeightSpec};
}
