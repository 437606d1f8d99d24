//! Monte Carlo ensembles, mean fields and error metrics against the
//! expected solutions of the built-in test problems.
//!
//! The exact solutions below are *expected* solutions: the noise term has
//! zero mean, so the mean field solves the deterministic heat equation. The
//! error metrics therefore measure the ensemble mean, not pathwise accuracy.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{fmt_f64, Domain, Point, PointCloud};
use crate::sde::{auto_dt, ProblemSpec, Stepper};
use crate::stars::build_all_stars;
use crate::stencil::LaplacianOperator;
use crate::weights::WeightSpec;

/// Upper bound on buffered trajectory memory per batch of realizations.
const BATCH_BYTES: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub realizations: usize,
    pub master_seed: u64,
    /// Times at which mean-field snapshots are wanted (snapped to the grid).
    pub snapshot_times: Vec<f64>,
}

impl EnsembleConfig {
    pub fn new(realizations: usize, master_seed: u64) -> Result<Self> {
        if realizations == 0 {
            return Err(Error::invalid("need at least one realization"));
        }
        Ok(Self {
            realizations,
            master_seed,
            snapshot_times: Vec::new(),
        })
    }

    pub fn seed_for(&self, index: usize) -> u64 {
        realization_seed(self.master_seed, index)
    }
}

/// Seed of realization `index`: the SplitMix64 output at counter
/// `master + (index + 1) * 0x9E3779B97F4A7C15`. The counter map is injective
/// in `index` (odd multiplier) and the finalizer is a bijection, so distinct
/// realizations never share a seed.
pub fn realization_seed(master: u64, index: usize) -> u64 {
    let mut z = master.wrapping_add(
        (index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean over a sample with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Per-step Monte Carlo mean of the nodal values.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanField {
    n_nodes: usize,
    dt: f64,
    realizations: usize,
    /// Row-major `(k, node)`, `k = 0..=N_t`.
    values: Vec<f64>,
    /// Estimate of `E ||u^k||_inf^2` per step.
    sup_norm_sq: Vec<Estimate>,
}

impl MeanField {
    pub fn steps(&self) -> usize {
        self.values.len() / self.n_nodes - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn realizations(&self) -> usize {
        self.realizations
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Mean values at step `k`.
    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_nodes..(k + 1) * self.n_nodes]
    }

    /// Step index nearest to time `t`, clamped to the run.
    pub fn step_at_time(&self, t: f64) -> usize {
        ((t / self.dt).round().max(0.0) as usize).min(self.steps())
    }

    pub fn sup_norm_sq(&self) -> &[Estimate] {
        &self.sup_norm_sq
    }

    /// Wraps a single deterministic trajectory.
    pub fn from_states(states: &[crate::sde::FieldState], dt: f64) -> Self {
        let n_nodes = states[0].u.len();
        let values = states.iter().flat_map(|s| s.u.iter().copied()).collect();
        let sup_norm_sq = states
            .iter()
            .map(|s| Estimate {
                mean: s.sup_norm().powi(2),
                std_error: 0.0,
            })
            .collect();
        Self {
            n_nodes,
            dt,
            realizations: 1,
            values,
            sup_norm_sq,
        }
    }
}

struct Record {
    values: Vec<f64>,
    sup_sq: Vec<f64>,
}

fn run_one(stepper: &Stepper<'_>, seed: u64, steps: usize, n: usize) -> Result<Record> {
    let mut values = Vec::with_capacity((steps + 1) * n);
    let mut sup_sq = Vec::with_capacity(steps + 1);
    stepper.run_with(seed, |s| {
        values.extend_from_slice(&s.u);
        sup_sq.push(s.sup_norm().powi(2));
    })?;
    Ok(Record { values, sup_sq })
}

/// Mean field over `ens.realizations` seeded realizations.
///
/// Realizations run in parallel on the current rayon pool; their sums are
/// accumulated in realization order, so the result is bit-identical for any
/// thread count. With `mu = 0` every realization is the same deterministic
/// trajectory and a single run is returned as the mean.
pub fn run_ensemble(
    cloud: &PointCloud,
    op: &LaplacianOperator,
    spec: &ProblemSpec,
    ens: &EnsembleConfig,
) -> Result<MeanField> {
    if ens.realizations == 0 {
        return Err(Error::invalid("need at least one realization"));
    }
    let stepper = Stepper::new(cloud, op, spec)?.precompute_boundary()?;
    if !stepper.report().pass && !spec.force_unstable {
        return Err(Error::Unstable(*stepper.report()));
    }
    let steps = spec.steps()?;
    let n = cloud.len();
    let wrap = |index: usize, seed: u64| {
        move |e: Error| Error::Realization {
            index,
            seed,
            source: Box::new(e),
        }
    };

    if spec.mu() == 0.0 {
        let seed = ens.seed_for(0);
        let rec = run_one(&stepper, seed, steps, n).map_err(wrap(0, seed))?;
        return Ok(MeanField {
            n_nodes: n,
            dt: spec.dt(),
            realizations: ens.realizations,
            values: rec.values,
            sup_norm_sq: rec
                .sup_sq
                .into_iter()
                .map(|mean| Estimate {
                    mean,
                    std_error: 0.0,
                })
                .collect(),
        });
    }

    let record_bytes = (steps + 1) * (n + 1) * std::mem::size_of::<f64>();
    let batch = (BATCH_BYTES / record_bytes.max(1)).clamp(1, 256);
    let mut sum = vec![0.0; (steps + 1) * n];
    let mut sup_sum = vec![0.0; steps + 1];
    let mut sup_sum_sq = vec![0.0; steps + 1];
    let mut start = 0;
    while start < ens.realizations {
        let end = (start + batch).min(ens.realizations);
        let records = (start..end)
            .into_par_iter()
            .map(|r| {
                let seed = ens.seed_for(r);
                run_one(&stepper, seed, steps, n).map_err(wrap(r, seed))
            })
            .collect::<Result<Vec<_>>>()?;
        for rec in &records {
            for (s, v) in sum.iter_mut().zip(&rec.values) {
                *s += v;
            }
            for ((s, s2), v) in sup_sum
                .iter_mut()
                .zip(sup_sum_sq.iter_mut())
                .zip(&rec.sup_sq)
            {
                *s += v;
                *s2 += v * v;
            }
        }
        start = end;
    }
    let r = ens.realizations as f64;
    let values = sum.into_iter().map(|s| s / r).collect();
    let sup_norm_sq = sup_sum
        .iter()
        .zip(&sup_sum_sq)
        .map(|(s, s2)| {
            let mean = s / r;
            let std_error = if ens.realizations > 1 {
                let var = ((s2 - r * mean * mean) / (r - 1.0)).max(0.0);
                (var / r).sqrt()
            } else {
                0.0
            };
            Estimate { mean, std_error }
        })
        .collect();
    Ok(MeanField {
        n_nodes: n,
        dt: spec.dt(),
        realizations: ens.realizations,
        values,
        sup_norm_sq,
    })
}

/// The three built-in test problems on unit boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemId {
    /// `e^{-rho pi^2 t} sin(pi x)` on `[0, 1]`
    Diffusion1d,
    /// `e^{-rho t / 2} sin((x + y) / 2)` on `[0, 1]^2`
    Diffusion2d,
    /// `e^{-3 rho pi^2 t} sin(pi x) sin(pi y) sin(pi z)` on `[0, 1]^3`
    Diffusion3d,
}

impl ProblemId {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemId::Diffusion1d => "diffusion1d",
            ProblemId::Diffusion2d => "diffusion2d",
            ProblemId::Diffusion3d => "diffusion3d",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            ProblemId::Diffusion1d => 1,
            ProblemId::Diffusion2d => 2,
            ProblemId::Diffusion3d => 3,
        }
    }

    pub fn domain(self) -> Domain {
        Domain::unit(self.dim()).expect("unit box is valid")
    }

    /// Default `(rho, mu)` of each problem.
    pub fn default_parameters(self) -> (f64, f64) {
        match self {
            ProblemId::Diffusion1d => (0.005, 0.1),
            ProblemId::Diffusion2d => (0.01, 0.1),
            ProblemId::Diffusion3d => (1.0, 0.5),
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffusion1d" => Ok(ProblemId::Diffusion1d),
            "diffusion2d" => Ok(ProblemId::Diffusion2d),
            "diffusion3d" => Ok(ProblemId::Diffusion3d),
            other => Err(Error::invalid(format!("unknown problem '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticSolution {
    pub problem: ProblemId,
    pub rho: f64,
}

impl AnalyticSolution {
    pub fn new(problem: ProblemId, rho: f64) -> Self {
        Self { problem, rho }
    }

    pub fn eval(&self, x: &Point, t: f64) -> f64 {
        analytic_eval(self, x, t)
    }

    /// Problem with `h = v(., 0)` and `F = v` on the boundary.
    pub fn problem_spec(&self, mu: f64, t_final: f64, dt: f64) -> Result<ProblemSpec> {
        let (a, b) = (*self, *self);
        ProblemSpec::new(
            self.rho,
            mu,
            t_final,
            dt,
            Arc::new(move |x| a.eval(x, 0.0)),
            Arc::new(move |x, t| b.eval(x, t)),
        )
    }
}

pub fn analytic_eval(sol: &AnalyticSolution, x: &Point, t: f64) -> f64 {
    let rho = sol.rho;
    match sol.problem {
        ProblemId::Diffusion1d => (-rho * PI * PI * t).exp() * (PI * x[0]).sin(),
        ProblemId::Diffusion2d => (-rho * t / 2.0).exp() * ((x[0] + x[1]) / 2.0).sin(),
        ProblemId::Diffusion3d => {
            (-3.0 * rho * PI * PI * t).exp()
                * (PI * x[0]).sin()
                * (PI * x[1]).sin()
                * (PI * x[2]).sin()
        }
    }
}

/// Pointwise deviations `v(x_c, t_k) - E(u_c^k)` for `k = 1..=N_t`, row-major.
fn deviations<'a>(
    mean: &'a MeanField,
    exact: &'a AnalyticSolution,
    cloud: &'a PointCloud,
) -> impl Iterator<Item = (usize, f64)> + 'a {
    (1..=mean.steps()).flat_map(move |k| {
        let t = mean.time(k);
        mean.at(k)
            .iter()
            .zip(cloud.coords())
            .map(move |(u, x)| (k, exact.eval(x, t) - u))
    })
}

/// `sqrt( 1/(N_t N) sum_k sum_c |v(x_c, t_k) - E(u_c^k)|^2 )` over every node.
pub fn l2_error(mean: &MeanField, exact: &AnalyticSolution, cloud: &PointCloud) -> f64 {
    let count = (mean.steps() * cloud.len()) as f64;
    let sq: f64 = deviations(mean, exact, cloud).map(|(_, d)| d * d).sum();
    (sq / count).sqrt()
}

/// Largest absolute deviation over all nodes and all steps `k >= 1`.
pub fn linf_error(mean: &MeanField, exact: &AnalyticSolution, cloud: &PointCloud) -> f64 {
    deviations(mean, exact, cloud).fold(0.0, |m, (_, d)| m.max(d.abs()))
}

/// Largest absolute deviation at the final step only.
pub fn linf_error_final(mean: &MeanField, exact: &AnalyticSolution, cloud: &PointCloud) -> f64 {
    let last = mean.steps();
    deviations(mean, exact, cloud)
        .filter(|(k, _)| *k == last)
        .fold(0.0, |m, (_, d)| m.max(d.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinfMode {
    #[default]
    AllSteps,
    FinalTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub problem: ProblemId,
    pub n_nodes: usize,
    pub star_size: usize,
    pub weight: WeightSpec,
    pub rho: f64,
    pub mu: f64,
    pub dt: f64,
    pub steps: usize,
    pub realizations: usize,
    pub seed: u64,
    pub l2_error: f64,
    /// Per [`LinfMode`]; all steps by default.
    pub linf_error: f64,
    pub linf_error_final: f64,
}

pub const ERROR_REPORT_HEADER: &str =
    "problem,N,M,weight,n,rho,mu,dt,Nt,R,seed,l2_error,linf_error";

impl ErrorReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.problem,
            self.n_nodes,
            self.star_size,
            self.weight.kind,
            self.weight.n,
            self.rho,
            self.mu,
            fmt_f64(self.dt),
            self.steps,
            self.realizations,
            self.seed,
            fmt_f64(self.l2_error),
            fmt_f64(self.linf_error),
        )
    }
}

pub fn error_reports_csv(reports: &[ErrorReport]) -> String {
    let mut out = String::from(ERROR_REPORT_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn write_error_reports(path: &Path, reports: &[ErrorReport]) -> Result<()> {
    fs::write(path, error_reports_csv(reports))?;
    Ok(())
}

/// Aligned plain-text table of the reports.
pub fn format_table(reports: &[ErrorReport]) -> String {
    let mut out = format!(
        "{:>8} {:>4} {:>12} {:>7} {:>6} {:>12} {:>12}\n",
        "N", "M", "dt", "Nt", "R", "L2-error", "Linf-error"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:>8} {:>4} {:>12.4e} {:>7} {:>6} {:>12.4e} {:>12.4e}",
            r.n_nodes, r.star_size, r.dt, r.steps, r.realizations, r.l2_error, r.linf_error
        );
    }
    out
}

/// Writes `coords..., mean_u` at the step nearest to `t`.
pub fn write_mean_snapshot(
    path: &Path,
    cloud: &PointCloud,
    mean: &MeanField,
    t: f64,
) -> Result<()> {
    let k = mean.step_at_time(t);
    crate::sde::write_field_csv(path, cloud, mean.at(k), "mean_u")
}

/// How the time step is chosen for each cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    Fixed(f64),
    /// Largest step dividing `T` with `rho dt max theta_c <= safety`.
    Auto {
        safety: f64,
    },
}

/// Everything held fixed across the levels of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub problem: ProblemId,
    pub rho: f64,
    pub mu: f64,
    pub t_final: f64,
    pub time_step: TimeStep,
    pub star_size: usize,
    pub weight: WeightSpec,
    pub ensemble: EnsembleConfig,
    pub noise: crate::sde::NoiseMode,
    pub force_unstable: bool,
    pub linf_mode: LinfMode,
}

impl StudyConfig {
    /// Problem defaults, potential `n = 3` weights, `T = 1`, auto step with safety 0.5.
    pub fn for_problem(problem: ProblemId, ensemble: EnsembleConfig) -> Self {
        let (rho, mu) = problem.default_parameters();
        Self {
            problem,
            rho,
            mu,
            t_final: 1.0,
            time_step: TimeStep::Auto { safety: 0.5 },
            star_size: crate::stars::default_star_size(problem.dim()),
            weight: WeightSpec::default(),
            ensemble,
            noise: Default::default(),
            force_unstable: false,
            linf_mode: LinfMode::AllSteps,
        }
    }
}

/// A discretized problem ready to run: cloud, stencils and time step.
pub struct Solve {
    pub cloud: PointCloud,
    pub op: LaplacianOperator,
    pub spec: ProblemSpec,
    pub exact: AnalyticSolution,
}

impl Solve {
    pub fn prepare(cloud: PointCloud, study: &StudyConfig) -> Result<Self> {
        if cloud.dim() != study.problem.dim() {
            return Err(Error::invalid(format!(
                "{} needs a {}D cloud, got {}D",
                study.problem,
                study.problem.dim(),
                cloud.dim()
            )));
        }
        let stars = build_all_stars(&cloud, study.star_size)?;
        let op = LaplacianOperator::build(&stars, &study.weight)?;
        let dt = match study.time_step {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Auto { safety } => auto_dt(study.rho, op.stencils(), safety, study.t_final)?,
        };
        let exact = AnalyticSolution::new(study.problem, study.rho);
        let mut spec = exact.problem_spec(study.mu, study.t_final, dt)?;
        spec.noise = study.noise;
        spec.force_unstable = study.force_unstable;
        Ok(Self {
            cloud,
            op,
            spec,
            exact,
        })
    }

    pub fn run(&self, ens: &EnsembleConfig) -> Result<MeanField> {
        run_ensemble(&self.cloud, &self.op, &self.spec, ens)
    }

    pub fn report(&self, mean: &MeanField, study: &StudyConfig) -> ErrorReport {
        let linf_all = linf_error(mean, &self.exact, &self.cloud);
        let linf_final = linf_error_final(mean, &self.exact, &self.cloud);
        ErrorReport {
            problem: study.problem,
            n_nodes: self.cloud.len(),
            star_size: study.star_size,
            weight: study.weight,
            rho: study.rho,
            mu: study.mu,
            dt: self.spec.dt(),
            steps: mean.steps(),
            realizations: mean.realizations(),
            seed: study.ensemble.master_seed,
            l2_error: l2_error(mean, &self.exact, &self.cloud),
            linf_error: match study.linf_mode {
                LinfMode::AllSteps => linf_all,
                LinfMode::FinalTime => linf_final,
            },
            linf_error_final: linf_final,
        }
    }
}

/// One [`ErrorReport`] per cloud, with physical parameters held fixed.
pub fn convergence_study(clouds: &[PointCloud], study: &StudyConfig) -> Result<Vec<ErrorReport>> {
    clouds
        .iter()
        .map(|cloud| {
            let solve = Solve::prepare(cloud.clone(), study)?;
            let mean = solve.run(&study.ensemble)?;
            Ok(solve.report(&mean, study))
        })
        .collect()
}
