//! Command-line front end.
//!
//! Exit statuses: 0 success, 1 stability refusal, 2 configuration or input
//! error, 3 overflow during a run.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::config::{parse_override, random_boundary_grid, RunConfig};
use crate::ensemble::{
    error_reports_csv, format_table, write_mean_snapshot, ErrorReport, MeanField, ProblemId, Solve,
    TimeStep,
};
use crate::error::{Error, Result};
use crate::geometry::{
    generate_random_cloud, generate_regular_grid, save_cloud, BoundarySpec, CloudFormat,
};
use crate::sde::{check_stability, max_stable_dt, StabilityReport};
use crate::stars::build_all_stars;
use crate::stencil::{coefficient_spread, write_debug_dump, LaplacianOperator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNSTABLE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_OVERFLOW: i32 = 3;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "GFDM_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "gfdm",
    version,
    about = "Meshless solver for stochastic diffusion equations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one ensemble and write mean-field snapshots and the error report
    Solve(RunArgs),
    /// Run a sequence of clouds and write the convergence table
    Convergence(RunArgs),
    /// Report the stability condition for a cloud and time step
    Stability(RunArgs),
    /// Write a point cloud CSV
    GenCloud(GenCloudArgs),
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// Config file with one `key = value` per line
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub realizations: Option<usize>,
    /// Time step, or `auto` for the stability-limited step
    #[arg(long)]
    pub dt: Option<String>,
    #[arg(long)]
    pub safety: Option<f64>,
    /// Run even if the stability condition fails
    #[arg(long)]
    pub force_unstable: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Extra `KEY=VALUE` overrides, applied after the config file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut pairs = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                crate::config::parse_pairs(&text)?
            }
            None => Vec::new(),
        };
        for s in &self.set {
            pairs.push(parse_override(s)?);
        }
        let mut push = |k: &str, v: String| pairs.push((k.to_string(), v));
        if let Some(v) = self.seed {
            push("seed", v.to_string());
        }
        if let Some(v) = self.realizations {
            push("realizations", v.to_string());
        }
        if let Some(v) = self.safety {
            push("safety", v.to_string());
        }
        if let Some(v) = &self.dt {
            push("dt", v.clone());
        }
        if self.force_unstable {
            push("force_unstable", "true".into());
        }
        if let Some(v) = &self.out {
            push("out", v.display().to_string());
        }
        let cfg = RunConfig::from_pairs(&pairs)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GenCloudArgs {
    /// diffusion1d, diffusion2d or diffusion3d (selects the unit box)
    #[arg(long, default_value = "diffusion2d")]
    pub problem: String,
    /// Regular grid with this many points per axis
    #[arg(long, conflicts_with = "interior")]
    pub grid: Option<usize>,
    /// Number of random interior nodes
    #[arg(long)]
    pub interior: Option<usize>,
    /// Boundary nodes of a regular grid with this many points per axis
    #[arg(long)]
    pub boundary_grid: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Maps an error to its exit status.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Unstable(_) => EXIT_UNSTABLE,
        Error::Overflow { .. } => EXIT_OVERFLOW,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let result = with_thread_cap(|| dispatch(&cli.command, &mut stdout.lock()));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn with_thread_cap<R: Send>(f: impl FnOnce() -> Result<R> + Send) -> Result<R> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
                Error::Config(format!(
                    "{THREADS_ENV} must be a positive integer, got '{v}'"
                ))
            })?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            pool.install(f)
        }
        Err(_) => f(),
    }
}

pub fn dispatch(cmd: &Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Solve(a) => cmd_solve(&a.resolve()?, out).map(|_| EXIT_OK),
        Command::Convergence(a) => cmd_convergence(&a.resolve()?, out).map(|_| EXIT_OK),
        Command::Stability(a) => {
            let report = cmd_stability(&a.resolve()?, out)?;
            Ok(if report.pass { EXIT_OK } else { EXIT_UNSTABLE })
        }
        Command::GenCloud(a) => cmd_gen_cloud(a, out).map(|_| EXIT_OK),
    }
}

fn prepare_out_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.echo"), cfg.echo())?;
    Ok(())
}

/// Builds the discretization, runs the ensemble and writes
/// `errors.csv`, `sup_norm.csv` and one `mean_t<T>.csv` per snapshot.
pub fn cmd_solve(cfg: &RunConfig, out: &mut dyn Write) -> Result<ErrorReport> {
    let study = cfg.study()?;
    prepare_out_dir(cfg)?;
    let solve = Solve::prepare(cfg.build_cloud()?, &study)?;
    let report = check_stability(cfg.rho, solve.spec.dt(), solve.op.stencils());
    writeln!(
        out,
        "N = {}, dt = {:e}: {report}",
        solve.cloud.len(),
        solve.spec.dt()
    )?;
    if !report.pass {
        if !cfg.force_unstable {
            return Err(Error::Unstable(report));
        }
        warn!("stability condition violated, running anyway");
    }
    let (negative, _) = coefficient_spread(solve.op.stencils());
    if negative > 0 {
        info!("{negative} stencils have negative neighbor coefficients; the theta_c bound is not sufficient for stability there");
    }
    if cfg.debug_dump {
        let stars = build_all_stars(&solve.cloud, cfg.star_size)?;
        write_debug_dump(&cfg.out.join("stencils.csv"), &stars, &study.weight)?;
    }
    let mean = solve.run(&study.ensemble).inspect_err(|e| {
        if let Error::Overflow { step, node, .. } = e.root() {
            warn!("overflow at step {step}, node {node}");
        }
    })?;
    log_growth(&mean);
    for &t in &cfg.snapshots {
        let name = format!("mean_t{t}.csv");
        write_mean_snapshot(&cfg.out.join(name), &solve.cloud, &mean, t)?;
    }
    write_sup_norm(&cfg.out.join("sup_norm.csv"), &mean)?;
    let row = solve.report(&mean, &study);
    fs::write(
        cfg.out.join("errors.csv"),
        error_reports_csv(std::slice::from_ref(&row)),
    )?;
    write!(out, "{}", format_table(std::slice::from_ref(&row)))?;
    Ok(row)
}

fn log_growth(mean: &MeanField) {
    let sup = mean.sup_norm_sq();
    let first = sup[0].mean;
    let peak = sup.iter().map(|e| e.mean).fold(0.0, f64::max);
    if first > 0.0 {
        info!("E sup|u|^2 peak / initial = {:.3e}", peak / first);
    }
}

fn write_sup_norm(path: &Path, mean: &MeanField) -> Result<()> {
    let mut s = String::from("k,t,mean_sup_sq,std_error\n");
    for (k, e) in mean.sup_norm_sq().iter().enumerate() {
        s.push_str(&format!(
            "{k},{:e},{:e},{:e}\n",
            mean.time(k),
            e.mean,
            e.std_error
        ));
    }
    fs::write(path, s)?;
    Ok(())
}

/// One row per level of the refinement rule; writes `convergence.csv`.
pub fn cmd_convergence(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<ErrorReport>> {
    let study = cfg.study()?;
    prepare_out_dir(cfg)?;
    let mut rows = Vec::new();
    for cloud in cfg.build_sequence()? {
        let solve = Solve::prepare(cloud, &study)?;
        let report = check_stability(cfg.rho, solve.spec.dt(), solve.op.stencils());
        info!("N = {}: {report}", solve.cloud.len());
        if !report.pass && !cfg.force_unstable {
            return Err(Error::Unstable(report));
        }
        let mean = solve.run(&study.ensemble)?;
        rows.push(solve.report(&mean, &study));
    }
    fs::write(cfg.out.join("convergence.csv"), error_reports_csv(&rows))?;
    write!(out, "{}", format_table(&rows))?;
    Ok(rows)
}

/// Prints the stability report; with `dt = auto` the step is the bound
/// itself, so the product equals the safety factor.
pub fn cmd_stability(cfg: &RunConfig, out: &mut dyn Write) -> Result<StabilityReport> {
    let cloud = cfg.build_cloud()?;
    let stars = build_all_stars(&cloud, cfg.star_size)?;
    let op = LaplacianOperator::build(&stars, &cfg.study()?.weight)?;
    let dt = match cfg.time_step {
        TimeStep::Fixed(dt) => dt,
        TimeStep::Auto { safety } => max_stable_dt(cfg.rho, op.stencils(), safety)?,
    };
    let report = check_stability(cfg.rho, dt, op.stencils());
    writeln!(out, "N = {}, rho = {}, dt = {dt:e}", cloud.len(), cfg.rho)?;
    writeln!(out, "max theta_c        = {:.10e}", report.max_theta_c)?;
    writeln!(out, "rho*dt*max theta_c = {:.10}", report.product)?;
    writeln!(out, "largest stable dt  = {:.10e}", report.max_stable_dt)?;
    let (negative, ratio) = coefficient_spread(op.stencils());
    writeln!(
        out,
        "rows with negative neighbor coefficients = {negative}/{} (max sum|theta_i|/theta_c = {ratio:.3})",
        op.len()
    )?;
    writeln!(out, "{}", if report.pass { "PASS" } else { "FAIL" })?;
    Ok(report)
}

pub fn cmd_gen_cloud(args: &GenCloudArgs, out: &mut dyn Write) -> Result<()> {
    let problem: ProblemId = args
        .problem
        .parse()
        .map_err(|e: Error| Error::Config(e.to_string()))?;
    let domain = problem.domain();
    let cloud = match (args.grid, args.interior) {
        (Some(n), _) => generate_regular_grid(&domain, n)?,
        (None, Some(m)) => {
            let b = args
                .boundary_grid
                .unwrap_or_else(|| random_boundary_grid(m, domain.dim()));
            generate_random_cloud(&domain, m, &BoundarySpec::Grid(b), args.seed)?
        }
        (None, None) => return Err(Error::Config("need --grid or --interior".into())),
    };
    save_cloud(&cloud, &args.out, CloudFormat::Csv)?;
    writeln!(
        out,
        "wrote {} nodes ({} interior) to {}",
        cloud.len(),
        cloud.interior_count(),
        args.out.display()
    )?;
    Ok(())
}
