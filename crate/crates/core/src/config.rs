//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment. Unknown keys are rejected.
//! [`RunConfig::echo`] writes every resolved key back out, so an echo file
//! reproduces its run exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::ensemble::{EnsembleConfig, LinfMode, ProblemId, StudyConfig, TimeStep};
use crate::error::{Error, Result};
use crate::geometry::{
    generate_jittered_grid, generate_random_cloud, generate_regular_grid, load_cloud_in,
    refine_midpoints, BoundarySpec, CloudFormat, PointCloud,
};
use crate::sde::NoiseMode;
use crate::stars::default_star_size;
use crate::weights::{WeightKind, WeightSpec};

/// Where the node set comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum CloudSource {
    /// Regular grid with this many points per axis.
    Grid(usize),
    /// Random interior nodes plus boundary nodes of an `n`-grid.
    Random {
        interior: usize,
        boundary_grid: usize,
        seed: u64,
    },
    /// Regular grid with interior nodes jittered by up to `amplitude * h`.
    Jitter {
        points_per_axis: usize,
        amplitude: f64,
        seed: u64,
    },
    File(PathBuf),
}

/// Rule producing the cloud sequence of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub enum Refinement {
    /// Start from the base cloud and insert midpoints (1D); total level count.
    Midpoint(usize),
    /// Regular grids with these per-axis counts.
    Grid(Vec<usize>),
    /// Random clouds with these interior counts; boundary grid scales along.
    Random {
        interior: Vec<usize>,
        seed: u64,
    },
    /// Jittered grids with these per-axis counts.
    Jitter {
        points_per_axis: Vec<usize>,
        amplitude: f64,
        seed: u64,
    },
    Files(Vec<PathBuf>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemId,
    pub rho: f64,
    pub mu: f64,
    pub t_final: f64,
    pub time_step: TimeStep,
    /// Safety factor used whenever `dt = auto`.
    pub safety: f64,
    pub star_size: usize,
    pub weight: WeightSpec,
    pub realizations: usize,
    pub seed: u64,
    pub noise: NoiseMode,
    pub force_unstable: bool,
    pub linf_mode: LinfMode,
    pub cloud: CloudSource,
    pub refine: Option<Refinement>,
    pub snapshots: Vec<f64>,
    pub out: PathBuf,
    pub debug_dump: bool,
}

impl RunConfig {
    pub fn for_problem(problem: ProblemId) -> Self {
        let (rho, mu) = problem.default_parameters();
        let grid = match problem.dim() {
            1 => 37,
            2 => 11,
            _ => 5,
        };
        Self {
            problem,
            rho,
            mu,
            t_final: 1.0,
            time_step: TimeStep::Auto { safety: 0.5 },
            safety: 0.5,
            star_size: default_star_size(problem.dim()),
            weight: WeightSpec::default(),
            realizations: 1000,
            seed: 1,
            noise: NoiseMode::Shared,
            force_unstable: false,
            linf_mode: LinfMode::AllSteps,
            cloud: CloudSource::Grid(grid),
            refine: None,
            snapshots: vec![1.0],
            out: PathBuf::from("out"),
            debug_dump: false,
        }
    }

    /// Parses config text; `problem` (if present) is applied first so that
    /// problem defaults never override explicit keys.
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        Self::from_pairs(&pairs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let problem = match pairs.iter().rev().find(|(k, _)| k == "problem") {
            Some((_, v)) => v.parse().map_err(config_err)?,
            None => ProblemId::Diffusion1d,
        };
        let mut cfg = Self::for_problem(problem);
        cfg.apply(pairs)?;
        Ok(cfg)
    }

    /// Applies overrides in order.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bad = |what: &str| Error::Config(format!("{key}: {what}, got '{v}'"));
        match key {
            "problem" => {
                let p: ProblemId = v.parse().map_err(config_err)?;
                if p != self.problem {
                    return Err(Error::Config("conflicting problem values".into()));
                }
            }
            "rho" => self.rho = num(v).ok_or_else(|| bad("expected a number"))?,
            "mu" => self.mu = num(v).ok_or_else(|| bad("expected a number"))?,
            "t_final" => self.t_final = num(v).ok_or_else(|| bad("expected a number"))?,
            "dt" => {
                self.time_step = if v == "auto" {
                    TimeStep::Auto {
                        safety: self.safety,
                    }
                } else {
                    TimeStep::Fixed(num(v).ok_or_else(|| bad("expected a number or 'auto'"))?)
                }
            }
            "safety" => {
                let s = num(v).ok_or_else(|| bad("expected a number"))?;
                if !(s > 0.0 && s <= 1.0) {
                    return Err(bad("safety must lie in (0, 1]"));
                }
                self.safety = s;
                if let TimeStep::Auto { safety } = &mut self.time_step {
                    *safety = s;
                }
            }
            "star_size" => self.star_size = v.parse().map_err(|_| bad("expected an integer"))?,
            "weight" => {
                let kind: WeightKind = v.parse().map_err(config_err)?;
                self.weight.kind = kind;
            }
            "weight_n" => self.weight.n = num(v).ok_or_else(|| bad("expected a number"))?,
            "realizations" => {
                self.realizations = v.parse().map_err(|_| bad("expected an integer"))?
            }
            "seed" => self.seed = v.parse().map_err(|_| bad("expected an integer"))?,
            "noise" => self.noise = v.parse().map_err(config_err)?,
            "force_unstable" => {
                self.force_unstable = flag(v).ok_or_else(|| bad("expected true or false"))?
            }
            "debug_dump" => {
                self.debug_dump = flag(v).ok_or_else(|| bad("expected true or false"))?
            }
            "linf" => {
                self.linf_mode = match v {
                    "all_steps" => LinfMode::AllSteps,
                    "final_time" => LinfMode::FinalTime,
                    _ => return Err(bad("expected all_steps or final_time")),
                }
            }
            "cloud" => self.cloud = parse_cloud(v).map_err(|m| bad(&m))?,
            "refine" => self.refine = parse_refine(v).map_err(|m| bad(&m))?,
            "snapshots" => {
                self.snapshots = list(v)
                    .map(|s| num(s).ok_or_else(|| bad("expected a comma-separated list of times")))
                    .collect::<Result<_>>()?
            }
            "out" => self.out = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Checks the lowered problem and ensemble parameters.
    pub fn validate(&self) -> Result<()> {
        self.weight_spec()?;
        crate::sde::ProblemSpec::new(
            self.rho,
            self.mu,
            self.t_final,
            match self.time_step {
                TimeStep::Fixed(dt) => dt,
                TimeStep::Auto { .. } => self.t_final,
            },
            std::sync::Arc::new(|_| 0.0),
            std::sync::Arc::new(|_, _| 0.0),
        )
        .map_err(config_err)?;
        EnsembleConfig::new(self.realizations, self.seed).map_err(config_err)?;
        if self.star_size == 0 {
            return Err(Error::Config("star_size must be positive".into()));
        }
        Ok(())
    }

    fn weight_spec(&self) -> Result<WeightSpec> {
        match self.weight.kind {
            WeightKind::CubicSpline => Ok(WeightSpec::cubic_spline()),
            kind => WeightSpec::new(kind, self.weight.n).map_err(config_err),
        }
    }

    pub fn ensemble(&self) -> Result<EnsembleConfig> {
        let mut ens = EnsembleConfig::new(self.realizations, self.seed).map_err(config_err)?;
        ens.snapshot_times = self.snapshots.clone();
        Ok(ens)
    }

    pub fn study(&self) -> Result<StudyConfig> {
        self.validate()?;
        Ok(StudyConfig {
            problem: self.problem,
            rho: self.rho,
            mu: self.mu,
            t_final: self.t_final,
            time_step: self.time_step,
            star_size: self.star_size,
            weight: self.weight_spec()?,
            ensemble: self.ensemble()?,
            noise: self.noise,
            force_unstable: self.force_unstable,
            linf_mode: self.linf_mode,
        })
    }

    pub fn build_cloud(&self) -> Result<PointCloud> {
        build_source(&self.cloud, self.problem)
    }

    /// Cloud sequence for a convergence study; the base cloud alone when no
    /// refinement rule is set.
    pub fn build_sequence(&self) -> Result<Vec<PointCloud>> {
        let domain = self.problem.domain();
        match &self.refine {
            None => Ok(vec![self.build_cloud()?]),
            Some(Refinement::Midpoint(levels)) => {
                let mut out = vec![self.build_cloud()?];
                for _ in 1..*levels {
                    out.push(refine_midpoints(out.last().expect("nonempty"))?);
                }
                Ok(out)
            }
            Some(Refinement::Grid(ns)) => ns
                .iter()
                .map(|&n| generate_regular_grid(&domain, n))
                .collect(),
            Some(Refinement::Random { interior, seed }) => interior
                .iter()
                .map(|&m| {
                    build_source(
                        &CloudSource::Random {
                            interior: m,
                            boundary_grid: random_boundary_grid(m, domain.dim()),
                            seed: *seed,
                        },
                        self.problem,
                    )
                })
                .collect(),
            Some(Refinement::Jitter {
                points_per_axis,
                amplitude,
                seed,
            }) => points_per_axis
                .iter()
                .map(|&n| generate_jittered_grid(&domain, n, *amplitude, *seed))
                .collect(),
            Some(Refinement::Files(paths)) => paths
                .iter()
                .map(|p| load_cloud_in(p, CloudFormat::Csv, &domain))
                .collect(),
        }
    }

    /// Every key with its resolved value, one per line.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("problem", self.problem.to_string());
        kv("rho", fmt_num(self.rho));
        kv("mu", fmt_num(self.mu));
        kv("t_final", fmt_num(self.t_final));
        kv("safety", fmt_num(self.safety));
        match self.time_step {
            TimeStep::Fixed(dt) => kv("dt", fmt_num(dt)),
            TimeStep::Auto { .. } => kv("dt", "auto".into()),
        }
        kv("star_size", self.star_size.to_string());
        kv("weight", self.weight.kind.to_string());
        kv("weight_n", fmt_num(self.weight.n));
        kv("realizations", self.realizations.to_string());
        kv("seed", self.seed.to_string());
        kv("noise", self.noise.as_str().into());
        kv("force_unstable", self.force_unstable.to_string());
        kv(
            "linf",
            match self.linf_mode {
                LinfMode::AllSteps => "all_steps",
                LinfMode::FinalTime => "final_time",
            }
            .into(),
        );
        kv("cloud", cloud_str(&self.cloud));
        kv(
            "refine",
            self.refine
                .as_ref()
                .map_or_else(|| "none".to_string(), refine_str),
        );
        kv(
            "snapshots",
            self.snapshots
                .iter()
                .map(|t| fmt_num(*t))
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("out", self.out.display().to_string());
        kv("debug_dump", self.debug_dump.to_string());
        s
    }
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let line = line.split('#').next().unwrap_or("").trim();
            (!line.is_empty()).then_some((i + 1, line))
        })
        .map(|(lineno, line)| {
            parse_override(line).map_err(|_| {
                Error::Config(format!(
                    "line {lineno}: expected 'key = value', got '{line}'"
                ))
            })
        })
        .collect()
}

/// Parses one `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::Config(format!("expected KEY=VALUE, got '{s}'"))),
    }
}

/// Boundary grid used with `interior` random nodes: about as fine as a
/// regular grid holding that many interior points.
pub fn random_boundary_grid(interior: usize, dim: usize) -> usize {
    ((interior as f64).powf(1.0 / dim as f64).round() as usize + 2).max(3)
}

fn build_source(src: &CloudSource, problem: ProblemId) -> Result<PointCloud> {
    let domain = problem.domain();
    match src {
        CloudSource::Grid(n) => generate_regular_grid(&domain, *n),
        CloudSource::Random {
            interior,
            boundary_grid,
            seed,
        } => generate_random_cloud(
            &domain,
            *interior,
            &BoundarySpec::Grid(*boundary_grid),
            *seed,
        ),
        CloudSource::Jitter {
            points_per_axis,
            amplitude,
            seed,
        } => generate_jittered_grid(&domain, *points_per_axis, *amplitude, *seed),
        CloudSource::File(p) => load_cloud_in(p, CloudFormat::Csv, &domain),
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn num(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn flag(s: &str) -> Option<bool> {
    match s {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

fn list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty())
}

fn ints(s: &str) -> std::result::Result<Vec<usize>, String> {
    let v = list(s)
        .map(|t| t.parse::<usize>().map_err(|_| format!("bad integer '{t}'")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if v.is_empty() {
        return Err("empty list".into());
    }
    Ok(v)
}

// Shortest round-trip representation.
fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

/// `grid:N`, `random:INTERIOR:BOUNDARY_GRID:SEED`, `jitter:N:AMPLITUDE:SEED`
/// or `file:PATH`.
fn parse_cloud(v: &str) -> std::result::Result<CloudSource, String> {
    let parts: Vec<&str> = v.splitn(2, ':').collect();
    match parts.as_slice() {
        ["grid", n] => n
            .parse()
            .map(CloudSource::Grid)
            .map_err(|_| "bad grid size".into()),
        ["file", p] => Ok(CloudSource::File(PathBuf::from(p))),
        ["random", rest] => {
            let f: Vec<&str> = rest.split(':').collect();
            if f.len() != 3 {
                return Err("expected random:INTERIOR:BOUNDARY_GRID:SEED".into());
            }
            let p = |s: &str| s.parse::<u64>().map_err(|_| format!("bad integer '{s}'"));
            Ok(CloudSource::Random {
                interior: p(f[0])? as usize,
                boundary_grid: p(f[1])? as usize,
                seed: p(f[2])?,
            })
        }
        ["jitter", rest] => {
            let f: Vec<&str> = rest.split(':').collect();
            if f.len() != 3 {
                return Err("expected jitter:N:AMPLITUDE:SEED".into());
            }
            Ok(CloudSource::Jitter {
                points_per_axis: f[0]
                    .parse()
                    .map_err(|_| format!("bad integer '{}'", f[0]))?,
                amplitude: num(f[1]).ok_or_else(|| format!("bad number '{}'", f[1]))?,
                seed: f[2]
                    .parse()
                    .map_err(|_| format!("bad integer '{}'", f[2]))?,
            })
        }
        _ => Err("expected grid:N, random:I:B:SEED, jitter:N:A:SEED or file:PATH".into()),
    }
}

fn cloud_str(c: &CloudSource) -> String {
    match c {
        CloudSource::Grid(n) => format!("grid:{n}"),
        CloudSource::Random {
            interior,
            boundary_grid,
            seed,
        } => format!("random:{interior}:{boundary_grid}:{seed}"),
        CloudSource::Jitter {
            points_per_axis,
            amplitude,
            seed,
        } => format!("jitter:{points_per_axis}:{}:{seed}", fmt_num(*amplitude)),
        CloudSource::File(p) => format!("file:{}", p.display()),
    }
}

/// `none`, `midpoint:LEVELS`, `grid:N1,N2,..`, `random:SEED:I1,I2,..`,
/// `jitter:SEED:AMPLITUDE:N1,N2,..` or `files:P1,P2,..`.
fn parse_refine(v: &str) -> std::result::Result<Option<Refinement>, String> {
    if v == "none" {
        return Ok(None);
    }
    let (rule, rest) = v.split_once(':').ok_or("expected RULE:ARGS")?;
    Ok(Some(match rule {
        "midpoint" => Refinement::Midpoint(
            rest.parse()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or("bad level count")?,
        ),
        "grid" => Refinement::Grid(ints(rest)?),
        "random" => {
            let (seed, counts) = rest
                .split_once(':')
                .ok_or("expected random:SEED:I1,I2,..")?;
            Refinement::Random {
                seed: seed.parse().map_err(|_| "bad seed")?,
                interior: ints(counts)?,
            }
        }
        "jitter" => {
            let f: Vec<&str> = rest.splitn(3, ':').collect();
            if f.len() != 3 {
                return Err("expected jitter:SEED:AMPLITUDE:N1,N2,..".into());
            }
            Refinement::Jitter {
                seed: f[0].parse().map_err(|_| "bad seed")?,
                amplitude: num(f[1]).ok_or("bad amplitude")?,
                points_per_axis: ints(f[2])?,
            }
        }
        "files" => {
            let paths: Vec<PathBuf> = list(rest).map(PathBuf::from).collect();
            if paths.is_empty() {
                return Err("empty list".into());
            }
            Refinement::Files(paths)
        }
        _ => return Err(format!("unknown refinement rule '{rule}'")),
    }))
}

fn refine_str(r: &Refinement) -> String {
    let join = |v: &[usize]| {
        v.iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    };
    match r {
        Refinement::Midpoint(n) => format!("midpoint:{n}"),
        Refinement::Grid(ns) => format!("grid:{}", join(ns)),
        Refinement::Random { interior, seed } => format!("random:{seed}:{}", join(interior)),
        Refinement::Jitter {
            points_per_axis,
            amplitude,
            seed,
        } => format!(
            "jitter:{seed}:{}:{}",
            fmt_num(*amplitude),
            join(points_per_axis)
        ),
        Refinement::Files(ps) => format!(
            "files:{}",
            ps.iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(",")
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_problem() {
        let cfg = RunConfig::parse("problem = diffusion3d\n").unwrap();
        assert_eq!((cfg.rho, cfg.mu), (1.0, 0.5));
        assert_eq!(cfg.star_size, 26);
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!((cfg.rho, cfg.mu), (0.005, 0.1));
        assert_eq!(cfg.realizations, 1000);
        assert_eq!(cfg.time_step, TimeStep::Auto { safety: 0.5 });
    }

    #[test]
    fn explicit_keys_win_regardless_of_order() {
        let cfg = RunConfig::parse("rho = 0.02\nproblem = diffusion2d\n").unwrap();
        assert_eq!(cfg.rho, 0.02);
        assert_eq!(cfg.mu, 0.1);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(
            RunConfig::parse("colour = red"),
            Err(Error::Config(_))
        ));
        assert!(matches!(RunConfig::parse("rho 0.1"), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::parse("rho = abc"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::parse("safety = 1.5"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::parse("cloud = hex:3"),
            Err(Error::Config(_))
        ));
        let cfg = RunConfig::parse("rho = -1").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn comments_and_dt_modes() {
        let cfg = RunConfig::parse("# header\ndt = 0.01 # pinned\n").unwrap();
        assert_eq!(cfg.time_step, TimeStep::Fixed(0.01));
        let cfg = RunConfig::parse("dt = 0.01\nsafety = 0.8\n").unwrap();
        assert_eq!(cfg.time_step, TimeStep::Fixed(0.01));
        let cfg = RunConfig::parse("safety = 0.8\ndt = auto\n").unwrap();
        assert_eq!(cfg.time_step, TimeStep::Auto { safety: 0.8 });
    }

    #[test]
    fn echo_round_trips() {
        let text = "problem = diffusion2d\nrho = 0.1\ndt = 0.003\nweight = exponential\nweight_n = 2\n\
                    cloud = random:40:8:9\nrefine = random:5:20,80\nsnapshots = 0.5,1\nlinf = final_time\n";
        let cfg = RunConfig::parse(text).unwrap();
        let again = RunConfig::parse(&cfg.echo()).unwrap();
        assert_eq!(cfg, again);
        let cfg =
            RunConfig::parse("refine = jitter:3:0.25:7,13\ncloud = jitter:9:0.3:2\n").unwrap();
        assert_eq!(RunConfig::parse(&cfg.echo()).unwrap(), cfg);
        let cfg = RunConfig::parse("refine = files:a.csv,b.csv\ncloud = file:c.csv\n").unwrap();
        assert_eq!(RunConfig::parse(&cfg.echo()).unwrap(), cfg);
    }

    #[test]
    fn midpoint_sequence() {
        let cfg = RunConfig::parse("cloud = grid:10\nrefine = midpoint:3\n").unwrap();
        let lens: Vec<usize> = cfg
            .build_sequence()
            .unwrap()
            .iter()
            .map(|c| c.len())
            .collect();
        assert_eq!(lens, vec![10, 19, 37]);
        let cfg = RunConfig::parse("problem = diffusion3d\nrefine = grid:4,5,6\n").unwrap();
        let lens: Vec<usize> = cfg
            .build_sequence()
            .unwrap()
            .iter()
            .map(|c| c.len())
            .collect();
        assert_eq!(lens, vec![64, 125, 216]);
    }
}
