//! Explicit stochastic time stepping of the semi-discrete diffusion system.
//!
//! Interior nodes advance by
//!
//! ```text
//! u_c^{k+1} = u_c^k + rho dt (-theta_c u_c^k + sum_i theta_i u_i^k) + mu u_c^k dW_k
//! ```
//!
//! where `dW_k ~ N(0, dt)` is one Brownian increment per step, shared by all
//! nodes. Boundary nodes are then overwritten with `F(x, t_{k+1})`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud, Role};
use crate::stencil::{LaplacianOperator, LaplacianStencil};

/// Tolerance on `T / dt` being an integer.
pub const STEP_COUNT_TOLERANCE: f64 = 1e-9;

pub type InitialCondition = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type BoundaryCondition = Arc<dyn Fn(&Point, f64) -> f64 + Send + Sync>;

/// How Brownian increments are drawn each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    /// One scalar increment shared by every interior node.
    #[default]
    Shared,
    /// Independent increments per interior node (experimental).
    PerNode,
}

impl NoiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMode::Shared => "shared",
            NoiseMode::PerNode => "per_node",
        }
    }
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(NoiseMode::Shared),
            "per_node" => Ok(NoiseMode::PerNode),
            other => Err(Error::invalid(format!("unknown noise mode '{other}'"))),
        }
    }
}

/// `v_t = rho lap v + mu v dW` with initial data `h` and Dirichlet data `F`.
#[derive(Clone)]
pub struct ProblemSpec {
    rho: f64,
    mu: f64,
    t_final: f64,
    dt: f64,
    initial: InitialCondition,
    boundary: BoundaryCondition,
    pub noise: NoiseMode,
    /// Run even when the stability condition fails.
    pub force_unstable: bool,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("rho", &self.rho)
            .field("mu", &self.mu)
            .field("t_final", &self.t_final)
            .field("dt", &self.dt)
            .field("noise", &self.noise)
            .field("force_unstable", &self.force_unstable)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn new(
        rho: f64,
        mu: f64,
        t_final: f64,
        dt: f64,
        initial: InitialCondition,
        boundary: BoundaryCondition,
    ) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::invalid(format!("rho must be positive, got {rho}")));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::invalid(format!("mu must be nonnegative, got {mu}")));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::invalid(format!("T must be positive, got {t_final}")));
        }
        if !(dt > 0.0 && dt <= t_final) {
            return Err(Error::invalid(format!("need 0 < dt <= T, got dt = {dt}")));
        }
        Ok(Self {
            rho,
            mu,
            t_final,
            dt,
            initial,
            boundary,
            noise: NoiseMode::Shared,
            force_unstable: false,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn initial(&self, x: &Point) -> f64 {
        (self.initial)(x)
    }

    pub fn boundary(&self, x: &Point, t: f64) -> f64 {
        (self.boundary)(x, t)
    }

    /// Copy with a different time step.
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        let mut out = Self::new(
            self.rho,
            self.mu,
            self.t_final,
            dt,
            self.initial.clone(),
            self.boundary.clone(),
        )?;
        out.noise = self.noise;
        out.force_unstable = self.force_unstable;
        Ok(out)
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        let mut out = Self::new(
            self.rho,
            mu,
            self.t_final,
            self.dt,
            self.initial.clone(),
            self.boundary.clone(),
        )?;
        out.noise = self.noise;
        out.force_unstable = self.force_unstable;
        Ok(out)
    }

    /// Number of steps `N_t = T / dt`.
    pub fn steps(&self) -> Result<usize> {
        step_count(self.t_final, self.dt)
    }
}

pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    let ratio = t_final / dt;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > STEP_COUNT_TOLERANCE {
        return Err(Error::invalid(format!(
            "T / dt = {ratio} is not an integer step count"
        )));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub max_theta_c: f64,
    /// `rho dt max theta_c`
    pub product: f64,
    pub pass: bool,
    /// `1 / (rho max theta_c)`
    pub max_stable_dt: f64,
}

impl fmt::Display for StabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "max theta_c = {:.6e}, rho*dt*max theta_c = {:.6}, largest stable dt = {:.6e}, {}",
            self.max_theta_c,
            self.product,
            self.max_stable_dt,
            if self.pass { "stable" } else { "UNSTABLE" }
        )
    }
}

/// Slack on the stability bound for stencil roundoff: a product of
/// `1 + 1e-12` still passes.
pub const STABILITY_TOLERANCE: f64 = 1e-12;

/// Mean-square stability test `0 <= rho dt max theta_c <= 1`.
pub fn check_stability(rho: f64, dt: f64, stencils: &[LaplacianStencil]) -> StabilityReport {
    let max_theta_c = stencils.iter().map(|s| s.theta_c).fold(0.0, f64::max);
    let product = rho * dt * max_theta_c;
    StabilityReport {
        max_theta_c,
        product,
        pass: (0.0..=1.0 + STABILITY_TOLERANCE).contains(&product),
        max_stable_dt: 1.0 / (rho * max_theta_c),
    }
}

/// `safety / (rho max theta_c)`.
pub fn max_stable_dt(rho: f64, stencils: &[LaplacianStencil], safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::invalid(format!(
            "safety must lie in (0, 1], got {safety}"
        )));
    }
    if !(rho > 0.0) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    let max_theta_c = stencils
        .iter()
        .map(|s| s.theta_c)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max_theta_c > 0.0 && max_theta_c.is_finite()) {
        return Err(Error::DegenerateStencil(max_theta_c));
    }
    Ok(safety / (rho * max_theta_c))
}

/// Largest `dt <= max_stable_dt(rho, stencils, safety)` that divides `T` evenly.
pub fn auto_dt(rho: f64, stencils: &[LaplacianStencil], safety: f64, t_final: f64) -> Result<f64> {
    let bound = max_stable_dt(rho, stencils, safety)?;
    let max_theta_c = stencils.iter().map(|s| s.theta_c).fold(0.0, f64::max);
    let mut steps = (t_final / bound).ceil().max(1.0);
    // rounding in T / steps may push the product just past `safety`
    while rho * (t_final / steps) * max_theta_c > safety {
        steps += 1.0;
    }
    Ok(t_final / steps)
}

/// One draw of `W(t + dt) - W(t) ~ N(0, dt)`.
pub fn sample_wiener_increment<R: Rng + ?Sized>(rng: &mut R, dt: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * dt.sqrt()
}

/// Nodal values at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub k: usize,
    pub t: f64,
    pub u: Vec<f64>,
}

impl FieldState {
    pub fn sup_norm(&self) -> f64 {
        self.u.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Brownian increments for a single step.
#[derive(Debug, Clone, Copy)]
pub enum Increment<'a> {
    Shared(f64),
    /// One increment per stencil row (interior node), in operator order.
    PerNode(&'a [f64]),
}

/// Precomputed stepping context for one cloud, operator and problem.
pub struct Stepper<'a> {
    cloud: &'a PointCloud,
    op: &'a LaplacianOperator,
    spec: &'a ProblemSpec,
    boundary: Vec<usize>,
    report: StabilityReport,
    /// Row-major `(k, boundary node)` values of `F`, when precomputed.
    boundary_table: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        cloud: &'a PointCloud,
        op: &'a LaplacianOperator,
        spec: &'a ProblemSpec,
    ) -> Result<Self> {
        let interior = cloud.interior_indices();
        if interior.len() != op.len() || (0..op.len()).any(|r| op.center(r) != interior[r]) {
            return Err(Error::invalid(
                "stencils do not cover the interior nodes in order",
            ));
        }
        Ok(Self {
            cloud,
            op,
            spec,
            boundary: cloud.boundary_indices(),
            report: check_stability(spec.rho, spec.dt, op.stencils()),
            boundary_table: Vec::new(),
        })
    }

    /// Tabulates `F` at every boundary node and step of the run.
    pub fn precompute_boundary(mut self) -> Result<Self> {
        let steps = self.spec.steps()?;
        let mut table = Vec::with_capacity((steps + 1) * self.boundary.len());
        for k in 0..=steps {
            let t = k as f64 * self.spec.dt;
            table.extend(
                self.boundary
                    .iter()
                    .map(|&j| self.spec.boundary(self.cloud.coord(j), t)),
            );
        }
        self.boundary_table = table;
        Ok(self)
    }

    pub fn report(&self) -> &StabilityReport {
        &self.report
    }

    fn boundary_value(&self, k: usize, pos: usize) -> f64 {
        let nb = self.boundary.len();
        match self.boundary_table.get(k * nb + pos) {
            Some(v) => *v,
            None => self.spec.boundary(
                self.cloud.coord(self.boundary[pos]),
                k as f64 * self.spec.dt,
            ),
        }
    }

    /// `u^0 = h(x)` with boundary nodes overridden by `F(x, 0)`.
    pub fn initial_state(&self) -> FieldState {
        let mut u: Vec<f64> = self
            .cloud
            .coords()
            .iter()
            .map(|x| self.spec.initial(x))
            .collect();
        for pos in 0..self.boundary.len() {
            u[self.boundary[pos]] = self.boundary_value(0, pos);
        }
        FieldState { k: 0, t: 0.0, u }
    }

    /// Advances `state` into `next` (reused buffer).
    pub fn step_into(
        &self,
        state: &FieldState,
        dw: Increment<'_>,
        next: &mut FieldState,
    ) -> Result<()> {
        let u = &state.u;
        let n = u.len();
        if n != self.cloud.len() {
            return Err(Error::invalid(format!(
                "field has {n} values for {} nodes",
                self.cloud.len()
            )));
        }
        if let Increment::PerNode(d) = dw {
            if d.len() != self.op.len() {
                return Err(Error::invalid(format!(
                    "{} increments for {} interior nodes",
                    d.len(),
                    self.op.len()
                )));
            }
        }
        next.u.resize(n, 0.0);
        let rho_dt = self.spec.rho * self.spec.dt;
        let mu = self.spec.mu;
        for row in 0..self.op.len() {
            let c = self.op.center(row);
            let lap = self.op.apply_row(row, u);
            let dw_c = match dw {
                Increment::Shared(v) => v,
                Increment::PerNode(d) => d[row],
            };
            next.u[c] = u[c] + rho_dt * lap + mu * u[c] * dw_c;
        }
        let k = state.k + 1;
        for pos in 0..self.boundary.len() {
            next.u[self.boundary[pos]] = self.boundary_value(k, pos);
        }
        next.k = k;
        next.t = k as f64 * self.spec.dt;
        if let Some(node) = next.u.iter().position(|v| !v.is_finite()) {
            return Err(Error::Overflow {
                step: k,
                node,
                report: self.report,
            });
        }
        Ok(())
    }

    pub fn step(&self, state: &FieldState, dw: Increment<'_>) -> Result<FieldState> {
        let mut next = FieldState {
            k: 0,
            t: 0.0,
            u: Vec::with_capacity(state.u.len()),
        };
        self.step_into(state, dw, &mut next)?;
        Ok(next)
    }

    /// Runs `N_t` steps from `h`, calling `visit` on every state including
    /// the initial one; returns the final state.
    pub fn run_with<F>(&self, seed: u64, mut visit: F) -> Result<FieldState>
    where
        F: FnMut(&FieldState),
    {
        if !self.report.pass && !self.spec.force_unstable {
            return Err(Error::Unstable(self.report));
        }
        let steps = self.spec.steps()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut increments = vec![0.0; self.op.len()];
        let mut state = self.initial_state();
        let mut next = state.clone();
        visit(&state);
        for _ in 0..steps {
            let dw = match self.spec.noise {
                NoiseMode::Shared => {
                    Increment::Shared(sample_wiener_increment(&mut rng, self.spec.dt))
                }
                NoiseMode::PerNode => {
                    for v in increments.iter_mut() {
                        *v = sample_wiener_increment(&mut rng, self.spec.dt);
                    }
                    Increment::PerNode(&increments)
                }
            };
            self.step_into(&state, dw, &mut next)?;
            std::mem::swap(&mut state, &mut next);
            visit(&state);
        }
        Ok(state)
    }
}

/// Single explicit step with a shared increment `dw`.
pub fn step(
    state: &FieldState,
    cloud: &PointCloud,
    op: &LaplacianOperator,
    spec: &ProblemSpec,
    dw: f64,
) -> Result<FieldState> {
    Stepper::new(cloud, op, spec)?.step(state, Increment::Shared(dw))
}

/// Full trajectory `u^0 .. u^{N_t}` of one realization.
pub fn run_realization(
    cloud: &PointCloud,
    op: &LaplacianOperator,
    spec: &ProblemSpec,
    seed: u64,
) -> Result<Vec<FieldState>> {
    let stepper = Stepper::new(cloud, op, spec)?.precompute_boundary()?;
    let mut out = Vec::with_capacity(spec.steps()? + 1);
    stepper.run_with(seed, |s| out.push(s.clone()))?;
    Ok(out)
}

/// Writes `coords..., u` rows for one field.
pub fn write_field_csv(
    path: &std::path::Path,
    cloud: &PointCloud,
    u: &[f64],
    value_name: &str,
) -> Result<()> {
    use std::fmt::Write as _;
    let dim = cloud.dim();
    let mut out = ["x", "y", "z"][..dim].join(",");
    let _ = writeln!(out, ",role,{value_name}");
    for (i, x) in cloud.coords().iter().enumerate() {
        for xa in &x[..dim] {
            let _ = write!(out, "{},", crate::geometry::fmt_f64(*xa));
        }
        let role = match cloud.role(i) {
            Role::Interior => "interior",
            Role::Boundary => "boundary",
        };
        let _ = writeln!(out, "{role},{}", crate::geometry::fmt_f64(u[i]));
    }
    std::fs::write(path, out)?;
    Ok(())
}
