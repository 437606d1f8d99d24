//! Weighted least-squares derivative stencils on stars.
//!
//! For a star with offsets `(p, q, r)` and weights `w`, the second-order
//! Taylor fit minimizes `sum_i (w_i (u_c - u_i + a_i . d))^2` over the
//! derivative vector `d`. The normal equations read `H d = f` with
//!
//! ```text
//! H = sum_i w_i^2 a_i a_i^T,    f = sum_i w_i^2 (u_i - u_c) a_i
//! ```
//!
//! where the basis vector `a_i` is ordered
//!
//! | dim | unknowns `d`                                   |
//! |-----|------------------------------------------------|
//! | 1   | `ux, uxx`                                      |
//! | 2   | `ux, uy, uxx, uyy, uxy`                        |
//! | 3   | `ux, uy, uz, uxx, uyy, uzz, uxy, uxz, uyz`     |
//!
//! with entries `p, q, r, p^2/2, q^2/2, r^2/2, pq, pr, qr`. `H` is factorized
//! as `S S^T` (Cholesky) and `R = S^{-1}` is formed explicitly, after which
//! each derivative is a linear combination of the nodal values.

use std::fmt::Write as _;
use std::fs;
use std::ops::{Index, IndexMut};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{fmt_f64, Point};
use crate::stars::{Star, StarSet};
use crate::weights::{star_weights, WeightSpec};

/// Largest unknown count (3D).
pub const MAX_UNKNOWNS: usize = 9;

/// Relative pivot threshold: a Cholesky pivot at or below
/// `PD_RELATIVE_TOLERANCE * trace(H) / C` marks the star as singular.
pub const PD_RELATIVE_TOLERANCE: f64 = 1e-13;

/// Number of unknowns in the second-order fit for a given dimension.
pub fn unknown_count(dim: usize) -> usize {
    match dim {
        1 => 2,
        2 => 5,
        3 => 9,
        _ => panic!("dimension {dim} out of range"),
    }
}

/// Rows of `d` holding the pure second derivatives.
pub fn laplacian_rows(dim: usize) -> &'static [usize] {
    match dim {
        1 => &[1],
        2 => &[2, 3],
        3 => &[3, 4, 5],
        _ => panic!("dimension {dim} out of range"),
    }
}

/// Taylor basis vector for offset `p`; entries past `unknown_count(dim)` are zero.
pub fn basis(dim: usize, p: &Point) -> [f64; MAX_UNKNOWNS] {
    let [x, y, z] = *p;
    match dim {
        1 => [x, 0.5 * x * x, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        2 => [x, y, 0.5 * x * x, 0.5 * y * y, x * y, 0.0, 0.0, 0.0, 0.0],
        _ => [
            x,
            y,
            z,
            0.5 * x * x,
            0.5 * y * y,
            0.5 * z * z,
            x * y,
            x * z,
            y * z,
        ],
    }
}

/// Dense square matrix of order at most [`MAX_UNKNOWNS`], stored inline.
#[derive(Clone, Copy, PartialEq)]
pub struct SmallMatrix {
    n: usize,
    a: [[f64; MAX_UNKNOWNS]; MAX_UNKNOWNS],
}

impl SmallMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n <= MAX_UNKNOWNS, "order {n} exceeds {MAX_UNKNOWNS}");
        Self {
            n,
            a: [[0.0; MAX_UNKNOWNS]; MAX_UNKNOWNS],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i][i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let mut m = Self::zeros(rows.len());
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), rows.len(), "matrix must be square");
            m.a[i][..row.len()].copy_from_slice(row);
        }
        m
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.a[i][i]).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.a[j][i] = self.a[i][j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for k in 0..self.n {
                let aik = self.a[i][k];
                if aik != 0.0 {
                    for j in 0..self.n {
                        out.a[i][j] += aik * other.a[k][j];
                    }
                }
            }
        }
        out
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.rows().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                out.a[i][j] -= other.a[i][j];
            }
        }
        out
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.n).all(|i| (i + 1..self.n).all(|j| self.a[i][j] == 0.0))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.a[..self.n].iter().map(move |r| &r[..self.n])
    }
}

impl Index<(usize, usize)> for SmallMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.n && j < self.n);
        &self.a[i][j]
    }
}

impl IndexMut<(usize, usize)> for SmallMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.n && j < self.n);
        &mut self.a[i][j]
    }
}

impl std::fmt::Debug for SmallMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

/// Normal-equation system of one star.
#[derive(Debug, Clone)]
pub struct MomentSystem {
    dim: usize,
    h: SmallMatrix,
    basis: Vec<[f64; MAX_UNKNOWNS]>,
    weights: Vec<f64>,
}

impl MomentSystem {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of unknowns `C`.
    pub fn unknowns(&self) -> usize {
        self.h.n
    }

    pub fn h(&self) -> &SmallMatrix {
        &self.h
    }

    pub fn basis(&self) -> &[[f64; MAX_UNKNOWNS]] {
        &self.basis
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Column `w_i^2 a_i` of the right-hand side for neighbor `i`.
    fn alpha(&self, i: usize) -> [f64; MAX_UNKNOWNS] {
        let w2 = self.weights[i] * self.weights[i];
        self.basis[i].map(|v| v * w2)
    }
}

pub fn assemble_moment_system(star: &Star, weights: &[f64]) -> Result<MomentSystem> {
    if weights.len() != star.len() {
        return Err(Error::invalid(format!(
            "{} weights for a star of {} neighbors",
            weights.len(),
            star.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::invalid(format!(
            "weights must be finite and >= 0, got {w}"
        )));
    }
    let dim = star.dim();
    let c = unknown_count(dim);
    let positive = weights.iter().filter(|w| **w > 0.0).count();
    if positive < c {
        return Err(Error::RankDeficient {
            positive,
            unknowns: c,
        });
    }
    let basis: Vec<[f64; MAX_UNKNOWNS]> = star.offsets().iter().map(|p| basis(dim, p)).collect();
    let mut h = SmallMatrix::zeros(c);
    for (a, w) in basis.iter().zip(weights) {
        let w2 = w * w;
        for l in 0..c {
            let s = w2 * a[l];
            for j in l..c {
                h.a[l][j] += s * a[j];
            }
        }
    }
    for l in 0..c {
        for j in 0..l {
            h.a[l][j] = h.a[j][l];
        }
    }
    Ok(MomentSystem {
        dim,
        h,
        basis,
        weights: weights.to_vec(),
    })
}

/// `H = S S^T` with `S` lower triangular, plus `R = S^{-1}`.
#[derive(Debug, Clone)]
pub struct CholeskyPair {
    pub s: SmallMatrix,
    pub r: SmallMatrix,
}

pub fn cholesky(system: &MomentSystem) -> Result<CholeskyPair> {
    let s = cholesky_factor(&system.h)?;
    let r = invert_lower_triangular(&s)?;
    Ok(CholeskyPair { s, r })
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_factor(h: &SmallMatrix) -> Result<SmallMatrix> {
    let n = h.n;
    let tolerance = PD_RELATIVE_TOLERANCE * h.trace() / n as f64;
    let mut s = SmallMatrix::zeros(n);
    for j in 0..n {
        let pivot = h.a[j][j] - (0..j).map(|k| s.a[j][k] * s.a[j][k]).sum::<f64>();
        if !(pivot > tolerance) {
            return Err(Error::SingularStar {
                row: j,
                pivot,
                tolerance,
            });
        }
        let diag = pivot.sqrt();
        s.a[j][j] = diag;
        for i in j + 1..n {
            let dot: f64 = (0..j).map(|k| s.a[i][k] * s.a[j][k]).sum();
            s.a[i][j] = (h.a[i][j] - dot) / diag;
        }
    }
    Ok(s)
}

/// `R = S^{-1}` by the row recursion
/// `R[l][l] = 1/S[l][l]`, `R[l][j] = -(1/S[l][l]) sum_{k=j}^{l-1} S[l][k] R[k][j]` for `l > j`.
pub fn invert_lower_triangular(s: &SmallMatrix) -> Result<SmallMatrix> {
    check_triangular(s)?;
    let n = s.n;
    let mut r = SmallMatrix::zeros(n);
    for l in 0..n {
        let inv = 1.0 / s.a[l][l];
        r.a[l][l] = inv;
        for j in 0..l {
            let sum: f64 = (j..l).map(|k| s.a[l][k] * r.a[k][j]).sum();
            r.a[l][j] = -inv * sum;
        }
    }
    Ok(r)
}

/// `S^{-1}` column by column: forward substitution of `S x = e_j`.
pub fn invert_lower_triangular_forward(s: &SmallMatrix) -> Result<SmallMatrix> {
    check_triangular(s)?;
    let n = s.n;
    let mut r = SmallMatrix::zeros(n);
    for j in 0..n {
        let mut x = [0.0; MAX_UNKNOWNS];
        x[j] = 1.0;
        for i in j..n {
            x[i] /= s.a[i][i];
            let xi = x[i];
            for k in i + 1..n {
                x[k] -= s.a[k][i] * xi;
            }
        }
        for i in j..n {
            r.a[i][j] = x[i];
        }
    }
    Ok(r)
}

fn check_triangular(s: &SmallMatrix) -> Result<()> {
    if !s.is_lower_triangular() {
        return Err(Error::invalid("matrix is not lower triangular"));
    }
    if let Some(l) = (0..s.n).find(|&l| s.a[l][l] == 0.0 || !s.a[l][l].is_finite()) {
        return Err(Error::invalid(format!(
            "zero or non-finite diagonal at row {l}"
        )));
    }
    Ok(())
}

/// Linear derivative formulas at a star center: `d_l = center[l] u_c + sum_i neighbors[i][l] u_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeStencils {
    dim: usize,
    center: [f64; MAX_UNKNOWNS],
    neighbors: Vec<[f64; MAX_UNKNOWNS]>,
}

impl DerivativeStencils {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn unknowns(&self) -> usize {
        unknown_count(self.dim)
    }

    /// Coefficient of `u_c` in each derivative.
    pub fn center(&self) -> &[f64] {
        &self.center[..self.unknowns()]
    }

    /// Coefficient of neighbor `i`'s value in derivative `l`.
    pub fn neighbor(&self, i: usize, l: usize) -> f64 {
        self.neighbors[i][l]
    }

    pub fn neighbor_count(&self) -> usize {
        self.neighbors.len()
    }

    /// Evaluates all derivatives for the given center and neighbor values.
    pub fn apply(&self, center_value: f64, neighbor_values: &[f64]) -> Result<Vec<f64>> {
        if neighbor_values.len() != self.neighbors.len() {
            return Err(Error::invalid(format!(
                "{} values for {} neighbors",
                neighbor_values.len(),
                self.neighbors.len()
            )));
        }
        Ok((0..self.unknowns())
            .map(|l| {
                self.center[l] * center_value
                    + self
                        .neighbors
                        .iter()
                        .zip(neighbor_values)
                        .map(|(c, u)| c[l] * u)
                        .sum::<f64>()
            })
            .collect())
    }

    fn from_neighbor_columns(dim: usize, neighbors: Vec<[f64; MAX_UNKNOWNS]>) -> Self {
        let mut center = [0.0; MAX_UNKNOWNS];
        for col in &neighbors {
            for (c, v) in center.iter_mut().zip(col) {
                *c -= v;
            }
        }
        Self {
            dim,
            center,
            neighbors,
        }
    }
}

/// Production path: `H^{-1} (w_i^2 a_i)` through the two triangular solves
/// `S y = w_i^2 a_i`, `S^T x = y`.
pub fn derivative_coefficients(system: &MomentSystem, pair: &CholeskyPair) -> DerivativeStencils {
    let c = system.unknowns();
    let s = &pair.s;
    let columns = (0..system.basis.len())
        .map(|i| {
            let mut x = system.alpha(i);
            for l in 0..c {
                let dot: f64 = (0..l).map(|k| s.a[l][k] * x[k]).sum();
                x[l] = (x[l] - dot) / s.a[l][l];
            }
            for l in (0..c).rev() {
                let dot: f64 = (l + 1..c).map(|k| s.a[k][l] * x[k]).sum();
                x[l] = (x[l] - dot) / s.a[l][l];
            }
            x
        })
        .collect();
    DerivativeStencils::from_neighbor_columns(system.dim, columns)
}

/// Cross-check path written in terms of `R`:
///
/// ```text
/// d_l = (1/S_ll) ( -u_c sum_j beta_j R_lj + sum_i u_i sum_j alpha_ij R_lj
///                  - sum_{n>0} S_{l+n,l} d_{l+n} )
/// ```
///
/// with `alpha_ij = w_i^2 a_ij` and `beta_j = sum_i alpha_ij`, evaluated by
/// back-substitution from the last unknown upward.
pub fn derivative_coefficients_explicit(
    system: &MomentSystem,
    pair: &CholeskyPair,
) -> DerivativeStencils {
    let c = system.unknowns();
    let (s, r) = (&pair.s, &pair.r);
    let m = system.basis.len();
    let alphas: Vec<[f64; MAX_UNKNOWNS]> = (0..m).map(|i| system.alpha(i)).collect();
    let mut beta = [0.0; MAX_UNKNOWNS];
    for a in &alphas {
        for j in 0..c {
            beta[j] += a[j];
        }
    }
    // coefficient rows: center[l], neighbors[i][l]
    let mut center = [0.0; MAX_UNKNOWNS];
    let mut neighbors = vec![[0.0; MAX_UNKNOWNS]; m];
    for l in (0..c).rev() {
        let inv = 1.0 / s.a[l][l];
        let mut cc = -(0..c).map(|j| beta[j] * r.a[l][j]).sum::<f64>();
        for n in l + 1..c {
            cc -= s.a[n][l] * center[n];
        }
        center[l] = inv * cc;
        for (i, a) in alphas.iter().enumerate() {
            let mut ci: f64 = (0..c).map(|j| a[j] * r.a[l][j]).sum();
            for n in l + 1..c {
                ci -= s.a[n][l] * neighbors[i][n];
            }
            neighbors[i][l] = inv * ci;
        }
    }
    DerivativeStencils {
        dim: system.dim,
        center,
        neighbors,
    }
}

/// Laplacian at a star center as `-theta_c u_c + sum_i theta_i u_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianStencil {
    pub center: usize,
    pub neighbors: Vec<usize>,
    pub theta: Vec<f64>,
    pub theta_c: f64,
}

pub fn laplacian_stencil(star: &Star, stencils: &DerivativeStencils) -> LaplacianStencil {
    let rows = laplacian_rows(stencils.dim);
    let theta: Vec<f64> = stencils
        .neighbors
        .iter()
        .map(|col| rows.iter().map(|&l| col[l]).sum())
        .collect();
    let theta_c = theta.iter().sum();
    LaplacianStencil {
        center: star.center(),
        neighbors: star.neighbors().to_vec(),
        theta,
        theta_c,
    }
}

/// `-theta_c u_c + sum_i theta_i u_i`.
pub fn apply_stencil(
    stencil: &LaplacianStencil,
    center_value: f64,
    neighbor_values: &[f64],
) -> Result<f64> {
    if neighbor_values.len() != stencil.theta.len() {
        return Err(Error::invalid(format!(
            "{} values for a stencil of {} neighbors",
            neighbor_values.len(),
            stencil.theta.len()
        )));
    }
    Ok(-stencil.theta_c * center_value
        + stencil
            .theta
            .iter()
            .zip(neighbor_values)
            .map(|(t, u)| t * u)
            .sum::<f64>())
}

/// Rows with at least one negative neighbor coefficient, and the largest
/// `sum_i |theta_i| / theta_c` over all rows.
///
/// With every `theta_i >= 0` the explicit step is a convex combination for
/// `rho dt theta_c <= 1`. Negative coefficients void that argument, and on
/// badly shaped clouds the operator can then have growing modes at any step.
pub fn coefficient_spread(stencils: &[LaplacianStencil]) -> (usize, f64) {
    let negative = stencils
        .iter()
        .filter(|s| s.theta.iter().any(|&t| t < 0.0))
        .count();
    let ratio = stencils
        .iter()
        .map(|s| s.theta.iter().map(|t| t.abs()).sum::<f64>() / s.theta_c)
        .fold(0.0, f64::max);
    (negative, ratio)
}

impl LaplacianStencil {
    /// Applies the stencil to a field indexed by global node number.
    pub fn apply_field(&self, field: &[f64]) -> f64 {
        -self.theta_c * field[self.center]
            + self
                .theta
                .iter()
                .zip(&self.neighbors)
                .map(|(t, &j)| t * field[j])
                .sum::<f64>()
    }
}

/// Full chain for one star: weights, moments, factorization, Laplacian.
pub fn star_laplacian(star: &Star, weight: &WeightSpec) -> Result<LaplacianStencil> {
    let weights = star_weights(weight, star)?;
    let system = assemble_moment_system(star, &weights)?;
    let pair = cholesky(&system)?;
    Ok(laplacian_stencil(
        star,
        &derivative_coefficients(&system, &pair),
    ))
}

/// Laplacian stencils for every interior node, flattened for time stepping.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianOperator {
    stencils: Vec<LaplacianStencil>,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl LaplacianOperator {
    pub fn from_stencils(stencils: Vec<LaplacianStencil>) -> Self {
        let mut row_start = Vec::with_capacity(stencils.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_start.push(0);
        for st in &stencils {
            cols.extend_from_slice(&st.neighbors);
            vals.extend_from_slice(&st.theta);
            row_start.push(cols.len());
        }
        Self {
            stencils,
            row_start,
            cols,
            vals,
        }
    }

    /// Builds every star's stencil (in parallel; order is that of the star set).
    pub fn build(stars: &StarSet, weight: &WeightSpec) -> Result<Self> {
        let stencils = stars
            .stars()
            .par_iter()
            .map(|star| {
                star_laplacian(star, weight).map_err(|e| Error::Star {
                    node: star.center(),
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_stencils(stencils))
    }

    pub fn stencils(&self) -> &[LaplacianStencil] {
        &self.stencils
    }

    pub fn len(&self) -> usize {
        self.stencils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencils.is_empty()
    }

    pub fn max_theta_c(&self) -> f64 {
        self.stencils.iter().map(|s| s.theta_c).fold(0.0, f64::max)
    }

    /// `(center node, -theta_c u_c + sum theta_i u_i)` for each row.
    #[inline]
    pub fn apply_row(&self, row: usize, field: &[f64]) -> f64 {
        let st = &self.stencils[row];
        let range = self.row_start[row]..self.row_start[row + 1];
        let mut acc = -st.theta_c * field[st.center];
        for (j, v) in self.cols[range.clone()].iter().zip(&self.vals[range]) {
            acc += v * field[*j];
        }
        acc
    }

    pub fn center(&self, row: usize) -> usize {
        self.stencils[row].center
    }
}

/// Writes per-star `H`, `S` and `theta` in long CSV form
/// (`node,matrix,row,col,value`; `theta` rows use `row = neighbor node`).
pub fn write_debug_dump(path: &Path, stars: &StarSet, weight: &WeightSpec) -> Result<()> {
    let mut out = String::from("node,matrix,row,col,value\n");
    for star in stars.stars() {
        let weights = star_weights(weight, star)?;
        let system = assemble_moment_system(star, &weights)?;
        let pair = cholesky(&system).map_err(|e| Error::Star {
            node: star.center(),
            source: Box::new(e),
        })?;
        let node = star.center();
        for (name, m) in [("H", &system.h), ("S", &pair.s)] {
            for (i, row) in m.rows().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let _ = writeln!(out, "{node},{name},{i},{j},{}", fmt_f64(*v));
                }
            }
        }
        let lap = laplacian_stencil(star, &derivative_coefficients(&system, &pair));
        for (j, t) in lap.neighbors.iter().zip(&lap.theta) {
            let _ = writeln!(out, "{node},theta,{j},0,{}", fmt_f64(*t));
        }
        let _ = writeln!(out, "{node},theta_c,{node},0,{}", fmt_f64(lap.theta_c));
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star1d(h: f64) -> Star {
        Star::from_offsets(1, &[[-h, 0.0, 0.0], [h, 0.0, 0.0]]).unwrap()
    }

    fn neighbor_row(st: &DerivativeStencils, l: usize) -> Vec<f64> {
        (0..st.neighbor_count())
            .map(|i| st.neighbor(i, l))
            .collect()
    }

    #[test]
    fn one_d_moment_matrix() {
        let h = 0.1;
        let sys = assemble_moment_system(&star1d(h), &[1.0, 1.0]).unwrap();
        let m = sys.h();
        assert!((m[(0, 0)] - 2.0 * h * h).abs() < 1e-15);
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(1, 0)], 0.0);
        assert!((m[(1, 1)] - h.powi(4) / 2.0).abs() < 1e-18);
    }

    #[test]
    fn one_d_central_differences() {
        let h = 0.25;
        let sys = assemble_moment_system(&star1d(h), &[1.0, 1.0]).unwrap();
        let pair = cholesky(&sys).unwrap();
        let st = derivative_coefficients(&sys, &pair);
        // neighbors ordered by distance then index: -h first
        let dx = neighbor_row(&st, 0);
        assert!((dx[0] + 1.0 / (2.0 * h)).abs() < 1e-12);
        assert!((dx[1] - 1.0 / (2.0 * h)).abs() < 1e-12);
        let dxx = neighbor_row(&st, 1);
        for v in dxx {
            assert!((v - 1.0 / (h * h)).abs() < 1e-10);
        }
        assert!((st.center()[1] + 2.0 / (h * h)).abs() < 1e-10);
        let lap = laplacian_stencil(&star1d(h), &st);
        assert!((lap.theta_c - 2.0 / (h * h)).abs() < 1e-10);
    }

    #[test]
    fn cross_star_has_zero_mixed_row() {
        let h = 0.1;
        let mut offsets = Vec::new();
        for k in [1.0, 2.0] {
            offsets.extend([
                [k * h, 0.0, 0.0],
                [-k * h, 0.0, 0.0],
                [0.0, k * h, 0.0],
                [0.0, -k * h, 0.0],
            ]);
        }
        let star = Star::from_offsets(2, &offsets).unwrap();
        let sys = assemble_moment_system(&star, &[1.0; 8]).unwrap();
        for j in 0..5 {
            assert_eq!(sys.h()[(4, j)], 0.0);
            assert_eq!(sys.h()[(j, 4)], 0.0);
        }
        match cholesky(&sys).unwrap_err() {
            Error::SingularStar { row, .. } => assert_eq!(row, 4),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn too_few_positive_weights() {
        let h = 0.1;
        let star = Star::from_offsets(
            2,
            &[[h, 0.0, 0.0], [-h, 0.0, 0.0], [0.0, h, 0.0], [0.0, -h, 0.0]],
        )
        .unwrap();
        assert!(matches!(
            assemble_moment_system(&star, &[1.0; 4]),
            Err(Error::RankDeficient {
                positive: 4,
                unknowns: 5
            })
        ));
        assert!(assemble_moment_system(&star, &[1.0; 3]).is_err());
    }

    #[test]
    fn hand_factorizations() {
        let id = SmallMatrix::identity(3);
        let s = cholesky_factor(&id).unwrap();
        assert_eq!(s, id);
        assert_eq!(invert_lower_triangular(&s).unwrap(), id);

        let h = SmallMatrix::from_rows(&[&[4.0, 2.0], &[2.0, 5.0]]);
        let s = cholesky_factor(&h).unwrap();
        assert_eq!(s, SmallMatrix::from_rows(&[&[2.0, 0.0], &[1.0, 2.0]]));
        let r = invert_lower_triangular(&s).unwrap();
        assert_eq!(r, SmallMatrix::from_rows(&[&[0.5, 0.0], &[-0.25, 0.5]]));
        assert_eq!(invert_lower_triangular_forward(&s).unwrap(), r);
    }

    #[test]
    fn triangular_inverse_rejects_bad_input() {
        let zero_diag = SmallMatrix::from_rows(&[&[1.0, 0.0], &[1.0, 0.0]]);
        assert!(matches!(
            invert_lower_triangular(&zero_diag),
            Err(Error::InvalidArgument(_))
        ));
        let upper = SmallMatrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!(invert_lower_triangular_forward(&upper).is_err());
    }

    #[test]
    fn apply_stencil_cases() {
        let h = 0.5;
        let star = star1d(h);
        let lap = star_laplacian(&star, &WeightSpec::default()).unwrap();
        assert_eq!(apply_stencil(&lap, 5.0, &[5.0, 5.0]).unwrap().abs(), 0.0);
        // u = x^2 centered at 0
        let v = apply_stencil(&lap, 0.0, &[h * h, h * h]).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        assert!(apply_stencil(&lap, 0.0, &[1.0]).is_err());
    }

    #[test]
    fn operator_rows_match_stencils() {
        let stencils = vec![
            LaplacianStencil {
                center: 1,
                neighbors: vec![0, 2],
                theta: vec![4.0, 4.0],
                theta_c: 8.0,
            },
            LaplacianStencil {
                center: 2,
                neighbors: vec![1, 3],
                theta: vec![1.0, 3.0],
                theta_c: 4.0,
            },
        ];
        let op = LaplacianOperator::from_stencils(stencils.clone());
        let field = [0.3, 1.0, -2.0, 0.7];
        for (row, st) in stencils.iter().enumerate() {
            assert_eq!(op.apply_row(row, &field), st.apply_field(&field));
        }
        assert_eq!(op.max_theta_c(), 8.0);
    }
}
