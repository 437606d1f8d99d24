#![allow(dead_code)]

use gfdm::geometry::Point;
use gfdm::stars::{default_star_size, Star};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random star with `default_star_size(dim) + extra` neighbors in a box of
/// random half-width, rejecting near-coincident offsets.
pub fn random_star(dim: usize, extra: usize, rng: &mut ChaCha8Rng) -> Star {
    let m = default_star_size(dim) + extra;
    let half = rng.random_range(0.02..0.5);
    let mut offsets: Vec<Point> = Vec::with_capacity(m);
    while offsets.len() < m {
        let mut p: Point = [0.0; 3];
        for v in p.iter_mut().take(dim) {
            *v = rng.random_range(-half..half);
        }
        let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if norm > 0.05 * half {
            offsets.push(p);
        }
    }
    Star::from_offsets(dim, &offsets).unwrap()
}

pub fn star_corpus(dim: usize, count: usize, seed: u64) -> Vec<Star> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| random_star(dim, k % 4, &mut rng))
        .collect()
}

/// Quadratic `c0 + g.x + x^T Q x / 2` and its exact derivative vector.
pub struct Quadratic {
    pub dim: usize,
    pub c0: f64,
    pub g: [f64; 3],
    pub q: [[f64; 3]; 3],
}

impl Quadratic {
    pub fn random(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut g = [0.0; 3];
        let mut q = [[0.0; 3]; 3];
        for i in 0..dim {
            g[i] = rng.random_range(-2.0..2.0);
            for j in i..dim {
                let v = rng.random_range(-2.0..2.0);
                q[i][j] = v;
                q[j][i] = v;
            }
        }
        Self {
            dim,
            c0: rng.random_range(-1.0..1.0),
            g,
            q,
        }
    }

    /// Single monomial of degree <= 2 with unit coefficient.
    pub fn monomial(dim: usize, index: usize) -> Self {
        let mut m = Self {
            dim,
            c0: 0.0,
            g: [0.0; 3],
            q: [[0.0; 3]; 3],
        };
        let pairs: Vec<(usize, usize)> = (0..dim)
            .flat_map(|i| (i..dim).map(move |j| (i, j)))
            .collect();
        if index == 0 {
            m.c0 = 1.0;
        } else if index <= dim {
            m.g[index - 1] = 1.0;
        } else {
            // x_i x_j, so Q_ij = Q_ji = 1 off-diagonal, Q_ii = 2 on it
            let (i, j) = pairs[index - dim - 1];
            if i == j {
                m.q[i][i] = 2.0;
            } else {
                m.q[i][j] = 1.0;
                m.q[j][i] = 1.0;
            }
        }
        m
    }

    pub fn monomial_count(dim: usize) -> usize {
        1 + dim + dim * (dim + 1) / 2
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let mut v = self.c0;
        for i in 0..self.dim {
            v += self.g[i] * x[i];
            for j in 0..self.dim {
                v += 0.5 * self.q[i][j] * x[i] * x[j];
            }
        }
        v
    }

    /// Derivatives at `x` in the stencil's unknown ordering.
    pub fn derivatives(&self, x: &Point) -> Vec<f64> {
        let d = self.dim;
        let grad: Vec<f64> = (0..d)
            .map(|i| self.g[i] + (0..d).map(|j| self.q[i][j] * x[j]).sum::<f64>())
            .collect();
        let mut out = grad;
        for i in 0..d {
            out.push(self.q[i][i]);
        }
        for i in 0..d {
            for j in i + 1..d {
                out.push(self.q[i][j]);
            }
        }
        out
    }

    pub fn laplacian(&self) -> f64 {
        (0..self.dim).map(|i| self.q[i][i]).sum()
    }
}

/// Taylor row `(p, q, r, p^2/2, q^2/2, r^2/2, pq, pr, qr)` restricted to `dim`.
pub fn taylor_row(dim: usize, p: &Point) -> Vec<f64> {
    let x = &p[..dim];
    let mut row: Vec<f64> = x.to_vec();
    row.extend(x.iter().map(|v| 0.5 * v * v));
    for i in 0..dim {
        for j in i + 1..dim {
            row.push(x[i] * x[j]);
        }
    }
    row
}

/// Moment matrix and right-hand side built densely, independent of the crate.
pub fn dense_normal_equations(
    star: &Star,
    weights: &[f64],
    du: &[f64],
) -> (DMatrix<f64>, DVector<f64>) {
    let c = taylor_row(star.dim(), &[0.0; 3]).len();
    let mut h = DMatrix::zeros(c, c);
    let mut f = DVector::zeros(c);
    for ((p, w), d) in star.offsets().iter().zip(weights).zip(du) {
        let a = DVector::from_vec(taylor_row(star.dim(), p));
        h += (w * w) * &a * a.transpose();
        f += (w * w * d) * &a;
    }
    (h, f)
}

/// Weighted least-squares fit by SVD of the weighted design matrix.
pub fn oracle_lstsq(star: &Star, weights: &[f64], du: &[f64]) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = star
        .offsets()
        .iter()
        .zip(weights)
        .map(|(p, w)| {
            taylor_row(star.dim(), p)
                .into_iter()
                .map(|v| w * v)
                .collect()
        })
        .collect();
    let c = rows[0].len();
    let a = DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]);
    let b = DVector::from_iterator(du.len(), du.iter().zip(weights).map(|(d, w)| w * d));
    let x = a.svd(true, true).solve(&b, 0.0).expect("svd solve");
    x.iter().copied().collect()
}

/// Derivative vector from an LU solve of the dense normal equations.
pub fn oracle_derivatives(star: &Star, weights: &[f64], du: &[f64]) -> Vec<f64> {
    let (h, f) = dense_normal_equations(star, weights, du);
    h.lu()
        .solve(&f)
        .expect("nonsingular moment matrix")
        .iter()
        .copied()
        .collect()
}

/// `|a - b| <= rel |b|`, or `<= abs` where `b` is exactly zero.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    if b == 0.0 {
        a.abs() <= abs
    } else {
        (a - b).abs() <= rel * b.abs()
    }
}
