//! Box domains and the scattered node sets discretizing them.
//!
//! Nodes carry up to three coordinates; axes beyond the cloud's dimension are
//! stored as zero so that offsets and distances can be computed uniformly.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// Slack allowed when checking that a boundary node lies on a face.
pub const FACE_TOLERANCE: f64 = 1e-12;

/// Axis-aligned box `[lower_0, upper_0] x ... x [lower_{D-1}, upper_{D-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::invalid(format!(
                "{} lower bounds but {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        if !(1..=3).contains(&lower.len()) {
            return Err(Error::UnsupportedDimension(lower.len(), "1, 2 or 3 axes"));
        }
        for (axis, (lo, hi)) in lower.iter().zip(upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!(
                    "axis {axis}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        })
    }

    /// The unit box `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(&vec![0.0; dim], &vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn diagonal(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (hi - lo).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        (0..self.dim()).all(|a| x[a] >= self.lower[a] - tol && x[a] <= self.upper[a] + tol)
    }

    pub fn on_boundary(&self, x: &Point, tol: f64) -> bool {
        (0..self.dim())
            .any(|a| (x[a] - self.lower[a]).abs() <= tol || (x[a] - self.upper[a]).abs() <= tol)
    }

    fn coord(&self, axis: usize, frac: f64) -> f64 {
        if frac >= 1.0 {
            self.upper[axis]
        } else {
            self.lower[axis] + (self.upper[axis] - self.lower[axis]) * frac
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Interior,
    Boundary,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Interior => "interior",
            Role::Boundary => "boundary",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "interior" => Some(Role::Interior),
            "boundary" => Some(Role::Boundary),
            _ => None,
        }
    }
}

/// An immutable node set with interior/boundary roles.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    domain: Domain,
    coords: Vec<Point>,
    roles: Vec<Role>,
}

impl PointCloud {
    /// Builds a cloud and checks its invariants: nodes inside the closed box,
    /// no coincident nodes, boundary nodes on a face.
    pub fn new(domain: Domain, coords: Vec<Point>, roles: Vec<Role>) -> Result<Self> {
        if coords.len() != roles.len() {
            return Err(Error::invalid(format!(
                "{} coordinates but {} roles",
                coords.len(),
                roles.len()
            )));
        }
        let dim = domain.dim();
        let mut seen = HashSet::with_capacity(coords.len());
        for (i, (x, role)) in coords.iter().zip(&roles).enumerate() {
            if x.iter().any(|v| !v.is_finite()) || x[dim..].iter().any(|&v| v != 0.0) {
                return Err(Error::DegenerateCloud(format!(
                    "node {i} has invalid coordinates {x:?}"
                )));
            }
            if !domain.contains(x, FACE_TOLERANCE) {
                return Err(Error::DegenerateCloud(format!(
                    "node {i} at {:?} lies outside the domain",
                    &x[..dim]
                )));
            }
            if *role == Role::Boundary && !domain.on_boundary(x, FACE_TOLERANCE) {
                return Err(Error::DegenerateCloud(format!(
                    "boundary node {i} at {:?} is not on a face",
                    &x[..dim]
                )));
            }
            // -0.0 and 0.0 coincide
            let key = x.map(|v| (v + 0.0).to_bits());
            if !seen.insert(key) {
                return Err(Error::DegenerateCloud(format!(
                    "node {i} at {:?} coincides with an earlier node",
                    &x[..dim]
                )));
            }
        }
        Ok(Self {
            domain,
            coords,
            roles,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> &Point {
        &self.coords[i]
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn role(&self, i: usize) -> Role {
        self.roles[i]
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        self.indices_with(Role::Interior)
    }

    pub fn boundary_indices(&self) -> Vec<usize> {
        self.indices_with(Role::Boundary)
    }

    pub fn interior_count(&self) -> usize {
        self.roles.iter().filter(|r| **r == Role::Interior).count()
    }

    fn indices_with(&self, role: Role) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.roles[i] == role).collect()
    }

    /// Smallest distance between two distinct nodes (brute force).
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.min(distance(&self.coords[i], &self.coords[j]));
            }
        }
        best
    }

    /// Returns a copy with every node shifted by `shift` (domain shifted too).
    pub fn translated(&self, shift: &Point) -> Result<Self> {
        let dim = self.dim();
        let lower: Vec<f64> = (0..dim).map(|a| self.domain.lower[a] + shift[a]).collect();
        let upper: Vec<f64> = (0..dim).map(|a| self.domain.upper[a] + shift[a]).collect();
        let coords = self
            .coords
            .iter()
            .map(|x| {
                let mut y = *x;
                for a in 0..dim {
                    y[a] += shift[a];
                }
                y
            })
            .collect();
        Self::new(Domain::new(&lower, &upper)?, coords, self.roles.clone())
    }
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Tensor grid with `points_per_axis` nodes per axis, faces included.
///
/// Nodes are ordered with the first axis varying fastest.
pub fn generate_regular_grid(domain: &Domain, points_per_axis: usize) -> Result<PointCloud> {
    if points_per_axis < 3 {
        return Err(Error::invalid(format!(
            "points_per_axis must be at least 3, got {points_per_axis}"
        )));
    }
    let dim = domain.dim();
    let n = points_per_axis;
    let total = n.pow(dim as u32);
    let mut coords = Vec::with_capacity(total);
    let mut roles = Vec::with_capacity(total);
    for flat in 0..total {
        let mut x = [0.0; 3];
        let mut boundary = false;
        let mut rest = flat;
        for (axis, xa) in x.iter_mut().enumerate().take(dim) {
            let idx = rest % n;
            rest /= n;
            *xa = domain.coord(axis, idx as f64 / (n - 1) as f64);
            boundary |= idx == 0 || idx == n - 1;
        }
        coords.push(x);
        roles.push(if boundary {
            Role::Boundary
        } else {
            Role::Interior
        });
    }
    PointCloud::new(domain.clone(), coords, roles)
}

/// Regular grid whose interior nodes are moved independently along each
/// axis by up to `amplitude * h`, with `h` the grid spacing on that axis.
///
/// `amplitude` must lie in `[0, 0.5)` so nodes stay distinct and inside the
/// box. Boundary nodes are not moved.
pub fn generate_jittered_grid(
    domain: &Domain,
    points_per_axis: usize,
    amplitude: f64,
    seed: u64,
) -> Result<PointCloud> {
    if !(0.0..0.5).contains(&amplitude) {
        return Err(Error::invalid(format!(
            "jitter amplitude must lie in [0, 0.5), got {amplitude}"
        )));
    }
    let grid = generate_regular_grid(domain, points_per_axis)?;
    let dim = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = grid
        .coords
        .iter()
        .zip(&grid.roles)
        .map(|(x, role)| {
            let mut y = *x;
            if *role == Role::Interior {
                for (axis, ya) in y.iter_mut().enumerate().take(dim) {
                    let h =
                        (domain.upper[axis] - domain.lower[axis]) / (points_per_axis - 1) as f64;
                    let u: f64 = rng.random_range(-1.0..1.0);
                    *ya += amplitude * h * u;
                }
            }
            y
        })
        .collect();
    PointCloud::new(domain.clone(), coords, grid.roles)
}

/// Placement of boundary nodes for random clouds.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundarySpec {
    /// The face nodes of a regular grid with this many points per axis
    /// (corners and edges included). `Grid(2)` in 1D gives the two endpoints.
    Grid(usize),
    /// Per-face counts ordered `[axis0 low, axis0 high, axis1 low, ...]`.
    /// Nodes are equispaced strictly inside each face, so edges and corners
    /// stay empty. 1D faces take 0 or 1 node; 3D counts must be perfect squares.
    PerFace(Vec<usize>),
}

impl BoundarySpec {
    fn nodes(&self, domain: &Domain) -> Result<Vec<Point>> {
        let dim = domain.dim();
        match self {
            BoundarySpec::Grid(n) => {
                if *n < 2 {
                    return Err(Error::invalid(
                        "boundary grid needs at least 2 points per axis",
                    ));
                }
                let total = n.pow(dim as u32);
                let mut out = Vec::new();
                for flat in 0..total {
                    let mut x = [0.0; 3];
                    let mut boundary = false;
                    let mut rest = flat;
                    for (axis, xa) in x.iter_mut().enumerate().take(dim) {
                        let idx = rest % n;
                        rest /= n;
                        *xa = domain.coord(axis, idx as f64 / (n - 1) as f64);
                        boundary |= idx == 0 || idx == n - 1;
                    }
                    if boundary {
                        out.push(x);
                    }
                }
                Ok(out)
            }
            BoundarySpec::PerFace(counts) => {
                if counts.len() != 2 * dim {
                    return Err(Error::invalid(format!(
                        "expected {} per-face counts, got {}",
                        2 * dim,
                        counts.len()
                    )));
                }
                let mut out = Vec::new();
                for (face, &count) in counts.iter().enumerate() {
                    let axis = face / 2;
                    let fixed = if face % 2 == 0 {
                        domain.lower[axis]
                    } else {
                        domain.upper[axis]
                    };
                    let free: Vec<usize> = (0..dim).filter(|&a| a != axis).collect();
                    match dim {
                        1 => {
                            if count > 1 {
                                return Err(Error::invalid("a 1D face holds at most one node"));
                            }
                            if count == 1 {
                                out.push([fixed, 0.0, 0.0]);
                            }
                        }
                        2 => {
                            for j in 0..count {
                                let mut x = [0.0; 3];
                                x[axis] = fixed;
                                x[free[0]] =
                                    domain.coord(free[0], (j + 1) as f64 / (count + 1) as f64);
                                out.push(x);
                            }
                        }
                        _ => {
                            let side = (count as f64).sqrt().round() as usize;
                            if side * side != count {
                                return Err(Error::invalid(format!(
                                    "3D face count {count} is not a perfect square"
                                )));
                            }
                            for j in 0..side {
                                for l in 0..side {
                                    let mut x = [0.0; 3];
                                    x[axis] = fixed;
                                    x[free[0]] =
                                        domain.coord(free[0], (j + 1) as f64 / (side + 1) as f64);
                                    x[free[1]] =
                                        domain.coord(free[1], (l + 1) as f64 / (side + 1) as f64);
                                    out.push(x);
                                }
                            }
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Uniform random interior nodes plus deterministic boundary nodes.
///
/// Interior candidates closer than `0.1 * diagonal / N^(1/D)` to an accepted
/// node are rejected; more than `10 N` rejections abort. 1D clouds come back
/// sorted by coordinate.
pub fn generate_random_cloud(
    domain: &Domain,
    n_interior: usize,
    boundary: &BoundarySpec,
    seed: u64,
) -> Result<PointCloud> {
    if n_interior == 0 {
        return Err(Error::invalid("n_interior must be at least 1"));
    }
    let dim = domain.dim();
    let boundary_nodes = boundary.nodes(domain)?;
    let total = n_interior + boundary_nodes.len();
    let min_sep = 0.1 * domain.diagonal() / (total as f64).powf(1.0 / dim as f64);
    let max_rejections = 10 * total;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = boundary_nodes;
    let mut roles = vec![Role::Boundary; coords.len()];
    let mut rejections = 0;
    while roles.len() < total {
        let mut x = [0.0; 3];
        for (axis, xa) in x.iter_mut().enumerate().take(dim) {
            // open interval: resample exact endpoints
            let mut frac: f64 = rng.random();
            while frac == 0.0 {
                frac = rng.random();
            }
            *xa = domain.lower[axis] + (domain.upper[axis] - domain.lower[axis]) * frac;
        }
        let clear = !domain.on_boundary(&x, FACE_TOLERANCE)
            && coords.iter().all(|y| distance(&x, y) >= min_sep);
        if clear {
            coords.push(x);
            roles.push(Role::Interior);
        } else {
            rejections += 1;
            if rejections > max_rejections {
                return Err(Error::DegenerateCloud(format!(
                    "could not place {n_interior} interior nodes with separation {min_sep:.3e} \
                     after {max_rejections} rejections"
                )));
            }
        }
    }
    if dim == 1 {
        let mut order: Vec<usize> = (0..coords.len()).collect();
        order.sort_by(|&a, &b| coords[a][0].total_cmp(&coords[b][0]));
        let sorted_coords = order.iter().map(|&i| coords[i]).collect();
        let sorted_roles = order.iter().map(|&i| roles[i]).collect();
        return PointCloud::new(domain.clone(), sorted_coords, sorted_roles);
    }
    PointCloud::new(domain.clone(), coords, roles)
}

/// Inserts the midpoint of every consecutive pair of a 1D cloud.
///
/// Original nodes keep their roles; midpoints are interior. The result is
/// sorted by coordinate and has `2N - 1` nodes.
pub fn refine_midpoints(cloud: &PointCloud) -> Result<PointCloud> {
    if cloud.dim() != 1 {
        return Err(Error::UnsupportedDimension(cloud.dim(), "a 1D cloud"));
    }
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.sort_by(|&a, &b| cloud.coords[a][0].total_cmp(&cloud.coords[b][0]));
    let mut coords = Vec::with_capacity(2 * cloud.len());
    let mut roles = Vec::with_capacity(2 * cloud.len());
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 {
            let prev = cloud.coords[order[pos - 1]][0];
            coords.push([0.5 * (prev + cloud.coords[i][0]), 0.0, 0.0]);
            roles.push(Role::Interior);
        }
        coords.push(cloud.coords[i]);
        roles.push(cloud.roles[i]);
    }
    PointCloud::new(cloud.domain.clone(), coords, roles)
}

/// On-disk point cloud encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CloudFormat {
    /// `D` coordinate columns then `interior`/`boundary`; optional header.
    #[default]
    Csv,
}

/// Reads a cloud; the dimension comes from the column count and the domain
/// is the bounding box of the nodes.
pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let CloudFormat::Csv = format;
    let (coords, roles, dim) = read_csv_nodes(path)?;
    let mut lower = vec![f64::INFINITY; dim];
    let mut upper = vec![f64::NEG_INFINITY; dim];
    for x in &coords {
        for a in 0..dim {
            lower[a] = lower[a].min(x[a]);
            upper[a] = upper[a].max(x[a]);
        }
    }
    let domain = Domain::new(&lower, &upper)?;
    PointCloud::new(domain, coords, roles)
}

/// Reads a cloud and validates it against a known domain.
pub fn load_cloud_in(path: &Path, format: CloudFormat, domain: &Domain) -> Result<PointCloud> {
    let CloudFormat::Csv = format;
    let (coords, roles, dim) = read_csv_nodes(path)?;
    if dim != domain.dim() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!(
                "file has {dim} coordinate columns, domain has {}",
                domain.dim()
            ),
        });
    }
    PointCloud::new(domain.clone(), coords, roles)
}

fn read_csv_nodes(path: &Path) -> Result<(Vec<Point>, Vec<Role>, usize)> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(0, e.to_string()))?;

    let mut dim = None;
    let mut coords = Vec::new();
    let mut roles = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let is_header = line == 1
            && record.iter().all(|f| f.parse::<f64>().is_err())
            && record.iter().next_back().and_then(Role::parse).is_none();
        if is_header {
            continue;
        }
        let cols = record.len();
        let d = *dim.get_or_insert(cols.saturating_sub(1));
        if !(1..=3).contains(&d) {
            return Err(parse_err(
                line,
                format!("expected 2 to 4 columns, found {cols}"),
            ));
        }
        if cols != d + 1 {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {cols}", d + 1),
            ));
        }
        let mut x = [0.0; 3];
        for (a, field) in record.iter().take(d).enumerate() {
            x[a] = field.parse().map_err(|_| {
                parse_err(line, format!("column {}: '{field}' is not a number", a + 1))
            })?;
        }
        let role_field = &record[d];
        let role = Role::parse(role_field).ok_or_else(|| {
            parse_err(
                line,
                format!(
                    "column {}: '{role_field}' is not 'interior' or 'boundary'",
                    d + 1
                ),
            )
        })?;
        coords.push(x);
        roles.push(role);
    }
    let dim = dim.ok_or_else(|| parse_err(0, "no nodes".into()))?;
    Ok((coords, roles, dim))
}

/// Writes a cloud with a header row and 17 significant digits per coordinate.
pub fn save_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let CloudFormat::Csv = format;
    let dim = cloud.dim();
    let mut out = String::new();
    out.push_str(&["x", "y", "z"][..dim].join(","));
    out.push_str(",role\n");
    for (x, role) in cloud.coords.iter().zip(&cloud.roles) {
        for xa in &x[..dim] {
            let _ = write!(out, "{},", fmt_f64(*xa));
        }
        out.push_str(role.as_str());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
