//! Nearest-neighbor stars around interior nodes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud, Role};

/// Conventional star size per dimension: enough neighbors for an
/// overdetermined second-order fit (2, 5 and 9 unknowns).
pub fn default_star_size(dim: usize) -> usize {
    match dim {
        1 => 4,
        2 => 8,
        _ => 26,
    }
}

/// A central node and its `M` nearest neighbors, sorted by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Star {
    dim: usize,
    center: usize,
    neighbors: Vec<usize>,
    offsets: Vec<Point>,
    distances: Vec<f64>,
}

impl Star {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    /// `x_i - x_c` for every neighbor; unused axes are zero.
    pub fn offsets(&self) -> &[Point] {
        &self.offsets
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Distance to the farthest neighbor.
    pub fn radius(&self) -> f64 {
        self.distances.last().copied().unwrap_or(0.0)
    }

    /// Builds a star from explicit offsets, without a backing cloud.
    ///
    /// Neighbor indices are `1..=M` and the center is `0`. Offsets are
    /// reordered by distance.
    pub fn from_offsets(dim: usize, offsets: &[Point]) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim, "1, 2 or 3"));
        }
        let mut items: Vec<(f64, usize, Point)> = offsets
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut p = *p;
                p[dim..].iter_mut().for_each(|v| *v = 0.0);
                (norm(&p), i + 1, p)
            })
            .collect();
        if items.iter().any(|(d, ..)| !(*d > 0.0)) {
            return Err(Error::invalid("star offsets must be nonzero and finite"));
        }
        items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(Self {
            dim,
            center: 0,
            neighbors: items.iter().map(|t| t.1).collect(),
            offsets: items.iter().map(|t| t.2).collect(),
            distances: items.iter().map(|t| t.0).collect(),
        })
    }
}

fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// Selects the `m` nodes closest to interior node `c`; equal distances go to
/// the lower node index. Boundary nodes are eligible neighbors.
pub fn build_star(cloud: &PointCloud, c: usize, m: usize) -> Result<Star> {
    let n = cloud.len();
    if m == 0 || m >= n {
        return Err(Error::invalid(format!(
            "star size {m} needs 1 <= M < N = {n}"
        )));
    }
    if c >= n {
        return Err(Error::invalid(format!("node {c} out of range (N = {n})")));
    }
    if cloud.role(c) != Role::Interior {
        return Err(Error::invalid(format!("node {c} is a boundary node")));
    }
    let xc = cloud.coord(c);
    let mut candidates: Vec<(f64, usize, Point)> = cloud
        .coords()
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != c)
        .map(|(j, xj)| {
            let p = [xj[0] - xc[0], xj[1] - xc[1], xj[2] - xc[2]];
            (norm(&p), j, p)
        })
        .collect();
    let order =
        |a: &(f64, usize, Point), b: &(f64, usize, Point)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if m < candidates.len() {
        candidates.select_nth_unstable_by(m - 1, order);
        candidates.truncate(m);
    }
    candidates.sort_by(order);
    Ok(Star {
        dim: cloud.dim(),
        center: c,
        neighbors: candidates.iter().map(|t| t.1).collect(),
        offsets: candidates.iter().map(|t| t.2).collect(),
        distances: candidates.iter().map(|t| t.0).collect(),
    })
}

/// One star per interior node, in node order.
#[derive(Debug, Clone, PartialEq)]
pub struct StarSet {
    stars: Vec<Star>,
    delta: f64,
}

impl StarSet {
    pub fn stars(&self) -> &[Star] {
        &self.stars
    }

    /// Largest star radius over the set.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.stars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stars.is_empty()
    }

    pub fn star_size(&self) -> usize {
        self.stars.first().map_or(0, Star::len)
    }
}

pub fn build_all_stars(cloud: &PointCloud, m: usize) -> Result<StarSet> {
    let stars = cloud
        .interior_indices()
        .into_par_iter()
        .map(|c| {
            build_star(cloud, c, m).map_err(|e| Error::Star {
                node: c,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let delta = stars.iter().map(Star::radius).fold(0.0, f64::max);
    Ok(StarSet { stars, delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_random_cloud, generate_regular_grid, BoundarySpec, Domain};

    fn line(xs: &[f64], roles: &[Role]) -> PointCloud {
        let coords = xs.iter().map(|&x| [x, 0.0, 0.0]).collect();
        PointCloud::new(Domain::unit(1).unwrap(), coords, roles.to_vec()).unwrap()
    }

    #[test]
    fn three_node_line() {
        let cloud = line(
            &[0.0, 0.5, 1.0],
            &[Role::Boundary, Role::Interior, Role::Boundary],
        );
        let star = build_star(&cloud, 1, 2).unwrap();
        assert_eq!(star.neighbors(), &[0, 2]);
        let p: Vec<f64> = star.offsets().iter().map(|o| o[0]).collect();
        assert_eq!(p, vec![-0.5, 0.5]);
        let set = build_all_stars(&cloud, 2).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.delta(), 0.5);
    }

    #[test]
    fn grid_center_takes_axis_neighbors() {
        let cloud = generate_regular_grid(&Domain::unit(2).unwrap(), 3).unwrap();
        let star = build_star(&cloud, 4, 4).unwrap();
        let mut got = star.neighbors().to_vec();
        got.sort();
        assert_eq!(got, vec![1, 3, 5, 7]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        // nodes 3 and 7 are both 0.25 from the center at 0.5
        let xs = [0.0, 0.1, 0.2, 0.25, 0.5, 0.95, 1.0, 0.75];
        let mut roles = vec![Role::Interior; xs.len()];
        roles[0] = Role::Boundary;
        roles[6] = Role::Boundary;
        let cloud = line(&xs, &roles);
        let star = build_star(&cloud, 4, 1).unwrap();
        assert_eq!(star.neighbors(), &[3]);
        let star = build_star(&cloud, 4, 2).unwrap();
        assert_eq!(star.neighbors(), &[3, 7]);
    }

    #[test]
    fn grid_3d_radius() {
        let cloud = generate_regular_grid(&Domain::unit(3).unwrap(), 4).unwrap();
        let set = build_all_stars(&cloud, 6).unwrap();
        assert_eq!(set.len(), 8);
        for star in set.stars() {
            assert!((star.radius() - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_star_size_and_center() {
        let cloud = line(
            &[0.0, 0.5, 1.0],
            &[Role::Boundary, Role::Interior, Role::Boundary],
        );
        assert!(matches!(
            build_star(&cloud, 1, 3),
            Err(Error::InvalidArgument(_))
        ));
        assert!(build_star(&cloud, 0, 1).is_err());
        match build_all_stars(&cloud, 5).unwrap_err() {
            Error::Star { node, .. } => assert_eq!(node, 1),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn random_1d_delta_matches_brute_force() {
        let domain = Domain::unit(1).unwrap();
        let cloud = generate_random_cloud(&domain, 8, &BoundarySpec::Grid(2), 21).unwrap();
        let m = 4;
        let set = build_all_stars(&cloud, m).unwrap();
        assert_eq!(set.len(), 8);
        // oracle: full distance table, sort each interior row
        let mut expected = 0.0f64;
        for c in cloud.interior_indices() {
            let mut d: Vec<f64> = (0..cloud.len())
                .filter(|&j| j != c)
                .map(|j| (cloud.coord(j)[0] - cloud.coord(c)[0]).abs())
                .collect();
            d.sort_by(f64::total_cmp);
            expected = expected.max(d[m - 1]);
        }
        assert_eq!(set.delta(), expected);
    }

    #[test]
    fn from_offsets_sorts() {
        let star = Star::from_offsets(1, &[[2.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(star.neighbors(), &[2, 1]);
        assert_eq!(star.distances(), &[1.0, 2.0]);
        assert!(Star::from_offsets(2, &[[0.0, 0.0, 0.0]]).is_err());
    }
}
