//! Distance-based weight functions for the local least-squares fit.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::stars::Star;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    /// `1 / d^n`
    Potential,
    /// `exp(-n d^2)`
    Exponential,
    /// Piecewise cubic in `d / d_max`, zero at the star radius.
    CubicSpline,
}

impl WeightKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightKind::Potential => "potential",
            WeightKind::Exponential => "exponential",
            WeightKind::CubicSpline => "cubic_spline",
        }
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "potential" => Ok(WeightKind::Potential),
            "exponential" => Ok(WeightKind::Exponential),
            "cubic_spline" => Ok(WeightKind::CubicSpline),
            other => Err(Error::invalid(format!("unknown weight kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    pub kind: WeightKind,
    /// Exponent (potential) or steepness (exponential); ignored by the spline.
    pub n: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self {
            kind: WeightKind::Potential,
            n: 3.0,
        }
    }
}

impl WeightSpec {
    pub fn new(kind: WeightKind, n: f64) -> Result<Self> {
        let spec = Self { kind, n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn potential(n: f64) -> Result<Self> {
        Self::new(WeightKind::Potential, n)
    }

    pub fn exponential(n: f64) -> Result<Self> {
        Self::new(WeightKind::Exponential, n)
    }

    pub fn cubic_spline() -> Self {
        Self {
            kind: WeightKind::CubicSpline,
            n: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            WeightKind::CubicSpline => Ok(()),
            _ if self.n > 0.0 && self.n.is_finite() => Ok(()),
            kind => Err(Error::invalid(format!(
                "{kind} weight needs a positive parameter, got {}",
                self.n
            ))),
        }
    }
}

/// Weight of a neighbor at distance `dist` in a star of radius `radius`.
pub fn weight(spec: &WeightSpec, dist: f64, radius: f64) -> Result<f64> {
    spec.validate()?;
    if !(dist > 0.0) {
        return Err(Error::invalid(format!(
            "neighbor distance must be positive, got {dist}"
        )));
    }
    Ok(match spec.kind {
        WeightKind::Potential => dist.powf(-spec.n),
        WeightKind::Exponential => (-spec.n * dist * dist).exp(),
        WeightKind::CubicSpline => {
            if !(radius >= dist) {
                return Err(Error::invalid(format!(
                    "cubic spline needs distance {dist} <= star radius {radius}"
                )));
            }
            cubic_spline(dist / radius)
        }
    })
}

fn cubic_spline(s: f64) -> f64 {
    if s <= 0.5 {
        2.0 / 3.0 - 4.0 * s * s + 4.0 * s * s * s
    } else if s <= 1.0 {
        // 4/3 - 4s + 4s^2 - 4/3 s^3, factored to avoid cancellation near s = 1
        4.0 / 3.0 * (1.0 - s).powi(3)
    } else {
        0.0
    }
}

/// Weights for every neighbor of `star`, in neighbor order.
pub fn star_weights(spec: &WeightSpec, star: &Star) -> Result<Vec<f64>> {
    star.distances()
        .iter()
        .map(|&d| weight(spec, d, star.radius()))
        .collect()
}
