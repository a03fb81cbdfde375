//! Ground metric spaces.
//!
//! Every point is stored as a flat run of `f64` coordinates whose length is
//! [`Space::dim`]. Kernels work on `&[f64]` slices of canonical coordinates;
//! [`SpacePoint`] is the owned, validated form used at API boundaries.
//!
//! | space         | coords | canonical form                               | metric                         |
//! |---------------|--------|----------------------------------------------|--------------------------------|
//! | `euclidean`   | n      | as given                                     | l2                             |
//! | `circle`      | 2      | unit norm                                    | chordal l2 in the plane        |
//! | `projective2` | 3      | unit norm, first nonzero coordinate positive | angle between lines, [0, pi/2] |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};

/// Coordinates with magnitude at or below this are treated as zero when
/// choosing the sign of a projective representative.
pub const PROJECTIVE_ZERO: f64 = 1e-12;

/// String tag of a space as it appears in scene files and dump sidecars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceTag {
    Euclidean,
    Circle,
    Projective2,
    Hyperspace,
}

impl SpaceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SpaceTag::Euclidean => "euclidean",
            SpaceTag::Circle => "circle",
            SpaceTag::Projective2 => "projective2",
            SpaceTag::Hyperspace => "hyperspace",
        }
    }
}

impl fmt::Display for SpaceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpaceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(SpaceTag::Euclidean),
            "circle" => Ok(SpaceTag::Circle),
            "projective2" => Ok(SpaceTag::Projective2),
            "hyperspace" => Ok(SpaceTag::Hyperspace),
            other => usage(format!("unknown space tag {other:?}")),
        }
    }
}

/// A ground space. Hyperspace (sets of points) lives in `superfractal`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "space", rename_all = "lowercase")]
pub enum Space {
    Euclidean { dim: usize },
    Circle,
    Projective2,
}

impl Space {
    pub fn euclidean(dim: usize) -> Self {
        Space::Euclidean { dim }
    }

    /// Number of stored coordinates per point.
    pub fn dim(&self) -> usize {
        match *self {
            Space::Euclidean { dim } => dim,
            Space::Circle => 2,
            Space::Projective2 => 3,
        }
    }

    pub fn tag(&self) -> SpaceTag {
        match self {
            Space::Euclidean { .. } => SpaceTag::Euclidean,
            Space::Circle => SpaceTag::Circle,
            Space::Projective2 => SpaceTag::Projective2,
        }
    }

    /// True when `u` and `-u` name the same point.
    pub fn identifies_antipodes(&self) -> bool {
        matches!(self, Space::Projective2)
    }

    /// Puts `coords` into canonical form in place.
    pub fn canonicalize_in_place(&self, coords: &mut [f64]) -> Result<()> {
        if coords.len() != self.dim() {
            return usage(format!("{} point needs {} coordinates, got {}", self.tag(), self.dim(), coords.len()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint(format!("non-finite coordinates {coords:?}")));
        }
        match self {
            Space::Euclidean { .. } => {}
            Space::Circle => {
                let norm = coords[0].hypot(coords[1]);
                if norm == 0.0 {
                    return Err(Error::InvalidPoint("zero vector has no circle projection".into()));
                }
                if !is_unit(norm) {
                    coords[0] /= norm;
                    coords[1] /= norm;
                }
            }
            Space::Projective2 => {
                let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::InvalidPoint("zero homogeneous vector".into()));
                }
                let lead = coords.iter().copied().find(|c| c.abs() > PROJECTIVE_ZERO);
                let magnitude = if is_unit(norm) { 1.0 } else { 1.0 / norm };
                let scale = match lead {
                    Some(c) if c < 0.0 => -magnitude,
                    _ => magnitude,
                };
                for c in coords.iter_mut() {
                    *c *= scale;
                }
            }
        }
        Ok(())
    }

    /// Distance between two canonical coordinate slices of this space.
    #[inline]
    pub fn distance_raw(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Space::Euclidean { .. } | Space::Circle => euclid(a, b),
            Space::Projective2 => line_angle(a, b),
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Space::Euclidean { dim } => write!(f, "euclidean({dim})"),
            other => f.write_str(other.tag().as_str()),
        }
    }
}

/// Norms this close to 1 are left alone, which makes canonicalization
/// exactly idempotent while keeping drift at a few ulps.
fn is_unit(norm: f64) -> bool {
    (norm - 1.0).abs() <= 4.0 * f64::EPSILON
}

#[inline]
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Angle between the lines through unit vectors `a` and `b`.
///
/// Same value as `acos(|<a,b>|)`, computed from the chords `|a-b|` and
/// `|a+b|` so that nearby lines keep full relative precision.
#[inline]
fn line_angle(a: &[f64], b: &[f64]) -> f64 {
    let mut minus = 0.0;
    let mut plus = 0.0;
    for (x, y) in a.iter().zip(b) {
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    let (minus, plus) = (minus.sqrt(), plus.sqrt());
    let angle = 2.0 * minus.min(plus).atan2(minus.max(plus));
    angle.clamp(0.0, std::f64::consts::FRAC_PI_2)
}

/// An owned point in canonical form.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacePoint {
    space: Space,
    coords: Vec<f64>,
}

impl SpacePoint {
    /// Builds a point and canonicalizes it.
    pub fn new(space: Space, coords: impl Into<Vec<f64>>) -> Result<Self> {
        let mut coords = coords.into();
        space.canonicalize_in_place(&mut coords)?;
        Ok(SpacePoint { space, coords })
    }

    /// Wraps coordinates that are already canonical.
    pub(crate) fn from_canonical(space: Space, coords: &[f64]) -> Self {
        SpacePoint { space, coords: coords.to_vec() }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

/// Metric distance between two points of the same space.
pub fn distance(a: &SpacePoint, b: &SpacePoint) -> Result<f64> {
    if a.space != b.space {
        return usage(format!("distance between {} and {} points", a.space, b.space));
    }
    Ok(a.space.distance_raw(&a.coords, &b.coords))
}

/// Canonical form of `p`. Idempotent.
pub fn canonicalize(p: &SpacePoint) -> Result<SpacePoint> {
    SpacePoint::new(p.space, p.coords.clone())
}
