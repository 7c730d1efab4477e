//! Direction-of-arrival geometry.
//!
//! Axis convention: x points to the front, y to the left and z up, matching
//! the X/Y/Z channels of first-order ambisonics. Azimuth is measured
//! counter-clockwise from the front in the horizontal plane, elevation
//! upwards from it. All public angles are in degrees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this horizontal radius a unit vector is treated as a pole and its
/// azimuth is reported as 0.
const POLE_EPS: f64 = 1e-12;

/// A direction of arrival in degrees.
///
/// Azimuth lies in (-180, 180], elevation in [-90, 90].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDirection", into = "RawDirection")]
pub struct Direction {
    azimuth: f64,
    elevation: f64,
}

#[derive(Serialize, Deserialize)]
struct RawDirection {
    azimuth: f64,
    elevation: f64,
}

impl TryFrom<RawDirection> for Direction {
    type Error = Error;
    fn try_from(raw: RawDirection) -> Result<Self> {
        Direction::new(raw.azimuth, raw.elevation)
    }
}

impl From<Direction> for RawDirection {
    fn from(d: Direction) -> Self {
        RawDirection {
            azimuth: d.azimuth,
            elevation: d.elevation,
        }
    }
}

/// Wraps an angle in degrees into (-180, 180].
pub fn wrap_azimuth(deg: f64) -> f64 {
    let a = deg.rem_euclid(360.0);
    if a > 180.0 {
        a - 360.0
    } else {
        a
    }
}

impl Direction {
    /// Builds a direction, wrapping the azimuth. Elevations outside
    /// [-90, 90] are rejected rather than clamped.
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        if !azimuth.is_finite() || !elevation.is_finite() {
            return Err(Error::NonFiniteAngle);
        }
        if !(-90.0..=90.0).contains(&elevation) {
            return Err(Error::ElevationOutOfRange(elevation));
        }
        Ok(Direction {
            azimuth: wrap_azimuth(azimuth),
            elevation,
        })
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    pub fn to_unit(&self) -> UnitVec3 {
        dir_to_unit(*self)
    }
}

/// A Cartesian unit vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec3 {
    x: f64,
    y: f64,
    z: f64,
}

impl UnitVec3 {
    /// Normalizes `v`. Fails on a zero or non-finite vector.
    pub fn from_vec(v: [f64; 3]) -> Result<Self> {
        let n = norm3(v);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::UndefinedDirection);
        }
        Ok(UnitVec3 {
            x: v[0] / n,
            y: v[1] / n,
            z: v[2] / n,
        })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &UnitVec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Great-circle angle to `other` in degrees.
    pub fn angle_to(&self, other: &UnitVec3) -> f64 {
        vector_angle(self.to_array(), other.to_array())
    }

    pub fn to_direction(&self) -> Direction {
        unit_to_dir(*self).expect("unit vector has a direction")
    }
}

pub fn dir_to_unit(d: Direction) -> UnitVec3 {
    let az = d.azimuth.to_radians();
    let el = d.elevation.to_radians();
    UnitVec3 {
        x: az.cos() * el.cos(),
        y: az.sin() * el.cos(),
        z: el.sin(),
    }
}

/// Inverse of [`dir_to_unit`]. The input is renormalized first; azimuth is 0
/// at the poles.
pub fn unit_to_dir(v: UnitVec3) -> Result<Direction> {
    vec_to_dir(v.to_array())
}

/// Direction of an arbitrary non-zero Cartesian vector.
pub fn vec_to_dir(v: [f64; 3]) -> Result<Direction> {
    let u = UnitVec3::from_vec(v)?;
    let horiz = u.x.hypot(u.y);
    let elevation = u.z.atan2(horiz).to_degrees().clamp(-90.0, 90.0);
    let azimuth = if horiz < POLE_EPS {
        0.0
    } else {
        u.y.atan2(u.x).to_degrees()
    };
    Direction::new(azimuth, elevation)
}

/// Great-circle angle between two directions in degrees, in [0, 180].
pub fn angular_distance(a: Direction, b: Direction) -> f64 {
    dir_to_unit(a).angle_to(&dir_to_unit(b))
}

/// Angle between two non-zero vectors in degrees.
///
/// Evaluated as atan2(|u x v|, u . v), which equals the arccos of the clamped
/// normalized dot product but keeps full precision near 0 and 180 degrees.
pub fn vector_angle(u: [f64; 3], v: [f64; 3]) -> f64 {
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    norm3(cross).atan2(dot).to_degrees()
}

pub fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}
