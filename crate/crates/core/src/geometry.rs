//! Directions of magnets and magnetic moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{lit, Real};
use crate::rng::EventRng;

/// Unit vector in three dimensions, renormalized on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[T; 3]", into = "[T; 3]")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct UnitVector3<T> {
    x: T,
    y: T,
    z: T,
}

impl<T: Real> UnitVector3<T> {
    pub fn new(x: T, y: T, z: T) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::InvalidInput(format!(
                "direction ({x}, {y}, {z}) cannot be normalized"
            )));
        }
        Ok(Self {
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    pub fn x_axis() -> Self {
        Self {
            x: T::one(),
            y: T::zero(),
            z: T::zero(),
        }
    }

    pub fn y_axis() -> Self {
        Self {
            x: T::zero(),
            y: T::one(),
            z: T::zero(),
        }
    }

    pub fn z_axis() -> Self {
        Self {
            x: T::zero(),
            y: T::zero(),
            z: T::one(),
        }
    }

    /// Direction at polar angle `theta` from the z axis in the x-z plane.
    pub fn in_xz_plane(theta: T) -> Self {
        Self {
            x: theta.sin(),
            y: T::zero(),
            z: theta.cos(),
        }
    }

    /// Spherical direction (polar angle `theta`, azimuth `phi`).
    pub fn spherical(theta: T, phi: T) -> Self {
        Self {
            x: theta.sin() * phi.cos(),
            y: theta.sin() * phi.sin(),
            z: theta.cos(),
        }
    }

    /// Direction uniformly distributed on the sphere.
    pub fn random(rng: &mut EventRng) -> Self {
        let z = lit::<T>(2.0 * rng.uniform() - 1.0);
        let phi = lit::<T>(2.0 * std::f64::consts::PI * rng.uniform());
        let r = (T::one() - z * z).max(T::zero()).sqrt();
        Self {
            x: r * phi.cos(),
            y: r * phi.sin(),
            z,
        }
    }

    pub fn x(&self) -> T {
        self.x
    }

    pub fn y(&self) -> T {
        self.y
    }

    pub fn z(&self) -> T {
        self.z
    }

    pub fn components(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn negate(&self) -> Self {
        Self {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Angle in `[0, π]` between two directions.
    pub fn angle_to(&self, other: &Self) -> T {
        self.dot(other).max(-T::one()).min(T::one()).acos()
    }
}

impl<T: Real> TryFrom<[T; 3]> for UnitVector3<T> {
    type Error = Error;
    /// Components already of unit length (to 1e-9) are kept bit-for-bit so
    /// stored directions round-trip exactly; others are normalized.
    fn try_from(c: [T; 3]) -> Result<Self> {
        let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        if (norm - T::one()).abs() <= lit(1e-9) {
            return Ok(Self {
                x: c[0],
                y: c[1],
                z: c[2],
            });
        }
        Self::new(c[0], c[1], c[2])
    }
}

impl<T: Real> From<UnitVector3<T>> for [T; 3] {
    fn from(v: UnitVector3<T>) -> [T; 3] {
        v.components()
    }
}

/// Proper rotation of three-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3<T> {
    m: [[T; 3]; 3],
}

impl<T: Real> Rotation3<T> {
    /// Rotation by `angle` about `axis` (Rodrigues).
    pub fn about_axis(axis: &UnitVector3<T>, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let t = T::one() - c;
        let [x, y, z] = axis.components();
        Self {
            m: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
        }
    }

    pub fn random(rng: &mut EventRng) -> Self {
        let axis = UnitVector3::random(rng);
        let angle = lit::<T>(2.0 * std::f64::consts::PI * rng.uniform());
        Self::about_axis(&axis, angle)
    }

    pub fn apply(&self, v: &UnitVector3<T>) -> UnitVector3<T> {
        let c = v.components();
        let r = |i: usize| self.m[i][0] * c[0] + self.m[i][1] * c[1] + self.m[i][2] * c[2];
        // Rotations preserve length; renormalize only to absorb rounding.
        UnitVector3::new(r(0), r(1), r(2)).expect("rotation of a unit vector")
    }
}
