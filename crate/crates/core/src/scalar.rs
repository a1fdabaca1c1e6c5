//! Coordinate scalars and planar geometry.
//!
//! Placement coordinates, radio ranges and bearings are generic over any
//! floating point type implementing [`Scalar`]; `f64` is what the simulator
//! uses, `f32` is supported for compact topologies.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, NumCast};

/// Floating point coordinate type: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + NumCast + FromStr + Display + Debug + Default + 'static
{
    /// Lossy conversion used for rendering and for the seeded generators.
    fn from_f64_lossy(v: f64) -> Self {
        <Self as NumCast>::from(v).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// A point in the deployment plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point<S> {
    pub x: S,
    pub y: S,
}

impl<S: Scalar> Point<S> {
    pub fn new(x: S, y: S) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> S {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Bearing from `self` towards `other`, in radians in `(-pi, pi]`.
    pub fn bearing_to(&self, other: &Self) -> S {
        (other.y - self.y).atan2(other.x - self.x)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Absolute angular difference between two bearings, folded into `[0, pi]`.
pub fn angle_between<S: Scalar>(a: S, b: S) -> S {
    let two_pi = S::PI() + S::PI();
    let mut d = (a - b) % two_pi;
    if d < S::zero() {
        d = d + two_pi;
    }
    if d > S::PI() {
        two_pi - d
    } else {
        d
    }
}

/// Circular mean of bearings. `None` when the set is empty or the bearings
/// cancel out exactly.
pub fn mean_bearing<S: Scalar>(bearings: impl IntoIterator<Item = S>) -> Option<S> {
    let (mut sx, mut sy) = (S::zero(), S::zero());
    let mut n = 0usize;
    for b in bearings {
        sx = sx + b.cos();
        sy = sy + b.sin();
        n += 1;
    }
    let eps = S::from_f64_lossy(1e-9);
    if n == 0 || (sx.abs() < eps && sy.abs() < eps) {
        return None;
    }
    Some(sy.atan2(sx))
}
