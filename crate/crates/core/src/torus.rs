//! Torus geometry.
//!
//! Angles are stored as fixed-point fractions of a full turn (`u64`, one unit
//! is 2π/2^64 rad). Addition, subtraction and integer-matrix actions are then
//! exact modulo 2π, which matters for the fiber automorphism: its expansion
//! rate μ^{2N} would otherwise turn a single rounding of a radian value into
//! an error of order 1e-7 after one iterate.

use std::f64::consts::{PI, TAU};
use std::fmt;

use rand::Rng;

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;
const RAD_PER_UNIT: f64 = TAU / TWO_POW_64;

/// An angle on the circle `R / 2πZ`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Angle(pub u64);

impl Angle {
    pub const ZERO: Angle = Angle(0);

    /// Reduces an arbitrary real (radians) onto the circle.
    pub fn from_radians(r: f64) -> Angle {
        debug_assert!(r.is_finite(), "non-finite angle {r}");
        let turns = (r / TAU).rem_euclid(1.0);
        // `turns * 2^64` may round up to exactly 2^64, which wraps to 0.
        Angle((turns * TWO_POW_64) as u128 as u64)
    }

    /// Representative in `[0, 2π)`.
    pub fn radians(self) -> f64 {
        let r = self.0 as f64 * RAD_PER_UNIT;
        if r >= TAU {
            0.0
        } else {
            r
        }
    }

    /// Exact fraction of a turn in `[0, 1)`, rounded to f64.
    pub fn turns(self) -> f64 {
        self.0 as f64 / TWO_POW_64
    }

    /// Signed offset of `delta` radians; `delta` may be large.
    pub fn offset(delta: f64) -> Angle {
        // Sign-symmetric so that `offset(-d)` cancels `offset(d)` exactly.
        if delta < 0.0 {
            Angle::ZERO.sub(Angle::from_radians(-delta))
        } else {
            Angle::from_radians(delta)
        }
    }

    /// Signed shortest difference `self - other` in `[-π, π)`.
    pub fn diff(self, other: Angle) -> f64 {
        (self.0.wrapping_sub(other.0) as i64) as f64 * RAD_PER_UNIT
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: Angle) -> Angle {
        Angle(self.0.wrapping_add(other.0))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, other: Angle) -> Angle {
        Angle(self.0.wrapping_sub(other.0))
    }

    /// Multiplication by an integer, exact mod 2π.
    pub fn scale(self, k: i64) -> Angle {
        Angle(self.0.wrapping_mul(k as u64))
    }

    pub fn sin(self) -> f64 {
        self.radians().sin()
    }

    pub fn cos(self) -> f64 {
        self.radians().cos()
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Angle {
        Angle(rng.gen())
    }
}

impl fmt::Debug for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.17}", self.radians())
    }
}

/// Applies an integer 2×2 matrix to a point of T², exactly.
pub fn apply_int(m: &[[i64; 2]; 2], p: [Angle; 2]) -> [Angle; 2] {
    [
        p[0].scale(m[0][0]).add(p[1].scale(m[0][1])),
        p[0].scale(m[1][0]).add(p[1].scale(m[1][1])),
    ]
}

/// A point on T² or T⁴.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub enum TorusPoint {
    T2([Angle; 2]),
    T4([Angle; 4]),
}

impl TorusPoint {
    pub fn from_radians(coords: &[f64]) -> Option<TorusPoint> {
        match coords.len() {
            2 => Some(TorusPoint::T2([
                Angle::from_radians(coords[0]),
                Angle::from_radians(coords[1]),
            ])),
            4 => Some(TorusPoint::T4([
                Angle::from_radians(coords[0]),
                Angle::from_radians(coords[1]),
                Angle::from_radians(coords[2]),
                Angle::from_radians(coords[3]),
            ])),
            _ => None,
        }
    }

    pub fn t2(x: f64, y: f64) -> TorusPoint {
        TorusPoint::T2([Angle::from_radians(x), Angle::from_radians(y)])
    }

    pub fn t4(x: f64, y: f64, z: f64, w: f64) -> TorusPoint {
        TorusPoint::T4([
            Angle::from_radians(x),
            Angle::from_radians(y),
            Angle::from_radians(z),
            Angle::from_radians(w),
        ])
    }

    pub fn dim(&self) -> usize {
        match self {
            TorusPoint::T2(_) => 2,
            TorusPoint::T4(_) => 4,
        }
    }

    pub fn angles(&self) -> &[Angle] {
        match self {
            TorusPoint::T2(a) => a,
            TorusPoint::T4(a) => a,
        }
    }

    pub fn radians(&self) -> Vec<f64> {
        self.angles().iter().map(|a| a.radians()).collect()
    }

    /// The coordinate `x`, the first angle.
    pub fn x(&self) -> Angle {
        self.angles()[0]
    }

    pub fn random_t2<R: Rng + ?Sized>(rng: &mut R) -> TorusPoint {
        TorusPoint::T2([Angle::random(rng), Angle::random(rng)])
    }

    pub fn random_t4<R: Rng + ?Sized>(rng: &mut R) -> TorusPoint {
        TorusPoint::T4([
            Angle::random(rng),
            Angle::random(rng),
            Angle::random(rng),
            Angle::random(rng),
        ])
    }

    /// Shortest signed displacement `self - other`, coordinatewise.
    pub fn displacement(&self, other: &TorusPoint) -> Vec<f64> {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.angles()
            .iter()
            .zip(other.angles())
            .map(|(a, b)| a.diff(*b))
            .collect()
    }

    /// Euclidean distance on the flat torus (minimum over lattice translates).
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        self.displacement(other)
            .iter()
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    }

    /// Moves the point by a tangent vector (radians).
    pub fn translate(&self, v: &[f64]) -> TorusPoint {
        match self {
            TorusPoint::T2(a) => {
                TorusPoint::T2([a[0].add(Angle::offset(v[0])), a[1].add(Angle::offset(v[1]))])
            }
            TorusPoint::T4(a) => TorusPoint::T4([
                a[0].add(Angle::offset(v[0])),
                a[1].add(Angle::offset(v[1])),
                a[2].add(Angle::offset(v[2])),
                a[3].add(Angle::offset(v[3])),
            ]),
        }
    }
}

impl fmt::Debug for TorusPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.angles()).finish()
    }
}

/// Wraps a real into `[-π, π)`.
pub fn wrap_pi(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}
