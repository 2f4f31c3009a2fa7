//! Double-double arithmetic (about 106 bits of significand).
//!
//! Used only where the fiber cocycle forces cancellation between quantities of
//! size μ^{2N} and λ^{2N}: extracting stable-direction components of pushed
//! vectors and evaluating the invariant 2-form. Map kernels stay in f64.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        // One Newton step from the f64 root doubles the precision.
        let x = self.hi.sqrt();
        let xx = Dd::new(x) * Dd::new(x);
        let corr = (self - xx).hi / (2.0 * x);
        let (hi, lo) = quick_two_sum(x, corr);
        Dd { hi, lo }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Dd {
        Dd::new(x)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::new(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

/// Dot product of an f64 row with a double-double vector.
pub fn dot(row: &[f64], v: &[Dd]) -> Dd {
    row.iter()
        .zip(v)
        .fold(Dd::ZERO, |acc, (&a, &b)| acc + Dd::new(a) * b)
}

/// Determinant of a square matrix (row-major rows) by Laplace expansion in
/// double-double; intended for dimension ≤ 4.
pub fn det(rows: &[Vec<f64>]) -> Dd {
    let n = rows.len();
    let cols: Vec<usize> = (0..n).collect();
    det_minor(rows, 0, &cols)
}

fn det_minor(rows: &[Vec<f64>], r: usize, cols: &[usize]) -> Dd {
    if cols.len() == 1 {
        return Dd::new(rows[r][cols[0]]);
    }
    let mut acc = Dd::ZERO;
    for (k, &c) in cols.iter().enumerate() {
        let a = rows[r][c];
        if a == 0.0 {
            continue;
        }
        let rest: Vec<usize> = cols.iter().copied().filter(|&j| j != c).collect();
        let term = Dd::new(a) * det_minor(rows, r + 1, &rest);
        acc = if k % 2 == 0 { acc + term } else { acc - term };
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_lost_bits() {
        let a = Dd::new(1.0) + Dd::new(1e-20);
        let b = a - Dd::new(1.0);
        assert!((b.to_f64() - 1e-20).abs() < 1e-35);
    }

    #[test]
    fn sqrt_and_div_agree() {
        let five = Dd::new(5.0);
        let r = five.sqrt();
        let back = r * r - five;
        assert!(back.to_f64().abs() < 1e-30);
        let q = Dd::ONE / Dd::new(3.0);
        assert!((q * Dd::new(3.0) - Dd::ONE).to_f64().abs() < 1e-31);
    }

    #[test]
    fn determinant_of_ill_conditioned_unimodular() {
        // A^12 for A = [[2,1],[1,1]], entries near 1e5; det is exactly 1.
        let rows = vec![vec![75025.0, 46368.0], vec![46368.0, 28657.0]];
        assert_eq!(det(&rows).to_f64(), 1.0);
        let rows = vec![
            vec![2.0, 0.0, 1.0],
            vec![1.0, 3.0, 0.0],
            vec![0.0, 1.0, 1.0],
        ];
        assert_eq!(det(&rows).to_f64(), 7.0);
    }
}
