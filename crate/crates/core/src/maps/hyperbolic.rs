use nalgebra::Matrix2;

use crate::dd::Dd;
use crate::error::{Error, Result};

pub type IntMat = [[i64; 2]; 2];

pub const CAT: IntMat = [[2, 1], [1, 1]];

/// Eigendata of a hyperbolic element of SL₂(Z) with positive eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperbolicMatrix {
    pub a: IntMat,
    /// Contracting eigenvalue, in (0, 1).
    pub lambda: f64,
    /// Expanding eigenvalue 1/λ.
    pub mu: f64,
    /// Unit unstable eigenvector, oriented with positive x-component.
    pub e_u: [f64; 2],
    /// Unit stable eigenvector, oriented with positive x-component.
    pub e_s: [f64; 2],
    pub e_u_dd: [Dd; 2],
    pub e_s_dd: [Dd; 2],
}

fn unit_eigenvector(a: &IntMat, ev: Dd) -> Result<[Dd; 2]> {
    let v = if a[0][1] != 0 {
        [Dd::new(a[0][1] as f64), ev - Dd::new(a[0][0] as f64)]
    } else {
        [ev - Dd::new(a[1][1] as f64), Dd::new(a[1][0] as f64)]
    };
    let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if norm.to_f64() == 0.0 {
        return Err(Error::Numerical("degenerate eigenvector".into()));
    }
    let sign = if v[0].to_f64() < 0.0 { -1.0 } else { 1.0 };
    Ok([v[0] / norm * Dd::new(sign), v[1] / norm * Dd::new(sign)])
}

impl HyperbolicMatrix {
    /// Eigenvalues and unit eigenvectors of `a`; rejects non-unimodular or
    /// non-hyperbolic input and negative-trace matrices.
    pub fn new(a: IntMat) -> Result<HyperbolicMatrix> {
        let det = a[0][0] as i128 * a[1][1] as i128 - a[0][1] as i128 * a[1][0] as i128;
        if det != 1 {
            return Err(Error::InvalidParams(format!(
                "matrix {a:?} has determinant {det}, expected 1"
            )));
        }
        let trace = a[0][0] + a[1][1];
        if trace <= 2 {
            return Err(Error::InvalidParams(format!(
                "matrix {a:?} has trace {trace}; need trace > 2 (hyperbolic, positive eigenvalues)"
            )));
        }
        let t = Dd::new(trace as f64);
        let disc = t * t - Dd::new(4.0);
        let mu = (t + disc.sqrt()) / Dd::new(2.0);
        let lambda = Dd::ONE / mu;
        let e_u_dd = unit_eigenvector(&a, mu)?;
        let e_s_dd = unit_eigenvector(&a, lambda)?;
        let e_u = [e_u_dd[0].to_f64(), e_u_dd[1].to_f64()];
        let e_s = [e_s_dd[0].to_f64(), e_s_dd[1].to_f64()];
        if e_u[0].abs() < 1e-12 {
            return Err(Error::InvalidParams("P_x(e^u) vanishes".into()));
        }
        Ok(HyperbolicMatrix {
            a,
            lambda: lambda.to_f64(),
            mu: mu.to_f64(),
            e_u,
            e_s,
            e_u_dd,
            e_s_dd,
        })
    }

    pub fn cat() -> HyperbolicMatrix {
        HyperbolicMatrix::new(CAT).expect("cat matrix is hyperbolic")
    }

    pub fn inverse_int(&self) -> IntMat {
        let a = self.a;
        [[a[1][1], -a[0][1]], [-a[1][0], a[0][0]]]
    }

    /// The eigendata of A⁻¹ (its unstable vector is e^s of A).
    pub fn inverse(&self) -> HyperbolicMatrix {
        HyperbolicMatrix::new(self.inverse_int()).expect("inverse of hyperbolic is hyperbolic")
    }

    /// `|P_x(e^u)|`.
    pub fn px_eu(&self) -> f64 {
        self.e_u[0].abs()
    }

    /// A^k with exact integer arithmetic; `k` may be negative.
    pub fn power(&self, k: i64) -> Result<IntMat> {
        let base = if k >= 0 { self.a } else { self.inverse_int() };
        let mut acc: [[i128; 2]; 2] = [[1, 0], [0, 1]];
        let overflow = || Error::InvalidParams(format!("A^{k} overflows 64-bit integers"));
        for _ in 0..k.unsigned_abs() {
            let mut next = [[0i128; 2]; 2];
            for (i, row) in next.iter_mut().enumerate() {
                for (j, cell) in row.iter_mut().enumerate() {
                    *cell = acc[i][0]
                        .checked_mul(base[0][j] as i128)
                        .zip(acc[i][1].checked_mul(base[1][j] as i128))
                        .and_then(|(a, b)| a.checked_add(b))
                        .filter(|v| i64::try_from(*v).is_ok())
                        .ok_or_else(overflow)?;
                }
            }
            acc = next;
        }
        let mut out = [[0i64; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = acc[i][j] as i64;
            }
        }
        Ok(out)
    }

    /// μ^k with the rounding error of `trace(A^k) - λ^k` rather than of `powi`.
    pub fn mu_pow(&self, k: i64) -> f64 {
        match self.power(k) {
            Ok(p) if k > 0 => p[0][0] as f64 + p[1][1] as f64 - self.lambda.powi(k as i32),
            _ => self.mu.powf(k as f64),
        }
    }

    pub fn lambda_pow(&self, k: i64) -> f64 {
        1.0 / self.mu_pow(k)
    }
}

pub fn to_matrix2(m: &IntMat) -> Matrix2<f64> {
    Matrix2::new(
        m[0][0] as f64,
        m[0][1] as f64,
        m[1][0] as f64,
        m[1][1] as f64,
    )
}

pub fn int_mul(a: &IntMat, b: &IntMat) -> Result<IntMat> {
    let mut out = [[0i64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let v = a[i][0] as i128 * b[0][j] as i128 + a[i][1] as i128 * b[1][j] as i128;
            out[i][j] = i64::try_from(v)
                .map_err(|_| Error::InvalidParams("integer matrix product overflows".into()))?;
        }
    }
    Ok(out)
}
