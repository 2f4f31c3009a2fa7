//! The map family: standard maps, toral automorphisms, the skew products
//! f_N / f_r / g_{N1,N2} / p-variant, and conservative shear perturbations.
//!
//! Every model evaluates, differentiates and inverts in closed form.

mod hyperbolic;
mod spec;

pub use hyperbolic::{int_mul, to_matrix2, HyperbolicMatrix, IntMat, CAT};
pub use spec::{parse_int_mat, MapSpec};

use nalgebra::{DMatrix, Matrix2, Matrix4};

use crate::error::{Error, Result};
use crate::torus::{apply_int, Angle, TorusPoint};

/// The area-preserving twist (x, y) ↦ (p x − y + r sin x, x).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaseMap {
    pub p: i64,
    pub r: f64,
}

impl BaseMap {
    #[inline]
    pub fn eval(&self, x: Angle, y: Angle) -> [Angle; 2] {
        [
            x.scale(self.p).sub(y).add(Angle::offset(self.r * x.sin())),
            x,
        ]
    }

    #[inline]
    pub fn inverse(&self, a: Angle, b: Angle) -> [Angle; 2] {
        [
            b,
            b.scale(self.p).sub(a).add(Angle::offset(self.r * b.sin())),
        ]
    }

    /// Upper-left entry of the derivative, `p + r cos x` (Ω for p = 2).
    #[inline]
    pub fn omega(&self, x: f64) -> f64 {
        self.p as f64 + self.r * x.cos()
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> Matrix2<f64> {
        Matrix2::new(self.omega(x), -1.0, 1.0, 0.0)
    }

    /// Derivative of the inverse at the image point (a, b).
    #[inline]
    pub fn inverse_derivative(&self, b: f64) -> Matrix2<f64> {
        Matrix2::new(0.0, 1.0, -1.0, self.omega(b))
    }
}

/// How the fiber feeds into the base coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coupling {
    /// `P_x ∘ A^k`.
    ProjectedPower(i64),
    /// An integer linear map `L`.
    Linear(IntMat),
}

/// (s(x,y) + C(z,w), A^n(z,w)) on T⁴.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewProduct {
    pub base: BaseMap,
    pub matrix: HyperbolicMatrix,
    pub coupling: Coupling,
    pub fiber_power: i64,
    fiber_fwd: IntMat,
    fiber_inv: IntMat,
    coupling_int: IntMat,
    coupling_f: Matrix2<f64>,
    fiber_f: Matrix2<f64>,
    fiber_inv_f: Matrix2<f64>,
    coupling_after_inv_f: Matrix2<f64>,
}

impl SkewProduct {
    pub fn new(
        base: BaseMap,
        matrix: HyperbolicMatrix,
        coupling: Coupling,
        fiber_power: i64,
    ) -> Result<SkewProduct> {
        if fiber_power < 1 {
            return Err(Error::InvalidParams(format!(
                "fiber power must be >= 1, got {fiber_power}"
            )));
        }
        let fiber_fwd = matrix.power(fiber_power)?;
        let fiber_inv = matrix.power(-fiber_power)?;
        let coupling_int = match coupling {
            Coupling::ProjectedPower(k) => {
                let p = matrix.power(k)?;
                [[p[0][0], p[0][1]], [0, 0]]
            }
            Coupling::Linear(l) => l,
        };
        let coupling_after_inv = int_mul(&coupling_int, &fiber_inv)?;
        Ok(SkewProduct {
            base,
            coupling,
            fiber_power,
            fiber_fwd,
            fiber_inv,
            coupling_int,
            coupling_f: to_matrix2(&coupling_int),
            fiber_f: to_matrix2(&fiber_fwd),
            fiber_inv_f: to_matrix2(&fiber_inv),
            coupling_after_inv_f: to_matrix2(&coupling_after_inv),
            matrix,
        })
    }

    /// f_N with hyperbolic matrix `a`.
    pub fn f_n(n: u32, a: IntMat) -> Result<SkewProduct> {
        if n < 1 {
            return Err(Error::InvalidParams("f_N needs N >= 1".into()));
        }
        SkewProduct::new(
            BaseMap { p: 2, r: n as f64 },
            HyperbolicMatrix::new(a)?,
            Coupling::ProjectedPower(n as i64),
            2 * n as i64,
        )
    }

    /// The standard-map parameter (N for f_N).
    pub fn n(&self) -> f64 {
        self.base.r
    }

    pub fn lambda_n(&self) -> f64 {
        self.matrix.lambda_pow(self.half_power())
    }

    /// λ^{fiber_power}, the exact contraction of the stable fiber direction.
    pub fn fiber_lambda(&self) -> f64 {
        self.matrix.lambda_pow(self.fiber_power)
    }

    /// μ^{fiber_power}.
    pub fn fiber_mu(&self) -> f64 {
        self.matrix.mu_pow(self.fiber_power)
    }

    /// The exponent playing the role of N in λ^N (fiber_power / 2).
    pub fn half_power(&self) -> i64 {
        match self.coupling {
            Coupling::ProjectedPower(k) => k,
            Coupling::Linear(_) => self.fiber_power / 2,
        }
    }

    /// C e^u, the fiber-to-base image of the unstable eigenvector.
    pub fn coupled_eu(&self) -> nalgebra::Vector2<f64> {
        match self.coupling {
            Coupling::ProjectedPower(k) => {
                nalgebra::Vector2::new(self.matrix.mu_pow(k) * self.matrix.e_u[0], 0.0)
            }
            Coupling::Linear(_) => {
                self.coupling_f * nalgebra::Vector2::new(self.matrix.e_u[0], self.matrix.e_u[1])
            }
        }
    }

    /// C e^s; for projected powers this is λ^k P_x(e^s), free of cancellation.
    pub fn coupled_es(&self) -> nalgebra::Vector2<f64> {
        match self.coupling {
            Coupling::ProjectedPower(k) => {
                nalgebra::Vector2::new(self.matrix.lambda_pow(k) * self.matrix.e_s[0], 0.0)
            }
            Coupling::Linear(_) => {
                self.coupling_f * nalgebra::Vector2::new(self.matrix.e_s[0], self.matrix.e_s[1])
            }
        }
    }

    pub fn coupling_matrix(&self) -> &Matrix2<f64> {
        &self.coupling_f
    }

    pub fn fiber_matrix(&self) -> &Matrix2<f64> {
        &self.fiber_f
    }

    pub fn fiber_int(&self) -> &IntMat {
        &self.fiber_fwd
    }

    #[inline]
    fn couple(&self, z: Angle, w: Angle) -> [Angle; 2] {
        apply_int(&self.coupling_int, [z, w])
    }

    #[inline]
    pub fn eval4(&self, m: &[Angle; 4]) -> [Angle; 4] {
        let b = self.base.eval(m[0], m[1]);
        let c = self.couple(m[2], m[3]);
        let f = apply_int(&self.fiber_fwd, [m[2], m[3]]);
        [b[0].add(c[0]), b[1].add(c[1]), f[0], f[1]]
    }

    #[inline]
    pub fn inverse4(&self, m: &[Angle; 4]) -> [Angle; 4] {
        let f = apply_int(&self.fiber_inv, [m[2], m[3]]);
        let c = self.couple(f[0], f[1]);
        let b = self.base.inverse(m[0].sub(c[0]), m[1].sub(c[1]));
        [b[0], b[1], f[0], f[1]]
    }

    #[inline]
    pub fn derivative4(&self, m: &[Angle; 4]) -> Matrix4<f64> {
        let ds = self.base.derivative(m[0].radians());
        let c = &self.coupling_f;
        let f = &self.fiber_f;
        Matrix4::new(
            ds[(0, 0)],
            ds[(0, 1)],
            c[(0, 0)],
            c[(0, 1)], //
            ds[(1, 0)],
            ds[(1, 1)],
            c[(1, 0)],
            c[(1, 1)], //
            0.0,
            0.0,
            f[(0, 0)],
            f[(0, 1)], //
            0.0,
            0.0,
            f[(1, 0)],
            f[(1, 1)],
        )
    }

    /// Derivative of f⁻¹ at `m`, i.e. `(Df(f⁻¹ m))⁻¹`, in closed form.
    #[inline]
    pub fn inverse_derivative4(&self, m: &[Angle; 4]) -> Matrix4<f64> {
        let pre = self.inverse4(m);
        let q = self.base.omega(pre[0].radians());
        let dsi = Matrix2::new(0.0, 1.0, -1.0, q);
        let upper = -(dsi * self.coupling_after_inv_f);
        let fi = &self.fiber_inv_f;
        Matrix4::new(
            dsi[(0, 0)],
            dsi[(0, 1)],
            upper[(0, 0)],
            upper[(0, 1)], //
            dsi[(1, 0)],
            dsi[(1, 1)],
            upper[(1, 0)],
            upper[(1, 1)], //
            0.0,
            0.0,
            fi[(0, 0)],
            fi[(0, 1)], //
            0.0,
            0.0,
            fi[(1, 0)],
            fi[(1, 1)],
        )
    }
}

/// The shear perturbation h_ε ∘ inner.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbed {
    pub inner: SkewProduct,
    pub eps: f64,
}

impl Perturbed {
    #[inline]
    fn shear(&self, m: &[Angle; 4], sign: f64) -> [Angle; 4] {
        let e = sign * self.eps;
        [
            m[0],
            m[1].add(Angle::offset(e * m[0].add(m[2]).sin())),
            m[2],
            m[3].add(Angle::offset(e * m[2].sin())),
        ]
    }

    #[inline]
    fn shear_derivative(&self, m: &[Angle; 4], sign: f64) -> Matrix4<f64> {
        let e = sign * self.eps;
        let c1 = e * m[0].add(m[2]).cos();
        let c2 = e * m[2].cos();
        Matrix4::new(
            1.0, 0.0, 0.0, 0.0, //
            c1, 1.0, c1, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, c2, 1.0,
        )
    }

    #[inline]
    pub fn eval4(&self, m: &[Angle; 4]) -> [Angle; 4] {
        self.shear(&self.inner.eval4(m), 1.0)
    }

    #[inline]
    pub fn inverse4(&self, m: &[Angle; 4]) -> [Angle; 4] {
        self.inner.inverse4(&self.shear(m, -1.0))
    }

    #[inline]
    pub fn derivative4(&self, m: &[Angle; 4]) -> Matrix4<f64> {
        let fm = self.inner.eval4(m);
        self.shear_derivative(&fm, 1.0) * self.inner.derivative4(m)
    }

    #[inline]
    pub fn inverse_derivative4(&self, m: &[Angle; 4]) -> Matrix4<f64> {
        let hm = self.shear(m, -1.0);
        self.inner.inverse_derivative4(&hm) * self.shear_derivative(m, -1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Base(BaseMap),
    Cat {
        a: IntMat,
        inv: IntMat,
        af: Matrix2<f64>,
        invf: Matrix2<f64>,
    },
    Skew(SkewProduct),
    Perturbed(Perturbed),
}

/// An immutable, thread-safe map of T² or T⁴.
#[derive(Clone, Debug, PartialEq)]
pub struct MapModel {
    spec: MapSpec,
    kind: Kind,
}

fn build_skew(spec: &MapSpec) -> Result<SkewProduct> {
    match *spec {
        MapSpec::FN { n, a } => SkewProduct::f_n(n, a),
        MapSpec::FR { r, a } => {
            if !(r.is_finite() && r >= 1.0) {
                return Err(Error::InvalidParams(format!("f_r needs r >= 1, got {r}")));
            }
            SkewProduct::new(
                BaseMap { p: 2, r },
                HyperbolicMatrix::new(a)?,
                Coupling::ProjectedPower(r.floor() as i64),
                (2.0 * r).floor() as i64,
            )
        }
        MapSpec::GN1N2 { p, n1, n2, l, a } => {
            if n1 > n2 {
                return Err(Error::InvalidParams(format!(
                    "g_N1N2 needs N1 <= N2, got {n1} > {n2}"
                )));
            }
            if l[0][0] == 0 {
                return Err(Error::InvalidParams("L[1,1] must be nonzero".into()));
            }
            SkewProduct::new(
                BaseMap { p, r: n1 as f64 },
                HyperbolicMatrix::new(a)?,
                Coupling::Linear(l),
                n2 as i64,
            )
        }
        MapSpec::PVariant { p, n, a } => {
            if n < 1 {
                return Err(Error::InvalidParams("p-variant needs N >= 1".into()));
            }
            SkewProduct::new(
                BaseMap { p, r: n as f64 },
                HyperbolicMatrix::new(a)?,
                Coupling::ProjectedPower(n as i64),
                2 * n as i64,
            )
        }
        _ => Err(Error::InvalidParams(format!(
            "family {} is not a skew product on T^4",
            spec.family()
        ))),
    }
}

impl MapModel {
    /// Validates `spec` and builds the model.
    pub fn new(spec: &MapSpec) -> Result<MapModel> {
        let kind = match spec {
            MapSpec::Standard { r } => {
                if !r.is_finite() {
                    return Err(Error::InvalidParams("r must be finite".into()));
                }
                Kind::Base(BaseMap { p: 2, r: *r })
            }
            MapSpec::CatPower { a, n } => {
                if *n < 1 {
                    return Err(Error::InvalidParams("cat_power needs N >= 1".into()));
                }
                let h = HyperbolicMatrix::new(*a)?;
                let p = h.power(*n as i64)?;
                let inv = h.power(-(*n as i64))?;
                Kind::Cat {
                    a: p,
                    inv,
                    af: to_matrix2(&p),
                    invf: to_matrix2(&inv),
                }
            }
            MapSpec::Perturbed { inner, eps } => {
                if !eps.is_finite() {
                    return Err(Error::InvalidParams("eps must be finite".into()));
                }
                Kind::Perturbed(Perturbed {
                    inner: build_skew(inner)?,
                    eps: *eps,
                })
            }
            other => Kind::Skew(build_skew(other)?),
        };
        Ok(MapModel {
            spec: spec.clone(),
            kind,
        })
    }

    pub fn spec(&self) -> &MapSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            Kind::Base(_) | Kind::Cat { .. } => 2,
            _ => 4,
        }
    }

    /// The unperturbed skew product, also for a perturbation with ε = 0.
    pub fn skew(&self) -> Option<&SkewProduct> {
        match &self.kind {
            Kind::Skew(s) => Some(s),
            Kind::Perturbed(p) if p.eps == 0.0 => Some(&p.inner),
            _ => None,
        }
    }

    /// The skew product underlying a (possibly perturbed) 4D model.
    pub fn unperturbed(&self) -> Option<&SkewProduct> {
        match &self.kind {
            Kind::Skew(s) => Some(s),
            Kind::Perturbed(p) => Some(&p.inner),
            _ => None,
        }
    }

    pub fn epsilon(&self) -> f64 {
        match &self.kind {
            Kind::Perturbed(p) => p.eps,
            _ => 0.0,
        }
    }

    fn check_dim(&self, m: &TorusPoint) -> Result<()> {
        if m.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: m.dim(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, m: &TorusPoint) -> Result<TorusPoint> {
        self.check_dim(m)?;
        Ok(match (&self.kind, m) {
            (Kind::Base(b), TorusPoint::T2(p)) => TorusPoint::T2(b.eval(p[0], p[1])),
            (Kind::Cat { a, .. }, TorusPoint::T2(p)) => TorusPoint::T2(apply_int(a, *p)),
            (Kind::Skew(s), TorusPoint::T4(p)) => TorusPoint::T4(s.eval4(p)),
            (Kind::Perturbed(g), TorusPoint::T4(p)) => TorusPoint::T4(g.eval4(p)),
            _ => unreachable!("dimension checked"),
        })
    }

    pub fn inverse_eval(&self, m: &TorusPoint) -> Result<TorusPoint> {
        self.check_dim(m)?;
        Ok(match (&self.kind, m) {
            (Kind::Base(b), TorusPoint::T2(p)) => TorusPoint::T2(b.inverse(p[0], p[1])),
            (Kind::Cat { inv, .. }, TorusPoint::T2(p)) => TorusPoint::T2(apply_int(inv, *p)),
            (Kind::Skew(s), TorusPoint::T4(p)) => TorusPoint::T4(s.inverse4(p)),
            (Kind::Perturbed(g), TorusPoint::T4(p)) => TorusPoint::T4(g.inverse4(p)),
            _ => unreachable!("dimension checked"),
        })
    }

    pub fn derivative(&self, m: &TorusPoint) -> Result<DMatrix<f64>> {
        self.check_dim(m)?;
        Ok(match (&self.kind, m) {
            (Kind::Base(b), TorusPoint::T2(p)) => to_dyn2(&b.derivative(p[0].radians())),
            (Kind::Cat { af, .. }, TorusPoint::T2(_)) => to_dyn2(af),
            (Kind::Skew(s), TorusPoint::T4(p)) => to_dyn4(&s.derivative4(p)),
            (Kind::Perturbed(g), TorusPoint::T4(p)) => to_dyn4(&g.derivative4(p)),
            _ => unreachable!("dimension checked"),
        })
    }

    /// Derivative of the inverse map at `m`.
    pub fn inverse_derivative(&self, m: &TorusPoint) -> Result<DMatrix<f64>> {
        self.check_dim(m)?;
        Ok(match (&self.kind, m) {
            (Kind::Base(b), TorusPoint::T2(p)) => to_dyn2(&b.inverse_derivative(p[1].radians())),
            (Kind::Cat { invf, .. }, TorusPoint::T2(_)) => to_dyn2(invf),
            (Kind::Skew(s), TorusPoint::T4(p)) => to_dyn4(&s.inverse_derivative4(p)),
            (Kind::Perturbed(g), TorusPoint::T4(p)) => to_dyn4(&g.inverse_derivative4(p)),
            _ => unreachable!("dimension checked"),
        })
    }

    /// Allocation-free kernels for 4D models.
    pub fn eval4(&self, m: &[Angle; 4]) -> [Angle; 4] {
        match &self.kind {
            Kind::Skew(s) => s.eval4(m),
            Kind::Perturbed(g) => g.eval4(m),
            _ => panic!("eval4 on a 2D map"),
        }
    }

    pub fn inverse4(&self, m: &[Angle; 4]) -> [Angle; 4] {
        match &self.kind {
            Kind::Skew(s) => s.inverse4(m),
            Kind::Perturbed(g) => g.inverse4(m),
            _ => panic!("inverse4 on a 2D map"),
        }
    }

    pub fn derivative4(&self, m: &[Angle; 4]) -> Matrix4<f64> {
        match &self.kind {
            Kind::Skew(s) => s.derivative4(m),
            Kind::Perturbed(g) => g.derivative4(m),
            _ => panic!("derivative4 on a 2D map"),
        }
    }

    pub fn inverse_derivative4(&self, m: &[Angle; 4]) -> Matrix4<f64> {
        match &self.kind {
            Kind::Skew(s) => s.inverse_derivative4(m),
            Kind::Perturbed(g) => g.inverse_derivative4(m),
            _ => panic!("inverse_derivative4 on a 2D map"),
        }
    }
}

fn to_dyn2(m: &Matrix2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
}

fn to_dyn4(m: &Matrix4<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(4, 4, |i, j| m[(i, j)])
}

/// The symmetries used to invert and conjugate f_N.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Involution {
    /// R(x, y) = (y, x).
    R,
    /// J(x, y) = (x, 2x − y + N sin x).
    J(f64),
    /// R̂(a, b, c, d) = (R(a, b), c, d).
    RHat,
}

impl Involution {
    pub fn apply(&self, m: &TorusPoint) -> Result<TorusPoint> {
        match (self, m) {
            (Involution::R, TorusPoint::T2(p)) => Ok(TorusPoint::T2([p[1], p[0]])),
            (Involution::J(n), TorusPoint::T2(p)) => Ok(TorusPoint::T2([
                p[0],
                p[0].scale(2).sub(p[1]).add(Angle::offset(n * p[0].sin())),
            ])),
            (Involution::RHat, TorusPoint::T4(p)) => Ok(TorusPoint::T4([p[1], p[0], p[2], p[3]])),
            (Involution::RHat, _) => Err(Error::Dimension {
                expected: 4,
                got: m.dim(),
            }),
            _ => Err(Error::Dimension {
                expected: 2,
                got: m.dim(),
            }),
        }
    }
}
