//! Invariant bundles: explicit unstable/stable frames of unperturbed skew
//! products, power-iteration frames for perturbations, unstable Jacobians,
//! the center plane and the invariant symplectic form.

use nalgebra::{Matrix2, Matrix4, Matrix4x3, Vector2, Vector4};

use crate::dd::{self, Dd};
use crate::error::{Error, Result};
use crate::maps::{Coupling, MapModel, SkewProduct};
use crate::torus::{Angle, TorusPoint};

pub const K_MAX: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-14;
/// Steps used when a map has no explicit frame.
pub const PI_STEPS: usize = 4;

/// `(base, fiber)` spanning E^u or E^s at `m`, plus truncation metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub m: TorusPoint,
    /// α_m for the unstable frame, β_m for the stable one.
    pub base: [f64; 2],
    /// e^u or e^s of A.
    pub fiber: [f64; 2],
    /// Index of the last series term kept.
    pub order: usize,
    pub tail_bound: f64,
}

pub type UnstableFrame = Frame;
pub type StableFrame = Frame;

impl Frame {
    pub fn vector(&self) -> [f64; 4] {
        [self.base[0], self.base[1], self.fiber[0], self.fiber[1]]
    }

    pub fn unit(&self) -> [f64; 4] {
        normalize(self.vector())
    }
}

pub fn normalize(v: [f64; 4]) -> [f64; 4] {
    let n = norm(&v);
    v.map(|c| c / n)
}

pub fn norm(v: &[f64; 4]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub fn mul4(m: &Matrix4<f64>, v: &[f64; 4]) -> [f64; 4] {
    let r = m * Vector4::from_column_slice(v);
    [r[0], r[1], r[2], r[3]]
}

fn as_t4(m: &TorusPoint) -> Result<[Angle; 4]> {
    match m {
        TorusPoint::T4(a) => Ok(*a),
        TorusPoint::T2(_) => Err(Error::Dimension {
            expected: 4,
            got: 2,
        }),
    }
}

/// Upper bound on the operator norm of the base derivative.
fn ds_bound(skew: &SkewProduct) -> f64 {
    let om = skew.base.p.abs() as f64 + skew.base.r.abs();
    (om * om + 2.0).sqrt()
}

enum Stop {
    Tol(f64),
    Order(usize),
}

/// Σ_{k≥0} λ^{n(k+1)} d s_{-1} ⋯ d s_{-k} (C e^u) along the backward orbit.
fn alpha_series(skew: &SkewProduct, m: &[Angle; 4], stop: Stop) -> Result<Frame> {
    let ln = skew.fiber_lambda();
    let q = ln * ds_bound(skew);
    if q >= 1.0 {
        return Err(Error::Numerical(format!(
            "series ratio {q} >= 1; fiber contraction too weak for this base map"
        )));
    }
    let c = skew.coupled_eu();
    let cn = c.norm();
    let mut p = Matrix2::<f64>::identity();
    let mut pt = *m;
    let mut scale = ln;
    let mut acc: Vector2<f64> = c * scale;
    for k in 0..=K_MAX {
        let tail = scale * p.norm() * cn * q / (1.0 - q);
        let done = match stop {
            Stop::Tol(t) => tail <= t,
            Stop::Order(o) => k >= o,
        };
        if done {
            let e = skew.matrix.e_u;
            return Ok(Frame {
                m: TorusPoint::T4(*m),
                base: [acc[0], acc[1]],
                fiber: e,
                order: k,
                tail_bound: tail,
            });
        }
        pt = skew.inverse4(&pt);
        p *= skew.base.derivative(pt[0].radians());
        scale *= ln;
        acc += p * c * scale;
    }
    Err(Error::Numerical(format!(
        "series did not reach tolerance within {K_MAX} terms"
    )))
}

/// The unstable frame `(α_m, e^u)`, truncated once the geometric tail bound
/// falls below `tol`.
pub fn alpha(skew: &SkewProduct, m: &[Angle; 4], tol: f64) -> Result<UnstableFrame> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "tol must be positive, got {tol}"
        )));
    }
    alpha_series(skew, m, Stop::Tol(tol))
}

/// The unstable-frame series cut after exactly `order + 1` terms.
pub fn alpha_truncated(skew: &SkewProduct, m: &[Angle; 4], order: usize) -> Result<UnstableFrame> {
    if order > K_MAX {
        return Err(Error::InvalidParams(format!(
            "order {order} exceeds {K_MAX}"
        )));
    }
    alpha_series(skew, m, Stop::Order(order))
}

/// Stable frame by the forward series
/// β_m = −Σ_{k≥0} λ^{nk} d s_m⁻¹ ⋯ d s_{f^k m}⁻¹ (C e^s).
pub fn stable_frame_series(skew: &SkewProduct, m: &[Angle; 4], tol: f64) -> Result<StableFrame> {
    let ln = skew.fiber_lambda();
    let q = ln * ds_bound(skew);
    if q >= 1.0 {
        return Err(Error::Numerical(format!("series ratio {q} >= 1")));
    }
    let es = skew.matrix.e_s;
    let c = skew.coupled_es();
    let cn = c.norm();
    let dsi = |a: Angle| Matrix2::new(0.0, 1.0, -1.0, skew.base.omega(a.radians()));
    let mut p = dsi(m[0]);
    let mut pt = *m;
    let mut scale = 1.0;
    let mut acc: Vector2<f64> = -(p * c);
    for k in 0..=K_MAX {
        let tail = scale * p.norm() * cn * q / (1.0 - q);
        if tail <= tol {
            return Ok(Frame {
                m: TorusPoint::T4(*m),
                base: [acc[0], acc[1]],
                fiber: es,
                order: k,
                tail_bound: tail,
            });
        }
        pt = skew.eval4(&pt);
        p *= dsi(pt[0]);
        scale *= ln;
        acc -= p * c * scale;
    }
    Err(Error::Numerical(format!(
        "series did not reach tolerance within {K_MAX} terms"
    )))
}

/// The map R̂∘f⁻¹∘R̂, again a skew product (with A replaced by A⁻¹).
pub fn conjugate_inverse(skew: &SkewProduct) -> Result<Option<SkewProduct>> {
    match skew.coupling {
        Coupling::ProjectedPower(k) => Ok(Some(SkewProduct::new(
            skew.base,
            skew.matrix.inverse(),
            Coupling::ProjectedPower(skew.fiber_power - k),
            skew.fiber_power,
        )?)),
        Coupling::Linear(_) => Ok(None),
    }
}

/// Unstable and stable frames of one skew product.
#[derive(Clone, Debug)]
pub struct Frames {
    pub skew: SkewProduct,
    conj: Option<SkewProduct>,
}

impl Frames {
    pub fn new(skew: &SkewProduct) -> Result<Frames> {
        Ok(Frames {
            conj: conjugate_inverse(skew)?,
            skew: skew.clone(),
        })
    }

    pub fn unstable(&self, m: &[Angle; 4], tol: f64) -> Result<UnstableFrame> {
        alpha(&self.skew, m, tol)
    }

    /// Stable frame via the R̂-conjugated unstable frame of the inverse family
    /// when the coupling allows it, else by the forward series.
    pub fn stable(&self, m: &[Angle; 4], tol: f64) -> Result<StableFrame> {
        match &self.conj {
            Some(c) => {
                let rm = [m[1], m[0], m[2], m[3]];
                let f = alpha(c, &rm, tol)?;
                Ok(Frame {
                    m: TorusPoint::T4(*m),
                    base: [f.base[1], f.base[0]],
                    fiber: f.fiber,
                    order: f.order,
                    tail_bound: f.tail_bound,
                })
            }
            None => stable_frame_series(&self.skew, m, tol),
        }
    }
}

pub fn stable_frame(skew: &SkewProduct, m: &[Angle; 4], tol: f64) -> Result<StableFrame> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "tol must be positive, got {tol}"
        )));
    }
    Frames::new(skew)?.stable(m, tol)
}

fn seed_unstable(map: &MapModel, m: &[Angle; 4]) -> Result<[f64; 4]> {
    match map.unperturbed() {
        Some(s) => Ok(alpha(s, m, DEFAULT_TOL)?.unit()),
        None => Err(Error::NotSkew("power iteration")),
    }
}

fn seed_stable(map: &MapModel, m: &[Angle; 4]) -> Result<[f64; 4]> {
    match map.unperturbed() {
        Some(s) => Ok(stable_frame(s, m, DEFAULT_TOL)?.unit()),
        None => Err(Error::NotSkew("power iteration")),
    }
}

fn orient(v: [f64; 4], fiber: [f64; 2]) -> [f64; 4] {
    if v[2] * fiber[0] + v[3] * fiber[1] < 0.0 {
        v.map(|c| -c)
    } else {
        v
    }
}

/// Unit vector at `m` obtained by pushing the seed frame at g^{-k}(m) forward
/// `k` steps.
pub fn power_iteration_unstable(map: &MapModel, m: &TorusPoint, k: usize) -> Result<[f64; 4]> {
    power_iteration_unstable_from(map, m, k, None)
}

/// As [`power_iteration_unstable`], with an explicit seed vector at g^{-k}(m).
pub fn power_iteration_unstable_from(
    map: &MapModel,
    m: &TorusPoint,
    k: usize,
    seed: Option<[f64; 4]>,
) -> Result<[f64; 4]> {
    let m = as_t4(m)?;
    let mut orbit = Vec::with_capacity(k + 1);
    orbit.push(m);
    for _ in 0..k {
        let prev = map.inverse4(orbit.last().expect("nonempty"));
        orbit.push(prev);
    }
    let mut v = match seed {
        Some(v) => normalize(v),
        None => seed_unstable(map, &orbit[k])?,
    };
    for j in (1..=k).rev() {
        v = normalize(mul4(&map.derivative4(&orbit[j]), &v));
    }
    let eu = map.unperturbed().expect("seeded").matrix.e_u;
    Ok(orient(v, eu))
}

/// Unit vector at `m` obtained by pulling the seed frame at g^k(m) back `k`
/// steps with the inverse derivative.
pub fn power_iteration_stable(map: &MapModel, m: &TorusPoint, k: usize) -> Result<[f64; 4]> {
    let m = as_t4(m)?;
    let mut orbit = Vec::with_capacity(k + 1);
    orbit.push(m);
    for _ in 0..k {
        let next = map.eval4(orbit.last().expect("nonempty"));
        orbit.push(next);
    }
    let mut v = seed_stable(map, &orbit[k])?;
    for j in (1..=k).rev() {
        v = normalize(mul4(&map.inverse_derivative4(&orbit[j]), &v));
    }
    let es = map.unperturbed().expect("seeded").matrix.e_s;
    Ok(orient(v, es))
}

/// Unit E^u vector: the explicit frame for unperturbed maps, power iteration
/// otherwise.
pub fn unstable_direction(map: &MapModel, m: &[Angle; 4]) -> Result<[f64; 4]> {
    match map.skew() {
        Some(s) => Ok(alpha(s, m, DEFAULT_TOL)?.unit()),
        None => power_iteration_unstable(map, &TorusPoint::T4(*m), PI_STEPS),
    }
}

pub fn stable_direction(map: &MapModel, m: &[Angle; 4]) -> Result<[f64; 4]> {
    match map.skew() {
        Some(s) => Ok(stable_frame(s, m, DEFAULT_TOL)?.unit()),
        None => power_iteration_stable(map, &TorusPoint::T4(*m), PI_STEPS),
    }
}

/// `‖d_m g(v^u)‖` for the unit unstable vector at `m`.
pub fn unstable_expansion(map: &MapModel, m: &[Angle; 4]) -> Result<f64> {
    let v = unstable_direction(map, m)?;
    Ok(norm(&mul4(&map.derivative4(m), &v)))
}

/// `‖d_m g(v^s)‖`, evaluated as `1/‖d g⁻¹(g m) v^s(g m)‖` to avoid cancellation.
pub fn stable_contraction(map: &MapModel, m: &[Angle; 4]) -> Result<f64> {
    let gm = map.eval4(m);
    let v = stable_direction(map, &gm)?;
    Ok(1.0 / norm(&mul4(&map.inverse_derivative4(&gm), &v)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Log of `J^u_{g^k}(m)`, pushing the unit unstable vector forward.
fn log_forward_jacobian(map: &MapModel, m: &[Angle; 4], k: usize) -> Result<f64> {
    let mut v = unstable_direction(map, m)?;
    let mut p = *m;
    let mut acc = 0.0;
    for _ in 0..k {
        let w = mul4(&map.derivative4(&p), &v);
        let n = norm(&w);
        acc += n.ln();
        v = w.map(|c| c / n);
        p = map.eval4(&p);
    }
    Ok(acc)
}

/// `J^u_{g^k}(m)` (forward) or `J^u_{g^{-k}}(m)` (backward); the backward
/// value is `1/J^u_{g^k}(g^{-k} m)`.
pub fn unstable_jacobian(map: &MapModel, m: &TorusPoint, k: usize, dir: Direction) -> Result<f64> {
    let m = as_t4(m)?;
    Ok(match dir {
        Direction::Forward => log_forward_jacobian(map, &m, k)?.exp(),
        Direction::Backward => {
            let mut p = m;
            for _ in 0..k {
                p = map.inverse4(&p);
            }
            (-log_forward_jacobian(map, &p, k)?).exp()
        }
    })
}

/// Log of the backward Jacobian, for ratios that would underflow.
pub fn log_backward_jacobian(map: &MapModel, m: &[Angle; 4], k: usize) -> Result<f64> {
    let mut p = *m;
    for _ in 0..k {
        p = map.inverse4(&p);
    }
    Ok(-log_forward_jacobian(map, &p, k)?)
}

fn push_plane(mats: impl Iterator<Item = Matrix4<f64>>, seed: Matrix4x3<f64>) -> Matrix4x3<f64> {
    let mut q = seed.qr().q();
    for d in mats {
        q = (d * q).qr().q();
    }
    q
}

/// Unit normal of the hyperplane spanned by the orthonormal columns of `q`.
fn normal(q: &Matrix4x3<f64>) -> Vector4<f64> {
    let proj = Matrix4::identity() - q * q.transpose();
    let best = (0..4)
        .map(|i| proj.column(i).into_owned())
        .max_by(|a: &Vector4<f64>, b| a.norm().total_cmp(&b.norm()))
        .expect("four columns");
    best.normalize()
}

/// Orthonormal basis of E^c ≈ E^{cu} ∩ E^{cs} at `m`, from 3-planes pushed
/// `k` steps forward and backward.
pub fn center_plane(map: &MapModel, m: &TorusPoint, k: usize) -> Result<[[f64; 4]; 2]> {
    let m = as_t4(m)?;
    let mut back = vec![m];
    let mut fwd = vec![m];
    for _ in 0..k {
        back.push(map.inverse4(back.last().expect("nonempty")));
        fwd.push(map.eval4(fwd.last().expect("nonempty")));
    }
    let seed = |v: [f64; 4]| {
        Matrix4x3::from_columns(&[
            Vector4::new(1.0, 0.0, 0.0, 0.0),
            Vector4::new(0.0, 1.0, 0.0, 0.0),
            Vector4::from_column_slice(&v),
        ])
    };
    let cu = push_plane(
        (1..=k).rev().map(|j| map.derivative4(&back[j])),
        seed(seed_unstable(map, &back[k])?),
    );
    let cs = push_plane(
        (1..=k).rev().map(|j| map.inverse_derivative4(&fwd[j])),
        seed(seed_stable(map, &fwd[k])?),
    );
    let n1 = normal(&cu);
    let n2 = normal(&cs);
    let basis = Matrix4::from_columns(&[
        n1,
        n2,
        Vector4::new(1.0, 0.0, 0.0, 0.0),
        Vector4::new(0.0, 1.0, 0.0, 0.0),
    ]);
    let q = basis.qr().q();
    let mut out = [[0.0; 4]; 2];
    for (c, o) in out.iter_mut().enumerate() {
        for i in 0..4 {
            o[i] = q[(i, c + 2)];
        }
    }
    // Orient like (e_x, e_y).
    if out[0][0] < 0.0 {
        out[0] = out[0].map(|c| -c);
    }
    let det = out[0][0] * out[1][1] - out[0][1] * out[1][0];
    if det < 0.0 {
        out[1] = out[1].map(|c| -c);
    }
    Ok(out)
}

/// Frames at one point, in the precision needed by the symplectic form.
#[derive(Clone, Debug)]
pub struct SymplecticFrame {
    alpha: [f64; 2],
    beta: [f64; 2],
    e_u: [Dd; 2],
    e_s: [Dd; 2],
}

/// Frames accurate enough that `ω` survives a push by μ^{2N}.
pub const SYMPLECTIC_TOL: f64 = 1e-24;

impl SymplecticFrame {
    pub fn at(frames: &Frames, m: &[Angle; 4]) -> Result<SymplecticFrame> {
        let u = frames.unstable(m, SYMPLECTIC_TOL)?;
        let s = frames.stable(m, SYMPLECTIC_TOL)?;
        let h = &frames.skew.matrix;
        let det = h.e_u[0] * h.e_s[1] - h.e_u[1] * h.e_s[0];
        if det.abs() < 1e-6 {
            return Err(Error::Numerical("degenerate fiber frame".into()));
        }
        Ok(SymplecticFrame {
            alpha: u.base,
            beta: s.base,
            e_u: h.e_u_dd,
            e_s: h.e_s_dd,
        })
    }

    /// Coordinates of `w` in the basis `[e_x, e_y, (α, e^u), (β, e^s)]`.
    pub fn coords(&self, w: &[Dd; 4]) -> [Dd; 4] {
        let (eu, es) = (self.e_u, self.e_s);
        let det = eu[0] * es[1] - eu[1] * es[0];
        let c3 = (w[2] * es[1] - w[3] * es[0]) / det;
        let c4 = (eu[0] * w[3] - eu[1] * w[2]) / det;
        let c1 = w[0] - c3 * Dd::new(self.alpha[0]) - c4 * Dd::new(self.beta[0]);
        let c2 = w[1] - c3 * Dd::new(self.alpha[1]) - c4 * Dd::new(self.beta[1]);
        [c1, c2, c3, c4]
    }

    /// `ω = ω_c + d_u ∧ d_s`.
    pub fn omega(&self, u: &[Dd; 4], v: &[Dd; 4]) -> Dd {
        let a = self.coords(u);
        let b = self.coords(v);
        a[0] * b[1] - a[1] * b[0] + a[2] * b[3] - b[2] * a[3]
    }
}

pub fn to_dd(v: &[f64; 4]) -> [Dd; 4] {
    v.map(Dd::new)
}

/// `d_m f(u)` in double-double.
pub fn push_dd(skew: &SkewProduct, m: &[Angle; 4], u: &[Dd; 4]) -> [Dd; 4] {
    let d = skew.derivative4(m);
    let mut out = [Dd::ZERO; 4];
    for (i, o) in out.iter_mut().enumerate() {
        let row = [d[(i, 0)], d[(i, 1)], d[(i, 2)], d[(i, 3)]];
        *o = dd::dot(&row, u);
    }
    out
}

/// `ω_m(u, v)` for an unperturbed skew product.
pub fn symplectic_form(map: &MapModel, m: &TorusPoint, u: &[f64; 4], v: &[f64; 4]) -> Result<f64> {
    let skew = map.skew().ok_or(Error::NotSkew("symplectic_form"))?;
    let m = as_t4(m)?;
    let sf = SymplecticFrame::at(&Frames::new(skew)?, &m)?;
    Ok(sf.omega(&to_dd(u), &to_dd(v)).to_f64())
}

#[cfg(test)]
mod tests;
