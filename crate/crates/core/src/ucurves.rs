//! u-curves, adapted center fields, the Ω-basis, the good/bad cone
//! classification, curve expectations, piecewise pushforward with transition
//! statistics, and distortion of the unstable Jacobian along curves.
//!
//! The center bundle of an unperturbed skew product is the base plane, so
//! center vectors are 2-vectors in `(x, y)` and `d_m f|E^c = d s(x)`.

use std::f64::consts::{FRAC_PI_2, TAU};

use rand::Rng;
use rayon::prelude::*;

use crate::bundles::{self, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::maps::{BaseMap, MapModel, SkewProduct};
use crate::seed;
use crate::torus::{Angle, TorusPoint};

/// Largest N for which whole u-curves are integrated.
pub const N_CURVE_MAX: u32 = 12;
/// Largest piece count handled by exact enumeration.
pub const EXACT_PIECES_MAX: f64 = 1e6;
/// Bound on the tangent/secant angle of an integration step.
pub const TANGENT_TOL: f64 = 1e-6;
/// Allowed change of E under halving of the sample spacing.
pub const QUAD_TOL: f64 = 1e-4;
/// Sample pairs used for Hölder estimates are capped at this many points.
const HOLDER_POINTS: usize = 2048;
/// Smallest N from which |sin θ^X| ≥ N^{-1/3} holds off Crit for every
/// field in Δ.
pub const SIN_THETA_MIN_N: u32 = 176;

/// `(Ω(m), s_m, u_m)` with `Ω = p + r cos x`, `s_m = (1, Ω)`, `u_m = (Ω, -1)`.
pub fn center_frame(base: &BaseMap, x: f64) -> (f64, [f64; 2], [f64; 2]) {
    let om = base.omega(x);
    (om, [1.0, om], [om, -1.0])
}

/// `d s(x) v`.
pub fn push_center(base: &BaseMap, x: f64, v: [f64; 2]) -> [f64; 2] {
    [base.omega(x) * v[0] - v[1], v[0]]
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn unit2(v: [f64; 2]) -> [f64; 2] {
    let n = norm2(v);
    [v[0] / n, v[1] / n]
}

/// `|sin ∠(X, s_m)|`.
pub fn sin_theta(base: &BaseMap, x: f64, v: [f64; 2]) -> f64 {
    let (_, s, _) = center_frame(base, x);
    (v[0] * s[1] - v[1] * s[0]).abs() / (norm2(v) * norm2(s))
}

/// Membership in the closed cone Δ = R·{(1, n) : |n| ≤ N^{1/4}}.
pub fn in_cone(n: f64, v: [f64; 2]) -> bool {
    v[1].abs() <= n.powf(0.25) * v[0].abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Class {
    Good,
    Bad,
}

/// A union of x-intervals inside `[0, 2π)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StripSpec {
    pub intervals: Vec<(f64, f64)>,
}

impl StripSpec {
    pub fn length(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn contains(&self, x: f64) -> bool {
        let x = x.rem_euclid(TAU);
        self.intervals.iter().any(|&(a, b)| a <= x && x <= b)
    }
}

/// `Crit = S[b1, b2] ∪ S[b3, b4]` with `cos b1 = cos b4 = 1/√N`,
/// `cos b2 = cos b3 = -1/√N`.
pub fn crit_strip(n: f64) -> Result<StripSpec> {
    if n.is_nan() || n < 2.0 {
        return Err(Error::InvalidParams(format!(
            "critical strip needs N >= 2, got {n}"
        )));
    }
    let c = 1.0 / n.sqrt();
    let b1 = c.acos();
    let b2 = (-c).acos();
    Ok(StripSpec {
        intervals: vec![(b1, b2), (TAU - b2, TAU - b1)],
    })
}

pub fn in_crit(n: f64, x: f64) -> bool {
    x.cos().abs() <= 1.0 / n.sqrt()
}

#[derive(Clone, Debug)]
enum Tracer {
    /// Unperturbed skew product: fiber moves along e^u at a fixed rate, base
    /// follows the α-frame.
    Exact {
        skew: Box<SkewProduct>,
        fiber_step: [Angle; 2],
        fiber_vel: [f64; 2],
        scale: f64,
    },
    /// Any map: tangent from power iteration, normalised to `dx/dt = 1`.
    Generic { map: Box<MapModel> },
}

/// Integration parameters of a curve.
#[derive(Clone, Debug)]
struct Integrator {
    tracer: Tracer,
    h: f64,
    stride: usize,
    steps: usize,
    nodes: Vec<[Angle; 4]>,
}

/// A sampled curve tangent to E^u.
#[derive(Clone, Debug)]
pub struct UCurve {
    /// The parameter N (the standard-map strength).
    pub n: f64,
    pub base: BaseMap,
    pub t: Vec<f64>,
    pub points: Vec<[Angle; 4]>,
    /// `‖dγ/dt‖` at each sample.
    pub speed: Vec<f64>,
    /// `dγ_x/dt` at each sample.
    pub x_speed: Vec<f64>,
    pub length: f64,
    pub level: usize,
    pub piece: u64,
    /// Parameter interval on the root curve this curve comes from.
    pub anchor: (f64, f64),
    /// Largest tangent/secant angle seen during integration.
    pub tangent_error: f64,
    integrator: Option<Integrator>,
}

#[derive(Clone, Copy, Debug)]
pub struct UCurveOptions {
    /// Parameter step; defaults to `0.1 λ^N`.
    pub step: Option<f64>,
    /// Parameter span; `2π` for a full u-curve.
    pub span: f64,
    /// Keep every `store_every`-th integration node as a sample.
    pub store_every: usize,
}

impl Default for UCurveOptions {
    fn default() -> Self {
        UCurveOptions {
            step: None,
            span: TAU,
            store_every: 1,
        }
    }
}

fn offset4(m: &[Angle; 4], v: &[f64; 4], h: f64) -> [Angle; 4] {
    std::array::from_fn(|i| m[i].add(Angle::offset(v[i] * h)))
}

fn angle4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let dot: f64 = (0..4).map(|i| a[i] * b[i]).sum();
    let c = dot / (bundles::norm(a) * bundles::norm(b));
    c.clamp(-1.0, 1.0).acos()
}

impl Tracer {
    /// `dγ/dt` at `m`.
    fn tangent(&self, m: &[Angle; 4]) -> Result<[f64; 4]> {
        match self {
            Tracer::Exact {
                skew,
                fiber_vel,
                scale,
                ..
            } => {
                let a = bundles::alpha(skew, m, DEFAULT_TOL)?;
                Ok([
                    a.base[0] * scale,
                    a.base[1] * scale,
                    fiber_vel[0],
                    fiber_vel[1],
                ])
            }
            Tracer::Generic { map } => {
                let v = bundles::unstable_direction(map, m)?;
                if v[0] == 0.0 {
                    return Err(Error::Numerical(
                        "unstable direction has no x component".into(),
                    ));
                }
                let s = 1.0 / v[0];
                Ok(v.map(|c| c * s))
            }
        }
    }

    /// One RK4 step of size `h`; `h_node` is the node spacing.
    fn step(&self, m: &[Angle; 4], h: f64, h_node: f64) -> Result<[Angle; 4]> {
        let k1 = self.tangent(m)?;
        let k2 = self.tangent(&self.advance(m, &k1, 0.5 * h, h_node))?;
        let k3 = self.tangent(&self.advance(m, &k2, 0.5 * h, h_node))?;
        let k4 = self.tangent(&self.advance(m, &k3, h, h_node))?;
        let k: [f64; 4] =
            std::array::from_fn(|c| (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]) / 6.0);
        Ok(self.advance(m, &k, h, h_node))
    }

    /// `m + h v`. In exact mode a full node step moves the fiber by the fixed
    /// increment, so node `i` sits at `fiber0 + i·fiber_step` exactly.
    fn advance(&self, m: &[Angle; 4], v: &[f64; 4], h: f64, h_node: f64) -> [Angle; 4] {
        match self {
            Tracer::Exact {
                fiber_step,
                fiber_vel,
                ..
            } => {
                let mut out = offset4(m, v, h);
                if h == h_node {
                    out[2] = m[2].add(fiber_step[0]);
                    out[3] = m[3].add(fiber_step[1]);
                } else {
                    out[2] = m[2].add(Angle::offset(fiber_vel[0] * h));
                    out[3] = m[3].add(Angle::offset(fiber_vel[1] * h));
                }
                out
            }
            Tracer::Generic { .. } => offset4(m, v, h),
        }
    }
}

/// Integrates the u-curve through `m0`.
///
/// For unperturbed skew products the tangent is `(α, e^u)/(λ^N |P_x e^u|)`;
/// for other four-dimensional maps it is the power-iteration unstable
/// direction normalised to `dγ_x/dt = 1`.
pub fn integrate_ucurve(map: &MapModel, m0: &TorusPoint, opts: UCurveOptions) -> Result<UCurve> {
    let m0 = match m0 {
        TorusPoint::T4(a) => *a,
        TorusPoint::T2(_) => {
            return Err(Error::Dimension {
                expected: 4,
                got: 2,
            })
        }
    };
    let inner = map
        .unperturbed()
        .ok_or(Error::NotSkew("integrate_ucurve"))?;
    let n = inner.n();
    let lambda_n = inner.lambda_n();
    if !(opts.span > 0.0 && opts.span.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "span must be positive, got {}",
            opts.span
        )));
    }
    if opts.store_every == 0 {
        return Err(Error::InvalidParams("store_every must be >= 1".into()));
    }
    let h0 = opts.step.unwrap_or(0.1 * lambda_n);
    if !(h0 > 0.0 && h0.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "step must be positive, got {h0}"
        )));
    }
    let steps = (opts.span / h0).ceil() as usize;
    if steps > 20_000_000 {
        return Err(Error::InvalidParams(format!(
            "{steps} steps requested; N too large for whole-curve integration"
        )));
    }
    let h = opts.span / steps as f64;
    let tracer = match map.skew() {
        Some(skew) => {
            if n > N_CURVE_MAX as f64 && opts.span >= TAU {
                return Err(Error::InvalidParams(format!(
                    "exact curves need N <= {N_CURVE_MAX}, got {n}"
                )));
            }
            let e = skew.matrix.e_u;
            let scale = 1.0 / (lambda_n * skew.matrix.px_eu().abs());
            let vel = [e[0] * scale, e[1] * scale];
            Tracer::Exact {
                skew: Box::new(skew.clone()),
                fiber_step: [Angle::offset(vel[0] * h), Angle::offset(vel[1] * h)],
                fiber_vel: vel,
                scale,
            }
        }
        None => Tracer::Generic {
            map: Box::new(map.clone()),
        },
    };
    let mut t = Vec::new();
    let mut points = Vec::new();
    let mut speed = Vec::new();
    let mut x_speed = Vec::new();
    let mut nodes = Vec::new();
    let mut cur = m0;
    let mut tan = tracer.tangent(&cur)?;
    let mut length = 0.0;
    let mut tangent_error: f64 = 0.0;
    for i in 0..=steps {
        if i % opts.store_every == 0 || i == steps {
            t.push(i as f64 * h);
            points.push(cur);
            speed.push(bundles::norm(&tan));
            x_speed.push(tan[0]);
        }
        if i % opts.store_every == 0 {
            nodes.push(cur);
        }
        if i == steps {
            break;
        }
        let next = tracer.step(&cur, h, h)?;
        let next_tan = tracer.tangent(&next)?;
        let secant: [f64; 4] = std::array::from_fn(|c| next[c].diff(cur[c]) / h);
        let mean: [f64; 4] = std::array::from_fn(|c| 0.5 * (tan[c] + next_tan[c]));
        if !matches!(tracer, Tracer::Exact { .. }) {
            tangent_error = tangent_error.max(angle4(&secant, &mean));
        } else {
            // The fiber part is exact; only the base part can drift.
            let sb = [secant[0], secant[1], 0.0, 0.0];
            let mb = [mean[0], mean[1], 0.0, 0.0];
            tangent_error = tangent_error.max(angle4(&sb, &mb));
        }
        length += 0.5 * (bundles::norm(&tan) + bundles::norm(&next_tan)) * h;
        cur = next;
        tan = next_tan;
    }
    if tangent_error > TANGENT_TOL {
        return Err(Error::Numerical(format!(
            "step too coarse: tangent/secant angle {tangent_error:e}"
        )));
    }
    Ok(UCurve {
        n,
        base: inner.base,
        t,
        points,
        speed,
        x_speed,
        length,
        level: 0,
        piece: 0,
        anchor: (0.0, opts.span),
        tangent_error,
        integrator: Some(Integrator {
            tracer,
            h,
            stride: opts.store_every,
            steps,
            nodes,
        }),
    })
}

impl UCurve {
    pub fn span(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0) - self.t.first().copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `γ(t)`, re-integrated from the nearest stored node. Only integrated
    /// curves support this.
    pub fn point_at(&self, t: f64) -> Result<[Angle; 4]> {
        let it = self
            .integrator
            .as_ref()
            .ok_or_else(|| Error::InvalidParams("curve has no integrator".into()))?;
        let t = t.clamp(0.0, it.steps as f64 * it.h);
        let i = ((t / it.h).floor() as usize).min(it.steps);
        let node = (i / it.stride).min(it.nodes.len() - 1);
        let mut cur = it.nodes[node];
        let start = node * it.stride;
        for _ in start..i {
            cur = it.tracer.step(&cur, it.h, it.h)?;
        }
        let rest = t - i as f64 * it.h;
        if rest > 0.0 {
            cur = it.tracer.step(&cur, rest, it.h)?;
        }
        Ok(cur)
    }

    /// `‖dγ/dt‖` at an arbitrary point of an integrated curve.
    pub fn speed_at(&self, m: &[Angle; 4]) -> Result<f64> {
        let it = self
            .integrator
            .as_ref()
            .ok_or_else(|| Error::InvalidParams("curve has no integrator".into()))?;
        Ok(bundles::norm(&it.tracer.tangent(m)?))
    }

    /// Cumulative arclength at each sample (trapezoid in t).
    pub fn arclength(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for i in 0..self.len() {
            if i > 0 {
                acc += 0.5 * (self.speed[i] + self.speed[i - 1]) * (self.t[i] - self.t[i - 1]);
            }
            s.push(acc);
        }
        s
    }

    pub fn x_speed_range(&self) -> (f64, f64) {
        let lo = self.x_speed.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .x_speed
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    fn skew(&self) -> Option<&SkewProduct> {
        match &self.integrator.as_ref()?.tracer {
            Tracer::Exact { skew, .. } => Some(skew),
            Tracer::Generic { .. } => None,
        }
    }
}

/// `[2π/(λ^N(|P_x e^u| + 3λ^N)), 2π/(λ^N(|P_x e^u| - 3λ^N))]`.
pub fn length_bounds(skew: &SkewProduct) -> (f64, f64) {
    let l = skew.lambda_n();
    let p = skew.matrix.px_eu().abs();
    (TAU / (l * (p + 3.0 * l)), TAU / (l * (p - 3.0 * l)))
}

/// How the center field along a curve is given.
#[derive(Clone, Debug)]
pub enum XSpec {
    Constant([f64; 2]),
    /// One vector per sample.
    Values(Vec<[f64; 2]>),
}

/// A u-curve with a unit center field.
#[derive(Clone, Debug)]
pub struct AdaptedField {
    pub curve: UCurve,
    pub x: Vec<[f64; 2]>,
    pub holder: f64,
    pub class: Class,
    constant: Option<[f64; 2]>,
}

pub fn make_adapted_field(curve: UCurve, spec: XSpec) -> Result<AdaptedField> {
    if curve.is_empty() {
        return Err(Error::InvalidParams("empty curve".into()));
    }
    let (x, constant) = match spec {
        XSpec::Constant(v) => {
            if norm2(v) == 0.0 || !norm2(v).is_finite() {
                return Err(Error::InvalidParams("zero field".into()));
            }
            let u = unit2(v);
            (vec![u; curve.len()], Some(u))
        }
        XSpec::Values(vs) => {
            if vs.len() != curve.len() {
                return Err(Error::Dimension {
                    expected: curve.len(),
                    got: vs.len(),
                });
            }
            (vs.into_iter().map(unit2).collect(), None)
        }
    };
    let holder = if constant.is_some() {
        0.0
    } else {
        holder_constant(&curve.arclength(), &x)
    };
    let class = if x.iter().all(|v| in_cone(curve.n, *v)) {
        Class::Good
    } else {
        Class::Bad
    };
    Ok(AdaptedField {
        curve,
        x,
        holder,
        class,
        constant,
    })
}

fn thinned(len: usize) -> Vec<usize> {
    if len <= HOLDER_POINTS {
        (0..len).collect()
    } else {
        (0..HOLDER_POINTS)
            .map(|i| i * (len - 1) / (HOLDER_POINTS - 1))
            .collect()
    }
}

/// `max ‖X_i - X_j‖ / d(i, j)^{1/2}` over sample pairs, `d` measured along
/// the curve.
pub fn holder_constant(s: &[f64], x: &[[f64; 2]]) -> f64 {
    let idx = thinned(x.len());
    let mut best: f64 = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let d = (s[j] - s[i]).abs();
            if d > 0.0 {
                let dx = norm2([x[i][0] - x[j][0], x[i][1] - x[j][1]]);
                best = best.max(dx / d.sqrt());
            }
        }
    }
    best
}

impl AdaptedField {
    /// `max ‖X_i - X_j‖` over sample pairs.
    pub fn variation(&self) -> f64 {
        if self.constant.is_some() {
            return 0.0;
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in &self.x {
            for c in 0..2 {
                lo[c] = lo[c].min(v[c]);
                hi[c] = hi[c].max(v[c]);
            }
        }
        // The bounding-box diagonal bounds the diameter from above; the pair
        // search is exact for small fields.
        if self.x.len() <= HOLDER_POINTS {
            let mut best: f64 = 0.0;
            for i in 0..self.x.len() {
                for j in i + 1..self.x.len() {
                    best = best.max(norm2([
                        self.x[i][0] - self.x[j][0],
                        self.x[i][1] - self.x[j][1],
                    ]));
                }
            }
            best
        } else {
            norm2([hi[0] - lo[0], hi[1] - lo[1]])
        }
    }

    /// The field at an arbitrary parameter of the curve.
    pub fn at(&self, t: f64) -> [f64; 2] {
        if let Some(c) = self.constant {
            return c;
        }
        let ts = &self.curve.t;
        let k = ts
            .partition_point(|&s| s <= t)
            .clamp(1, ts.len().max(2) - 1);
        if ts.len() == 1 {
            return self.x[0];
        }
        let (a, b) = (ts[k - 1], ts[k]);
        let w = ((t - a) / (b - a)).clamp(0.0, 1.0);
        unit2([
            (1.0 - w) * self.x[k - 1][0] + w * self.x[k][0],
            (1.0 - w) * self.x[k - 1][1] + w * self.x[k][1],
        ])
    }

    fn integrand(&self, x: f64, v: [f64; 2]) -> f64 {
        norm2(push_center(&self.curve.base, x, v)).ln()
    }

    /// Composite midpoint rule in arclength using every `stride`-th sample.
    pub fn expectation_with(&self, stride: usize) -> Result<f64> {
        let c = &self.curve;
        if c.len() < 2 {
            return Err(Error::InvalidParams(
                "expectation needs at least two samples".into(),
            ));
        }
        let mut idx: Vec<usize> = (0..c.len()).step_by(stride.max(1)).collect();
        if *idx.last().expect("nonempty") != c.len() - 1 {
            idx.push(c.len() - 1);
        }
        let s = c.arclength();
        let parts: Vec<Result<(f64, f64)>> = idx
            .windows(2)
            .map(|w| {
                let (i, j) = (w[0], w[1]);
                let ds = s[j] - s[i];
                let tm = 0.5 * (c.t[i] + c.t[j]);
                // x is affine in t up to O(λ^N) along a u-curve.
                let xm = c.points[i][0].radians() + 0.5 * c.points[j][0].diff(c.points[i][0]);
                Ok((self.integrand(xm, self.at(tm)) * ds, ds))
            })
            .collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for p in parts {
            let (a, b) = p?;
            num += a;
            den += b;
        }
        Ok(num / den)
    }

    /// `E(γ, X) = (1/|γ|) ∫_γ log ‖d_m f(X)‖ dγ`, checked against the same
    /// rule on a grid twice as coarse.
    pub fn expectation(&self) -> Result<f64> {
        let fine = self.expectation_with(1)?;
        if self.curve.len() >= 5 {
            let coarse = self.expectation_with(2)?;
            if (fine - coarse).abs() > QUAD_TOL {
                return Err(Error::Numerical(format!(
                    "quadrature not converged: {fine} vs {coarse}"
                )));
            }
        }
        Ok(fine)
    }
}

pub fn expectation_e(field: &AdaptedField) -> Result<f64> {
    field.expectation()
}

/// The level-k pieces of `f^k ∘ γ`, built on demand.
pub struct Pushed<'a> {
    pub root: &'a AdaptedField,
    pub k: usize,
    skew: SkewProduct,
    /// μ^{2kN}.
    pub growth: f64,
    /// `[μ^{2kN}]`, the number of full pieces.
    pub count: u64,
}

/// One materialised piece with its transported field.
#[derive(Clone, Debug)]
pub struct Piece {
    pub field: AdaptedField,
    /// Largest deviation of `‖d(f^k∘γ)/dt‖ / (μ^{2kN}‖dγ/dt‖)` from 1.
    pub speed_ratio_error: f64,
    /// Jacobian range over the samples, when requested.
    pub jacobian: Option<(f64, f64)>,
}

pub fn push_field(field: &AdaptedField, k: usize) -> Result<Pushed<'_>> {
    let skew = field
        .curve
        .skew()
        .ok_or(Error::NotSkew("push_field"))?
        .clone();
    let growth = skew.fiber_mu().powi(k as i32);
    if growth * field.curve.span() / TAU > 1e12 {
        return Err(Error::InvalidParams(format!(
            "level {k} pieces are below parameter resolution"
        )));
    }
    let count = (growth * field.curve.span() / TAU).floor() as u64;
    Ok(Pushed {
        root: field,
        k,
        skew,
        growth,
        count,
    })
}

impl Pushed<'_> {
    /// Root-parameter interval of piece `j` (1-based); `count + 1` is the
    /// leftover.
    pub fn interval(&self, j: u64) -> (f64, f64) {
        let a = TAU * (j - 1) as f64 / self.growth;
        let b = if j > self.count {
            self.root.curve.span()
        } else {
            TAU * j as f64 / self.growth
        };
        (a, b)
    }

    /// Pushes the root sample at parameter `t` forward `k` times; returns the
    /// image point and the unnormalised transported vector.
    pub fn push_point(&self, t: f64) -> Result<([Angle; 4], [f64; 2], [Angle; 4])> {
        let m0 = self.root.curve.point_at(t)?;
        let mut v = self.root.at(t);
        let mut p = m0;
        for _ in 0..self.k {
            v = push_center(&self.skew.base, p[0].radians(), v);
            let n = norm2(v);
            v = [v[0] / n, v[1] / n];
            p = self.skew.eval4(&p);
        }
        Ok((p, v, m0))
    }

    /// Piece `j` sampled at `samples` parameters including both ends.
    pub fn piece(&self, j: u64, samples: usize, jacobian: Option<&MapModel>) -> Result<Piece> {
        if j == 0 || j > self.count + 1 {
            return Err(Error::InvalidParams(format!(
                "piece index {j} out of range"
            )));
        }
        let samples = samples.max(2);
        let (a, b) = self.interval(j);
        let c = &self.root.curve;
        let mut t = Vec::with_capacity(samples);
        let mut points = Vec::with_capacity(samples);
        let mut speed = Vec::with_capacity(samples);
        let mut x_speed = Vec::with_capacity(samples);
        let mut xs = Vec::with_capacity(samples);
        let mut ratio_err: f64 = 0.0;
        let mut jac = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..samples {
            let ti = a + (b - a) * i as f64 / (samples - 1) as f64;
            let (p, v, m0) = self.push_point(ti)?;
            let sp = c.speed_at(&p)?;
            let sp0 = c.speed_at(&m0)?;
            ratio_err = ratio_err.max((sp / sp0 - 1.0).abs());
            let alpha = bundles::alpha(&self.skew, &p, DEFAULT_TOL)?;
            t.push(self.growth * ti - TAU * (j - 1) as f64);
            points.push(p);
            speed.push(sp);
            x_speed.push(alpha.base[0] / (self.skew.lambda_n() * self.skew.matrix.px_eu().abs()));
            xs.push(v);
            if let Some(map) = jacobian {
                let lj = bundles::log_backward_jacobian(map, &p, self.k)?;
                jac = (jac.0.min(lj.exp()), jac.1.max(lj.exp()));
            }
        }
        let mut curve = UCurve {
            n: c.n,
            base: c.base,
            t,
            points,
            speed,
            x_speed,
            length: 0.0,
            level: self.k,
            piece: j,
            anchor: (a, b),
            tangent_error: 0.0,
            integrator: None,
        };
        curve.length = *curve.arclength().last().expect("nonempty");
        let field = make_adapted_field(curve, XSpec::Values(xs))?;
        Ok(Piece {
            field,
            speed_ratio_error: ratio_err,
            jacobian: jacobian.map(|_| jac),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Good/Bad counts of the level-k pieces.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionStats {
    pub level: usize,
    pub mode: Mode,
    /// `[μ^{2kN}]`.
    pub full_pieces: u64,
    /// μ^{2kN}.
    pub growth: f64,
    /// Exact: piece counts. Monte Carlo: hits.
    pub good: u64,
    pub bad: u64,
    pub leftover: u64,
    pub sample_size: u64,
    pub good_fraction: f64,
    pub bad_fraction: f64,
    pub std_err: f64,
    /// `(Σ_G min J^u_{f^{-k}}, Σ_B max J^u_{f^{-k}})`, scaled to all pieces.
    pub weighted: Option<(f64, f64)>,
    /// `Σ_j min (J^u_{f^{-k}} · E(γ_j^k, Y^k))` over full pieces.
    pub weighted_expectation: Option<f64>,
    pub max_speed_ratio_error: f64,
    pub max_holder: f64,
}

impl TransitionStats {
    /// Estimated number of Good full pieces.
    pub fn good_count(&self) -> f64 {
        self.good_fraction * self.growth
    }

    /// Estimated number of Bad pieces, the leftover counted as Bad.
    pub fn bad_count(&self) -> f64 {
        self.bad_fraction * self.growth
    }
}

#[derive(Default)]
struct Acc {
    good: u64,
    bad: u64,
    leftover: u64,
    gmin: f64,
    bmax: f64,
    ratio: f64,
    holder: f64,
    je: f64,
}

impl Acc {
    fn merge(mut self, o: Acc) -> Acc {
        self.good += o.good;
        self.bad += o.bad;
        self.leftover += o.leftover;
        self.gmin += o.gmin;
        self.bmax += o.bmax;
        self.ratio = self.ratio.max(o.ratio);
        self.holder = self.holder.max(o.holder);
        self.je += o.je;
        self
    }
}

/// Classifies the pieces of `f^k ∘ γ`. Exact mode enumerates all of them;
/// Monte Carlo draws root parameters uniformly and classifies the piece each
/// lands in. The leftover piece is tracked separately and counted as Bad in
/// the fractions.
pub fn transition_stats(
    field: &AdaptedField,
    k: usize,
    mode: Mode,
    samples_per_piece: usize,
    jacobian: Option<&MapModel>,
) -> Result<TransitionStats> {
    let pushed = push_field(field, k)?;
    let classify = |j: u64| -> Result<Acc> {
        let p = pushed.piece(j, samples_per_piece, jacobian)?;
        let mut a = Acc {
            ratio: p.speed_ratio_error,
            holder: p.field.holder,
            ..Acc::default()
        };
        let good = j <= pushed.count && p.field.class == Class::Good;
        if j > pushed.count {
            a.leftover = 1;
        } else if good {
            a.good = 1;
        } else {
            a.bad = 1;
        }
        if let Some((lo, hi)) = p.jacobian {
            if j <= pushed.count {
                if good {
                    a.gmin = lo;
                } else {
                    a.bmax = hi;
                }
                let e = p.field.expectation_with(1)?;
                a.je = if e >= 0.0 { lo * e } else { hi * e };
            }
        }
        Ok(a)
    };
    let reduce = |it: Vec<Result<Acc>>| -> Result<Acc> {
        it.into_iter()
            .try_fold(Acc::default(), |acc, a| Ok(acc.merge(a?)))
    };
    let total = pushed.count + 1;
    let (acc, n, scale) = match mode {
        Mode::Exact => {
            if pushed.count as f64 > EXACT_PIECES_MAX {
                return Err(Error::InvalidParams(format!(
                    "{} pieces exceed the exact-mode limit",
                    pushed.count
                )));
            }
            let acc = reduce((1..=total).into_par_iter().map(classify).collect())?;
            (acc, total, 1.0)
        }
        Mode::MonteCarlo { samples, seed: s } => {
            if samples == 0 {
                return Err(Error::InvalidParams("Monte Carlo needs samples".into()));
            }
            let mut rng = seed::task_rng(s, k as u64);
            let span = field.curve.span();
            let js: Vec<u64> = (0..samples)
                .map(|_| {
                    let t: f64 = rng.gen::<f64>() * span;
                    ((t * pushed.growth / TAU).floor() as u64 + 1).min(total)
                })
                .collect();
            let acc = reduce(js.into_par_iter().map(classify).collect())?;
            (acc, samples as u64, total as f64 / samples as f64)
        }
    };
    // Fractions are relative to the full parameter span, in units of pieces.
    let per_piece = TAU / pushed.growth / field.curve.span();
    let (good_fraction, bad_fraction, std_err) = match mode {
        Mode::Exact => {
            let g = acc.good as f64 * per_piece;
            (g, 1.0 - g, 0.0)
        }
        Mode::MonteCarlo { .. } => {
            let p = acc.good as f64 / n as f64;
            (p, 1.0 - p, (p * (1.0 - p) / n as f64).sqrt())
        }
    };
    Ok(TransitionStats {
        level: k,
        mode,
        full_pieces: pushed.count,
        growth: pushed.growth,
        good: acc.good,
        bad: acc.bad,
        leftover: acc.leftover,
        sample_size: n,
        good_fraction,
        bad_fraction,
        std_err,
        weighted: jacobian.map(|_| (acc.gmin * scale, acc.bmax * scale)),
        weighted_expectation: jacobian.map(|_| acc.je * scale),
        max_speed_ratio_error: acc.ratio,
        max_holder: acc.holder,
    })
}

/// The Hölder bound `20 N² λ^N` of an adapted field.
pub fn holder_bound(skew: &SkewProduct) -> f64 {
    let n = skew.n();
    20.0 * n * n * skew.lambda_n()
}

/// A strip of length π on which a Bad field is pushed into Δ, with the
/// slope `n` of the witness sample (infinite for a vertical witness).
pub fn strip_for_bad_field(field: &AdaptedField) -> Result<(StripSpec, f64)> {
    if field.class != Class::Bad {
        return Err(Error::InvalidParams("field is not Bad".into()));
    }
    let w = field
        .x
        .iter()
        .find(|v| !in_cone(field.curve.n, **v))
        .expect("a Bad field has a witness");
    let slope = if w[0] == 0.0 {
        f64::INFINITY
    } else {
        w[1] / w[0]
    };
    Ok((strip_for_slope(slope), slope))
}

/// `{x : sign(cos x) = -sign(n)}`.
pub fn strip_for_slope(n: f64) -> StripSpec {
    if n > 0.0 {
        StripSpec {
            intervals: vec![(FRAC_PI_2, 3.0 * FRAC_PI_2)],
        }
    } else {
        StripSpec {
            intervals: vec![(0.0, FRAC_PI_2), (3.0 * FRAC_PI_2, TAU)],
        }
    }
}

/// Fraction of in-strip samples whose pushed vector lies in Δ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StripCheck {
    pub samples: usize,
    pub in_cone: usize,
    /// Smallest `|slope| ` margin `N^{1/4}|Y_x| - |Y_y|` over unit pushed vectors.
    pub min_margin: f64,
}

/// Pushes the constant field `v` at `samples` uniform x in the strip of its
/// slope and counts how many land in Δ.
pub fn bad_to_good_check<R: Rng + ?Sized>(
    base: &BaseMap,
    n: f64,
    v: [f64; 2],
    samples: usize,
    rng: &mut R,
) -> StripCheck {
    let slope = if v[0] == 0.0 {
        f64::INFINITY
    } else {
        v[1] / v[0]
    };
    let strip = strip_for_slope(slope);
    let q = n.powf(0.25);
    let mut hits = 0;
    let mut margin = f64::INFINITY;
    for _ in 0..samples {
        let mut u: f64 = rng.gen::<f64>() * strip.length();
        let mut x = 0.0;
        for &(a, b) in &strip.intervals {
            if u <= b - a {
                x = a + u;
                break;
            }
            u -= b - a;
        }
        let y = unit2(push_center(base, x, v));
        margin = margin.min(q * y[0].abs() - y[1].abs());
        if in_cone(n, y) {
            hits += 1;
        }
    }
    StripCheck {
        samples,
        in_cone: hits,
        min_margin: margin,
    }
}

/// Outcome of the good-stays-good sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoodToGood {
    pub samples: usize,
    pub passed: usize,
    /// `min |Ω(m) - n|` over the samples.
    pub min_gap: f64,
    /// The cone requirement `N^{-1/4}`.
    pub required: f64,
}

impl GoodToGood {
    pub fn all_pass(&self) -> bool {
        self.passed == self.samples
    }
}

/// Samples `x ∉ Crit` and `|n| ≤ N^{1/4}` (endpoints included) and checks
/// `d_m f(1, n) = (Ω - n, 1) ∈ Δ`.
pub fn good_stays_good_check<R: Rng + ?Sized>(
    n: f64,
    samples: usize,
    rng: &mut R,
) -> Result<GoodToGood> {
    let crit = crit_strip(n)?;
    let base = BaseMap { p: 2, r: n };
    let q = n.powf(0.25);
    let mut passed = 0;
    let mut min_gap = f64::INFINITY;
    let mut drawn = 0;
    while drawn < samples {
        let x = rng.gen::<f64>() * TAU;
        if crit.contains(x) {
            continue;
        }
        let s = match drawn % 8 {
            0 => q,
            1 => -q,
            _ => (2.0 * rng.gen::<f64>() - 1.0) * q,
        };
        drawn += 1;
        let om = base.omega(x);
        min_gap = min_gap.min((om - s).abs());
        if in_cone(n, [om - s, 1.0]) {
            passed += 1;
        }
    }
    Ok(GoodToGood {
        samples,
        passed,
        min_gap,
        required: 1.0 / q,
    })
}

/// `D = max J^u_{g^{-k}}(m) / J^u_{g^{-k}}(m')` over samples of `curve`.
pub fn distortion_estimate(
    curve: &UCurve,
    k: usize,
    map: &MapModel,
    max_points: usize,
) -> Result<f64> {
    if k == 0 {
        return Ok(1.0);
    }
    let idx = {
        let len = curve.len();
        let m = max_points.clamp(2, len.max(2));
        if len <= m {
            (0..len).collect::<Vec<_>>()
        } else {
            (0..m).map(|i| i * (len - 1) / (m - 1)).collect()
        }
    };
    let logs: Vec<f64> = idx
        .par_iter()
        .map(|&i| bundles::log_backward_jacobian(map, &curve.points[i], k))
        .collect::<Result<_>>()?;
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((hi - lo).exp())
}

/// Two estimates of `I_n = (1/|γ|) ∫_γ log ‖d f^n X‖ dγ`: one direct, one as
/// the sum over levels of `(1/|γ|) ∫_γ log ‖d f(Y^k)‖ ∘ f^k dγ`, drawn with
/// independent samples.
#[derive(Clone, Debug, PartialEq)]
pub struct InEstimate {
    pub direct: f64,
    pub direct_se: f64,
    pub levels: Vec<f64>,
    pub level_sum: f64,
    pub level_se: f64,
}

pub fn in_decomposition(
    field: &AdaptedField,
    n_iter: usize,
    samples: usize,
    root_seed: u64,
) -> Result<InEstimate> {
    let c = &field.curve;
    let skew = c.skew().ok_or(Error::NotSkew("in_decomposition"))?.clone();
    if samples < 2 {
        return Err(Error::InvalidParams("need at least two samples".into()));
    }
    // Returns per-level log growth along the orbit of γ(t) and the speed weight.
    let trace = |t: f64| -> Result<(Vec<f64>, f64)> {
        let m0 = c.point_at(t)?;
        let w = c.speed_at(&m0)?;
        let mut v = field.at(t);
        let mut p = m0;
        let mut out = Vec::with_capacity(n_iter);
        for _ in 0..n_iter {
            let u = push_center(&skew.base, p[0].radians(), v);
            let nu = norm2(u);
            out.push(nu.ln());
            v = [u[0] / nu, u[1] / nu];
            p = skew.eval4(&p);
        }
        Ok((out, w))
    };
    let draw = |stream: u64| -> Vec<f64> {
        let mut rng = seed::task_rng(root_seed, stream);
        (0..samples).map(|_| rng.gen::<f64>() * c.span()).collect()
    };
    let weighted = |vals: &[(f64, f64)]| -> (f64, f64) {
        let sw: f64 = vals.iter().map(|v| v.1).sum();
        let mean = vals.iter().map(|v| v.0 * v.1).sum::<f64>() / sw;
        let var = vals
            .iter()
            .map(|v| (v.1 / sw).powi(2) * (v.0 - mean).powi(2))
            .sum::<f64>();
        (mean, var.sqrt())
    };
    let direct_vals: Vec<(f64, f64)> = draw(0)
        .par_iter()
        .map(|&t| trace(t).map(|(l, w)| (l.iter().sum(), w)))
        .collect::<Result<_>>()?;
    let (direct, direct_se) = weighted(&direct_vals);
    let mut levels = Vec::with_capacity(n_iter);
    let mut var = 0.0;
    for k in 0..n_iter {
        let vals: Vec<(f64, f64)> = draw(1 + k as u64)
            .par_iter()
            .map(|&t| trace(t).map(|(l, w)| (l[k], w)))
            .collect::<Result<_>>()?;
        let (m, se) = weighted(&vals);
        levels.push(m);
        var += se * se;
    }
    Ok(InEstimate {
        direct,
        direct_se,
        level_sum: levels.iter().sum(),
        levels,
        level_se: var.sqrt(),
    })
}

/// Smallest `|sin θ^X|` over `x ∉ Crit` for the cone-boundary fields
/// `(1, ±N^{1/4})` and the axis `(1, 0)`, on a grid of `grid` x-values.
pub fn min_sin_theta_off_crit(n: f64, grid: usize) -> Result<f64> {
    let crit = crit_strip(n)?;
    let base = BaseMap { p: 2, r: n };
    let q = n.powf(0.25);
    let mut best = f64::INFINITY;
    for i in 0..grid {
        let x = TAU * (i as f64 + 0.5) / grid as f64;
        if crit.contains(x) {
            continue;
        }
        for s in [-q, 0.0, q] {
            best = best.min(sin_theta(&base, x, [1.0, s]));
        }
    }
    // The extremes sit on the strip boundary.
    for &(a, b) in &crit.intervals {
        for x in [a, b] {
            for s in [-q, q] {
                best = best.min(sin_theta(&base, x, [1.0, s]));
            }
        }
    }
    Ok(best)
}

/// Level-1 statistics of a constant field under the equidistribution
/// surrogate: root x on a uniform midpoint grid, each point standing for the
/// piece whose preimage it lies in.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateStats {
    pub grid: usize,
    pub expectation: f64,
    pub good_fraction: f64,
    pub bad_fraction: f64,
}

pub fn surrogate_stats(n: f64, v: [f64; 2], grid: usize) -> Result<SurrogateStats> {
    if grid == 0 || n.is_nan() || n < 1.0 {
        return Err(Error::InvalidParams(format!(
            "surrogate needs N >= 1 and a grid, got {n}, {grid}"
        )));
    }
    if norm2(v).is_nan() || norm2(v) <= 0.0 {
        return Err(Error::InvalidParams(
            "field direction must be nonzero".into(),
        ));
    }
    let base = BaseMap { p: 2, r: n };
    let u = unit2(v);
    let (sum, good) = (0..grid)
        .into_par_iter()
        .map(|i| {
            let x = TAU * (i as f64 + 0.5) / grid as f64;
            let w = push_center(&base, x, u);
            (norm2(w).ln(), in_cone(n, w) as u64)
        })
        .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let good_fraction = good as f64 / grid as f64;
    Ok(SurrogateStats {
        grid,
        expectation: sum / grid as f64,
        good_fraction,
        bad_fraction: 1.0 - good_fraction,
    })
}

#[cfg(test)]
mod tests;
