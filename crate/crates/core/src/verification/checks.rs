use std::f64::consts::TAU;

use nalgebra::Matrix2;
use rand::Rng;

use super::{Ctx, Margin, Outcome};
use crate::bundles::{self, mul4, norm, Direction, Frames, SymplecticFrame};
use crate::error::Result;
use crate::maps::{Involution, MapModel, MapSpec, SkewProduct};
use crate::torus::{apply_int, Angle, TorusPoint};
use crate::ucurves;

mod curves;

pub(super) use curves::{
    bounds, distortion, fonda, holder_transport, ratio_100, transitions, variation, weighted_sums,
    weighted_total,
};

const FD_STEP: f64 = 1e-4;
const FD_TOL: f64 = 1.01;
const CENTER_PLANE_STEPS: usize = 4;

fn offset4(m: &[Angle; 4], v: &[f64; 4], h: f64) -> [Angle; 4] {
    std::array::from_fn(|i| m[i].add(Angle::offset(v[i] * h)))
}

fn mul2(m: &Matrix2<f64>, v: [f64; 2]) -> [f64; 2] {
    [
        m[(0, 0)] * v[0] + m[(0, 1)] * v[1],
        m[(1, 0)] * v[0] + m[(1, 1)] * v[1],
    ]
}

fn unit2<R: Rng>(rng: &mut R) -> [f64; 2] {
    let a = rng.gen::<f64>() * TAU;
    [a.cos(), a.sin()]
}

fn needs_crit(ctx: &Ctx) -> Option<Outcome> {
    (ctx.n < 2).then(|| Outcome::unavailable("the critical strip needs N >= 2"))
}

pub(super) fn reversibility(ctx: &mut Ctx) -> Result<Outcome> {
    let n = ctx.nf();
    let s = MapModel::new(&MapSpec::standard(n))?;
    let (r, j) = (Involution::R, Involution::J(n));
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.samples {
        let p = TorusPoint::random_t2(&mut ctx.rng);
        let rj = r.apply(&j.apply(&p)?)?;
        let jr = j.apply(&r.apply(&p)?)?;
        worst = worst
            .max(rj.distance(&s.eval(&p)?))
            .max(jr.distance(&s.inverse_eval(&p)?))
            .max(r.apply(&r.apply(&p)?)?.distance(&p))
            .max(j.apply(&j.apply(&p)?)?.distance(&p));
    }
    let mut out = Outcome::default();
    out.push(Margin::at_most("max_residual", worst, 1e-12));
    Ok(out)
}

pub(super) fn inverse_conjugacy(ctx: &mut Ctx) -> Result<Outcome> {
    let n = ctx.n as i64;
    let h = ctx.skew()?.matrix.clone();
    let (an, a2n) = (h.power(-n)?, h.power(-2 * n)?);
    let f = ctx.f()?.clone();
    let (mut round, mut conj): (f64, f64) = (0.0, 0.0);
    for _ in 0..ctx.samples {
        let m = TorusPoint::random_t4(&mut ctx.rng);
        round = round
            .max(f.eval(&f.inverse_eval(&m)?)?.distance(&m))
            .max(f.inverse_eval(&f.eval(&m)?)?.distance(&m));
        let lhs = Involution::RHat.apply(&f.inverse_eval(&Involution::RHat.apply(&m)?)?)?;
        let a = m.angles();
        let fib = apply_int(&an, [a[2], a[3]]);
        let fib2 = apply_int(&a2n, [a[2], a[3]]);
        let x = a[0].radians();
        let rhs = TorusPoint::T4([
            Angle::from_radians(2.0 * x - a[1].radians() + ctx.nf() * x.sin()).add(fib[0]),
            a[0],
            fib2[0],
            fib2[1],
        ]);
        conj = conj.max(lhs.distance(&rhs));
    }
    let mut out = Outcome::default();
    out.push(Margin::at_most("round_trip", round, 1e-10));
    out.push(Margin::at_most("conjugacy", conj, 1e-10));
    Ok(out)
}

pub(super) fn center_norm(ctx: &mut Ctx) -> Result<Outcome> {
    let base = ctx.base();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..ctx.samples {
        let x = ctx.rng.gen::<f64>() * TAU;
        let u = unit2(&mut ctx.rng);
        let w = mul2(&base.derivative(x), u);
        let r = w[0].hypot(w[1]);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let n2 = 2.0 * ctx.nf();
    let mut out = Outcome::default();
    out.push(Margin::at_least("min_norm", lo, 1.0 / n2));
    out.push(Margin::at_most("max_norm", hi, n2));
    Ok(out)
}

/// Central second difference along `v` in fixed point, so the linear fiber
/// parts cancel exactly.
fn second_difference(
    eval: impl Fn(&[Angle; 4]) -> [Angle; 4],
    m: &[Angle; 4],
    v: &[f64; 4],
) -> f64 {
    let h = FD_STEP;
    let (p, q, c) = (eval(&offset4(m, v, h)), eval(&offset4(m, v, -h)), eval(m));
    let d: [f64; 4] = std::array::from_fn(|i| p[i].add(q[i]).diff(c[i].scale(2)) / (h * h));
    norm(&d)
}

/// `d²h(w, w)` for the shear h(x, y, z, w) = (x, y + ε sin(x+z), z, w + ε sin z).
fn shear_second(eps: f64, m: &[Angle; 4], w: &[f64; 4]) -> [f64; 4] {
    let s = w[0] + w[2];
    [
        0.0,
        -eps * m[0].add(m[2]).sin() * s * s,
        0.0,
        -eps * m[2].sin() * w[2] * w[2],
    ]
}

fn shear_derivative(eps: f64, m: &[Angle; 4], w: &[f64; 4]) -> [f64; 4] {
    let c1 = eps * m[0].add(m[2]).cos();
    let c2 = eps * m[2].cos();
    [w[0], w[1] + c1 * (w[0] + w[2]), w[2], w[3] + c2 * w[2]]
}

/// `‖d²g(v, v)‖` and `‖d²g⁻¹(v, v)‖` for g = h_ε ∘ f, in closed form.
fn perturbed_second(skew: &SkewProduct, eps: f64, m: &[Angle; 4], v: &[f64; 4]) -> (f64, f64) {
    let r = skew.base.r;
    let fm = skew.eval4(m);
    let dfv = mul4(&skew.derivative4(m), v);
    let d2f = [-r * m[0].sin() * v[0] * v[0], 0.0, 0.0, 0.0];
    let a = shear_second(eps, &fm, &dfv);
    let b = shear_derivative(eps, &fm, &d2f);
    let fwd: [f64; 4] = std::array::from_fn(|i| a[i] + b[i]);

    let mut hinv = *m;
    hinv[1] = hinv[1].sub(Angle::offset(eps * m[0].add(m[2]).sin()));
    hinv[3] = hinv[3].sub(Angle::offset(eps * m[2].sin()));
    let u = shear_derivative(-eps, m, v);
    let d2fi = [0.0, -r * hinv[1].sin() * u[1] * u[1], 0.0, 0.0];
    let c = mul4(&skew.inverse_derivative4(&hinv), &shear_second(-eps, m, v));
    let back: [f64; 4] = std::array::from_fn(|i| d2fi[i] + c[i]);
    (norm(&fwd), norm(&back))
}

/// Largest second derivatives of g and g⁻¹ along random unit directions.
fn second_derivatives(ctx: &mut Ctx) -> Result<(f64, f64)> {
    let (mut fwd, mut back) = (0.0f64, 0.0f64);
    let skew = ctx.skew()?.clone();
    let f = ctx.f()?.clone();
    let samples = ctx.samples;
    for _ in 0..samples {
        let m: [Angle; 4] = std::array::from_fn(|_| Angle::random(&mut ctx.rng));
        let v = ctx.unit4();
        let (a, b) = if ctx.eps == 0.0 {
            (
                second_difference(|p| f.eval4(p), &m, &v),
                second_difference(|p| f.inverse4(p), &m, &v),
            )
        } else {
            perturbed_second(&skew, ctx.eps, &m, &v)
        };
        fwd = fwd.max(a);
        back = back.max(b);
    }
    Ok((fwd, back))
}

pub(super) fn second_derivative(ctx: &mut Ctx) -> Result<Outcome> {
    let mut out = Outcome::default();
    let (fwd, back) = second_derivatives(ctx)?;
    if ctx.perturbed() {
        let bound = 2.0 * ctx.nf() * FD_TOL;
        out.push(Margin::at_most("d2g", fwd, bound).informational());
        out.push(Margin::at_most("d2g_inv", back, bound).informational());
        out.note("closed-form second derivatives of g; bound (B) reported, not gated");
    } else {
        let bound = ctx.nf() * FD_TOL;
        out.push(Margin::at_most("d2f", fwd, bound));
        out.push(Margin::at_most("d2f_inv", back, bound));
    }
    Ok(out)
}

pub(super) fn partial_hyp_constants(ctx: &mut Ctx) -> Result<Outcome> {
    let skew = ctx.skew()?.clone();
    let (mu, la) = (skew.fiber_mu(), skew.fiber_lambda());
    let n2 = 2.0 * ctx.nf();
    let g = ctx.g()?.clone();
    let pts: Vec<([Angle; 4], f64)> = (0..ctx.samples)
        .map(|_| (ctx.random4(), ctx.rng.gen::<f64>() * TAU))
        .collect();
    let vals: Vec<[f64; 3]> = {
        use rayon::prelude::*;
        pts.par_iter()
            .map(|(m, phi)| {
                let u = bundles::unstable_expansion(&g, m)? / mu;
                let s = bundles::stable_contraction(&g, m)? / la;
                let [a, b] = bundles::center_plane(&g, &TorusPoint::T4(*m), CENTER_PLANE_STEPS)?;
                let v: [f64; 4] = std::array::from_fn(|i| phi.cos() * a[i] + phi.sin() * b[i]);
                let c = norm(&mul4(&g.derivative4(m), &v));
                Ok([u, s, c])
            })
            .collect::<Result<_>>()?
    };
    let range = |i: usize| {
        vals.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v[i]), hi.max(v[i]))
            })
    };
    let (ulo, uhi) = range(0);
    let (slo, shi) = range(1);
    let (clo, chi) = range(2);
    let mut out = Outcome::default();
    out.push(Margin::at_least("unstable_min_over_mu2n", ulo, 0.99));
    out.push(Margin::at_most("unstable_max_over_mu2n", uhi, 1.01));
    out.push(Margin::at_least("stable_min_over_lambda2n", slo, 0.99));
    out.push(Margin::at_most("stable_max_over_lambda2n", shi, 1.01));
    out.push(Margin::at_least("center_min", clo, 1.0 / n2));
    out.push(Margin::at_most("center_max", chi, n2));
    let (fwd, back) = second_derivatives(ctx)?;
    let gate = !ctx.perturbed();
    out.push(Margin::at_most("d2g", fwd, n2 * FD_TOL).gated_if(gate));
    out.push(Margin::at_most("d2g_inv", back, n2 * FD_TOL).gated_if(gate));
    if ctx.perturbed() {
        out.note("(B) defines the neighbourhood and is reported, not gated");
    }
    Ok(out)
}

pub(super) fn alpha_invariance(ctx: &mut Ctx) -> Result<Outcome> {
    let skew = ctx.skew()?.clone();
    let h = &skew.matrix;
    let (ln, l2n, m2n) = (skew.lambda_n(), skew.fiber_lambda(), skew.fiber_mu());
    let (mut inv, mut dev) = (0.0f64, 0.0f64);
    for _ in 0..ctx.samples {
        let m = ctx.random4();
        let fr = bundles::alpha(&skew, &m, bundles::DEFAULT_TOL)?;
        dev = dev.max((fr.base[0] - ln * h.e_u[0]).hypot(fr.base[1]));
        let pushed = mul4(&skew.derivative4(&m), &fr.vector());
        let next = bundles::alpha(&skew, &skew.eval4(&m), bundles::DEFAULT_TOL)?.vector();
        let d: [f64; 4] = std::array::from_fn(|i| pushed[i] - m2n * next[i]);
        inv = inv.max(norm(&d));
    }
    let mut out = Outcome::default();
    out.push(Margin::at_most("invariance_over_mu2n", inv / m2n, 1e-8));
    out.push(Margin::at_most("alpha_deviation", dev, l2n));
    Ok(out)
}

pub(super) fn cone_ratio(ctx: &mut Ctx) -> Result<Outcome> {
    let skew = ctx.skew()?.clone();
    let ln = skew.lambda_n();
    let p = skew.matrix.px_eu();
    let f = ctx.f()?.clone();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..ctx.samples {
        let m = ctx.random4();
        let v = bundles::unstable_direction(&f, &m)?;
        lo = lo.min(v[0].abs());
        hi = hi.max(v[0].abs());
    }
    let mut out = Outcome::default();
    out.push(Margin::at_least("min_vx", lo, ln * (p - 3.0 * ln)));
    out.push(Margin::at_most("max_vx", hi, ln * (p + 3.0 * ln)));
    Ok(out)
}

pub(super) fn omega_offcrit(ctx: &mut Ctx) -> Result<Outcome> {
    if let Some(o) = needs_crit(ctx) {
        return Ok(o);
    }
    let base = ctx.base();
    let crit = ucurves::crit_strip(ctx.nf())?;
    let r = ctx.nf().sqrt();
    let (mut om_gap, mut growth_gap) = (f64::INFINITY, f64::INFINITY);
    let mut drawn = 0;
    while drawn < ctx.samples {
        let x = ctx.rng.gen::<f64>() * TAU;
        if crit.contains(x) {
            continue;
        }
        drawn += 1;
        om_gap = om_gap.min(base.omega(x).abs() - (r - 2.0));
        let v = unit2(&mut ctx.rng);
        let w = ucurves::push_center(&base, x, v);
        let s = ucurves::sin_theta(&base, x, v);
        growth_gap = growth_gap.min(w[0].hypot(w[1]) - (r * s - 2.0));
    }
    let mut out = Outcome::default();
    out.push(Margin::at_least("min_abs_omega_minus_bound", om_gap, 0.0));
    out.push(Margin::at_least("min_growth_minus_bound", growth_gap, 0.0));
    Ok(out)
}

pub(super) fn sin_theta(ctx: &mut Ctx) -> Result<Outcome> {
    if let Some(o) = needs_crit(ctx) {
        return Ok(o);
    }
    let s = ucurves::min_sin_theta_off_crit(ctx.nf(), ctx.samples)?;
    let mut out = Outcome::default();
    out.push(Margin::at_least(
        "min_sin_theta",
        s,
        ctx.nf().powf(-1.0 / 3.0),
    ));
    Ok(out)
}

pub(super) fn good_to_good(ctx: &mut Ctx) -> Result<Outcome> {
    if let Some(o) = needs_crit(ctx) {
        return Ok(o);
    }
    let r = ucurves::good_stays_good_check(ctx.nf(), ctx.samples, &mut ctx.rng)?;
    let mut out = Outcome::default();
    out.push(Margin::at_least(
        "fraction_in_cone",
        r.passed as f64 / r.samples as f64,
        1.0,
    ));
    out.push(Margin::at_least("min_gap", r.min_gap, r.required));
    Ok(out)
}

pub(super) fn bad_to_good(ctx: &mut Ctx) -> Result<Outcome> {
    let base = ctx.base();
    let n = ctx.nf();
    let mut worst: f64 = 1.0;
    for v in [
        [0.0, 1.0],
        [1.0, n.sqrt()],
        [1.0, -n.sqrt()],
        [1.0, n],
        [1.0, -n],
    ] {
        let c = ucurves::bad_to_good_check(&base, n, v, ctx.samples, &mut ctx.rng);
        worst = worst.min(c.in_cone as f64 / c.samples as f64);
    }
    let edge = ucurves::bad_to_good_check(
        &base,
        n,
        [1.0, 1.01 * n.powf(0.25)],
        ctx.samples,
        &mut ctx.rng,
    );
    let mut out = Outcome::default();
    out.push(Margin::at_least("min_fraction_in_cone", worst, 1.0));
    out.push(
        Margin::at_least(
            "fraction_in_cone_near_boundary",
            edge.in_cone as f64 / edge.samples as f64,
            1.0,
        )
        .informational(),
    );
    out.note("witness slopes: vertical, ±√N, ±N");
    Ok(out)
}

pub(super) fn jacobian_range(ctx: &mut Ctx) -> Result<Outcome> {
    let l2n = ctx.skew()?.fiber_lambda();
    let g = ctx.g()?.clone();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..ctx.samples {
        let m = TorusPoint::T4(ctx.random4());
        let j = bundles::unstable_jacobian(&g, &m, 1, Direction::Backward)? / l2n;
        lo = lo.min(j);
        hi = hi.max(j);
    }
    let mut out = Outcome::default();
    out.push(Margin::at_least("min_j_over_lambda2n", lo, 1.0 / 1.01));
    out.push(Margin::at_most("max_j_over_lambda2n", hi, 1.0 / 0.99));
    Ok(out)
}

pub(super) fn symplectic(ctx: &mut Ctx) -> Result<Outcome> {
    let skew = ctx.skew()?.clone();
    let frames = Frames::new(&skew)?;
    let (mut anti, mut inv, mut degen) = (0.0f64, 0.0f64, f64::INFINITY);
    for i in 0..ctx.samples {
        let m = ctx.random4();
        let (u, v) = (ctx.unit4(), ctx.unit4());
        let (du, dv) = (bundles::to_dd(&u), bundles::to_dd(&v));
        let here = SymplecticFrame::at(&frames, &m)?;
        let there = SymplecticFrame::at(&frames, &skew.eval4(&m))?;
        anti = anti.max((here.omega(&du, &dv) + here.omega(&dv, &du)).to_f64().abs());
        let (pu, pv) = (
            bundles::push_dd(&skew, &m, &du),
            bundles::push_dd(&skew, &m, &dv),
        );
        inv = inv.max(
            (there.omega(&pu, &pv) - here.omega(&du, &dv))
                .to_f64()
                .abs(),
        );
        if i % 10 == 0 {
            let basis = [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
                bundles::alpha(&skew, &m, bundles::SYMPLECTIC_TOL)?.vector(),
                bundles::stable_frame(&skew, &m, bundles::SYMPLECTIC_TOL)?.vector(),
            ];
            let gram: Vec<Vec<f64>> = basis
                .iter()
                .map(|a| {
                    basis
                        .iter()
                        .map(|b| here.omega(&bundles::to_dd(a), &bundles::to_dd(b)).to_f64())
                        .collect()
                })
                .collect();
            degen = degen.min(crate::dd::det(&gram).to_f64().abs());
        }
    }
    let mut out = Outcome::default();
    out.push(Margin::at_most("antisymmetry", anti, 1e-12));
    out.push(Margin::at_most("invariance", inv, 1e-8));
    out.push(Margin::at_least("min_abs_det_gram", degen, 1e-8));
    Ok(out)
}

/// Distance between two planes given by orthonormal bases, as the spectral
/// norm bound `‖P − P'‖_F / √2`.
fn plane_distance(a: &[[f64; 4]; 2], b: &[[f64; 4]; 2]) -> f64 {
    let proj = |p: &[[f64; 4]; 2], i: usize, j: usize| p[0][i] * p[0][j] + p[1][i] * p[1][j];
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let d = proj(a, i, j) - proj(b, i, j);
            s += d * d;
        }
    }
    (s / 2.0).sqrt()
}

pub(super) fn holder_center_empirical(ctx: &mut Ctx) -> Result<Outcome> {
    let g = ctx.g()?.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.samples {
        let m = ctx.random4();
        let dir = ctx.unit4();
        let delta = 10f64.powf(-6.0 + 4.0 * ctx.rng.gen::<f64>());
        let m2 = offset4(&m, &dir, delta);
        let a = bundles::center_plane(&g, &TorusPoint::T4(m), CENTER_PLANE_STEPS)?;
        let b = bundles::center_plane(&g, &TorusPoint::T4(m2), CENTER_PLANE_STEPS)?;
        worst = worst.max(plane_distance(&a, &b) / delta.sqrt());
    }
    let mut out = Outcome::default();
    out.push(Margin::at_most(
        "holder_half_constant",
        worst,
        f64::INFINITY,
    ));
    out.note("empirical 1/2-Hölder quotient of E^c over pairs at distance 1e-6..1e-2");
    Ok(out)
}
