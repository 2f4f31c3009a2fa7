//! Checks along u-curves of f_N and the pieces of their images.

use rand::Rng;
use rayon::prelude::*;

use super::super::{Ctx, Margin, Outcome};
use crate::error::Result;
use crate::ucurves::{
    self, make_adapted_field, push_field, surrogate_stats, transition_stats, AdaptedField, Class,
    Mode, TransitionStats, UCurve, UCurveOptions, XSpec,
};

/// Piece samples enumerated exactly up to this budget; Monte Carlo beyond.
const EXACT_BUDGET: u64 = 160_000;
const CLASSIFY_SAMPLES: usize = 8;
const PIECE_SAMPLES: usize = 256;
const EXPECTATION_SAMPLES: usize = 256;
const DISTORTION_LEVEL: usize = 10;
const PERTURBED_SPAN: f64 = 0.01;
/// N from which the "≥ 100 times" comparison is expected to hold.
const RATIO_MIN_N: u32 = 29;
const SURROGATE_GRID: usize = 1 << 18;
const SURROGATE_NOTE: &str = "equidistribution surrogate";

fn root(ctx: &Ctx, i: usize) -> Result<Option<UCurve>> {
    if !ctx.curves_available() {
        return Ok(None);
    }
    ctx.cache.curve(ctx.n, i).map(Some)
}

fn out_of_range() -> Outcome {
    Outcome::unavailable(&format!(
        "u-curves are integrated for N <= {}",
        ucurves::N_CURVE_MAX
    ))
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let r = v[0].hypot(v[1]);
    [v[0] / r, v[1] / r]
}

fn constant(curve: UCurve, v: [f64; 2]) -> Result<AdaptedField> {
    make_adapted_field(curve, XSpec::Constant(unit(v)))
}

fn mode(ctx: &mut Ctx, field: &AdaptedField, k: usize, per_piece: usize) -> Result<Mode> {
    let count = push_field(field, k)?.count;
    Ok(if count.saturating_mul(per_piece as u64) <= EXACT_BUDGET {
        Mode::Exact
    } else {
        Mode::MonteCarlo {
            samples: ctx.samples,
            seed: ctx.rng.gen(),
        }
    })
}

fn describe(s: &TransitionStats) -> String {
    match s.mode {
        Mode::Exact => format!("k={} exact over {} pieces", s.level, s.full_pieces + 1),
        Mode::MonteCarlo { samples, .. } => {
            format!(
                "k={} Monte Carlo, {samples} of {} pieces",
                s.level,
                s.full_pieces + 1
            )
        }
    }
}

/// Transported fields on randomly chosen pieces of `f ∘ γ`, for a good and a
/// bad root field.
fn sample_pieces(ctx: &mut Ctx) -> Result<Option<Vec<AdaptedField>>> {
    let Some(curve) = root(ctx, 0)? else {
        return Ok(None);
    };
    let r = ctx.nf().sqrt();
    let roots = [
        constant(curve.clone(), [1.0, 0.0])?,
        constant(curve, [1.0, r])?,
    ];
    let mut picks = Vec::new();
    for (i, f) in roots.iter().enumerate() {
        let count = push_field(f, 1)?.count;
        for _ in 0..ctx.samples.div_ceil(2) {
            picks.push((i, ctx.rng.gen_range(1..=count)));
        }
    }
    let pieces = picks
        .par_iter()
        .map(|&(i, j)| {
            Ok(push_field(&roots[i], 1)?
                .piece(j, PIECE_SAMPLES, None)?
                .field)
        })
        .collect::<Result<_>>()?;
    Ok(Some(pieces))
}

pub fn variation(ctx: &mut Ctx) -> Result<Outcome> {
    let Some(pieces) = sample_pieces(ctx)? else {
        return Ok(out_of_range());
    };
    let worst = pieces.iter().map(|p| p.variation()).fold(0.0, f64::max);
    let mut out = Outcome::default();
    out.push(Margin::at_most(
        "max_variation",
        worst,
        ctx.skew()?.lambda_n().powf(1.0 / 3.0),
    ));
    Ok(out)
}

pub fn holder_transport(ctx: &mut Ctx) -> Result<Outcome> {
    let Some(pieces) = sample_pieces(ctx)? else {
        return Ok(out_of_range());
    };
    let worst = pieces.iter().map(|p| p.holder).fold(0.0, f64::max);
    let mut out = Outcome::default();
    out.push(Margin::at_most(
        "max_holder",
        worst,
        ucurves::holder_bound(ctx.skew()?),
    ));
    Ok(out)
}

pub fn bounds(ctx: &mut Ctx) -> Result<Outcome> {
    let n = ctx.nf();
    let q = n.powf(0.25);
    // One good and one bad constant field per curve.
    let slopes: Vec<([f64; 2], [f64; 2])> = (0..ctx.curves)
        .map(|_| {
            let good = [1.0, (2.0 * ctx.rng.gen::<f64>() - 1.0) * q];
            let s = q * 1.01 + ctx.rng.gen::<f64>() * (n - q);
            let sign = if ctx.rng.gen::<bool>() { 1.0 } else { -1.0 };
            let bad = if ctx.rng.gen::<f64>() < 0.2 {
                [0.0, 1.0]
            } else {
                [1.0, sign * s]
            };
            (good, bad)
        })
        .collect();
    let cache = ctx.cache;
    let nn = ctx.n;
    let exact = ctx.curves_available();
    let es: Vec<(f64, f64)> = slopes
        .par_iter()
        .enumerate()
        .map(|(i, (good, bad))| {
            if !exact {
                let e = |v| {
                    Ok::<_, crate::error::Error>(surrogate_stats(n, v, SURROGATE_GRID)?.expectation)
                };
                return Ok((e(*good)?, e(*bad)?));
            }
            let curve = cache.curve(nn, i)?;
            let g = constant(curve.clone(), *good)?;
            let b = constant(curve, *bad)?;
            debug_assert_eq!(g.class, Class::Good);
            debug_assert_eq!(b.class, Class::Bad);
            Ok((g.expectation()?, b.expectation()?))
        })
        .collect::<Result<_>>()?;
    let good_min = es.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let all_min = es
        .iter()
        .map(|e| e.0.min(e.1))
        .fold(f64::INFINITY, f64::min);
    let mut out = Outcome::default();
    out.push(Margin::at_least("min_e_good", good_min, n.ln() / 7.0));
    out.push(Margin::at_least("min_e_all", all_min, -(2.0 * n).ln()));
    out.note(format!(
        "{} good and {} bad constant fields",
        es.len(),
        es.len()
    ));
    if !exact {
        out.note(SURROGATE_NOTE);
    }
    Ok(out)
}

/// Loosening applied to Monte Carlo estimates.
fn slack(s: &TransitionStats) -> f64 {
    3.0 * s.std_err
}

/// Level-1 good fraction of a constant field under the surrogate.
fn surrogate_fraction(n: f64, v: [f64; 2]) -> Result<f64> {
    Ok(surrogate_stats(n, v, SURROGATE_GRID)?.good_fraction)
}

pub fn transitions(ctx: &mut Ctx) -> Result<Outcome> {
    let n = ctx.nf();
    let Some(curve) = root(ctx, 0)? else {
        let mut out = Outcome::default();
        out.push(Margin::at_least(
            "bad_field_good_fraction",
            surrogate_fraction(n, [1.0, n.sqrt()])?,
            1.0 / 3.0,
        ));
        out.push(Margin::at_most(
            "good_field_bad_fraction",
            1.0 - surrogate_fraction(n, [1.0, 0.0])?,
            10.0 / (std::f64::consts::TAU * n.sqrt()),
        ));
        out.note(SURROGATE_NOTE);
        return Ok(out);
    };
    let good = constant(curve.clone(), [1.0, 0.0])?;
    let bad = constant(curve, [1.0, n.sqrt()])?;
    let mg = mode(ctx, &good, 1, CLASSIFY_SAMPLES)?;
    let sg = transition_stats(&good, 1, mg, CLASSIFY_SAMPLES, None)?;
    let mb = mode(ctx, &bad, 1, CLASSIFY_SAMPLES)?;
    let sb = transition_stats(&bad, 1, mb, CLASSIFY_SAMPLES, None)?;
    let mut out = Outcome::default();
    out.push(Margin::at_least(
        "bad_field_good_fraction",
        sb.good_fraction,
        1.0 / 3.0 - slack(&sb),
    ));
    out.push(Margin::at_most(
        "good_field_bad_fraction",
        sg.bad_fraction,
        10.0 / (std::f64::consts::TAU * n.sqrt()) + slack(&sg),
    ));
    out.note(describe(&sb));
    Ok(out)
}

fn ratio(good: f64, bad: f64) -> f64 {
    if bad == 0.0 {
        f64::INFINITY
    } else {
        good / bad
    }
}

pub fn ratio_100(ctx: &mut Ctx) -> Result<Outcome> {
    let mut out = Outcome::default();
    let Some(curve) = root(ctx, 0)? else {
        let g = surrogate_fraction(ctx.nf(), [1.0, 0.0])?;
        out.push(Margin::at_least("good_over_bad", ratio(g, 1.0 - g), 100.0));
        out.note(SURROGATE_NOTE);
        return Ok(out);
    };
    let good = constant(curve, [1.0, 0.0])?;
    let m = mode(ctx, &good, 1, CLASSIFY_SAMPLES)?;
    let s = transition_stats(&good, 1, m, CLASSIFY_SAMPLES, None)?;
    out.push(Margin::at_least(
        "good_over_bad",
        ratio(s.good as f64, s.bad as f64),
        100.0,
    ));
    out.note(describe(&s));
    Ok(out)
}

pub fn distortion(ctx: &mut Ctx) -> Result<Outcome> {
    let mut out = Outcome::default();
    let curve = if ctx.perturbed() {
        let opts = UCurveOptions {
            span: PERTURBED_SPAN,
            store_every: 4,
            ..UCurveOptions::default()
        };
        out.note(format!("u-curve segment of g with span {PERTURBED_SPAN}"));
        out.report_only = true;
        ucurves::integrate_ucurve(ctx.g()?, &ctx.cache.start(0), opts)?
    } else {
        match root(ctx, 0)? {
            Some(c) => c,
            None => return Ok(out_of_range()),
        }
    };
    let d = ucurves::distortion_estimate(&curve, DISTORTION_LEVEL, ctx.g()?, ctx.samples)?;
    out.push(Margin::at_most("distortion", d, 1.1));
    out.note(format!("k={DISTORTION_LEVEL}"));
    Ok(out)
}

/// Level-1 statistics of a good field with backward Jacobians.
fn weighted(ctx: &mut Ctx, samples_per_piece: usize) -> Result<Option<(TransitionStats, UCurve)>> {
    let Some(curve) = root(ctx, 0)? else {
        return Ok(None);
    };
    let good = constant(curve.clone(), [1.0, 0.0])?;
    let m = mode(ctx, &good, 1, samples_per_piece)?;
    let f = ctx.f()?.clone();
    let s = transition_stats(&good, 1, m, samples_per_piece, Some(&f))?;
    Ok(Some((s, curve)))
}

pub fn weighted_sums(ctx: &mut Ctx) -> Result<Outcome> {
    let Some((s, _)) = weighted(ctx, CLASSIFY_SAMPLES)? else {
        return Ok(out_of_range());
    };
    let (g, b) = s.weighted.expect("jacobians requested");
    let mut out = Outcome::default();
    out.push(Margin::at_least("good_min_j", g, 0.01));
    out.push(
        Margin::at_least(
            "good_min_j_over_bad_max_j",
            g / b.max(f64::MIN_POSITIVE),
            100.0,
        )
        .gated_if(ctx.n >= RATIO_MIN_N),
    );
    if ctx.n < RATIO_MIN_N {
        out.note(format!("ratio reported below N = {RATIO_MIN_N}"));
    }
    out.note(describe(&s));
    Ok(out)
}

pub fn weighted_total(ctx: &mut Ctx) -> Result<Outcome> {
    let Some((s, curve)) = weighted(ctx, CLASSIFY_SAMPLES)? else {
        return Ok(out_of_range());
    };
    let (g, b) = s.weighted.expect("jacobians requested");
    let d = ucurves::distortion_estimate(&curve, 1, ctx.f()?, 2_000)?;
    let mut out = Outcome::default();
    out.push(Margin::at_least("sum_lower", g + b, 1.0 / (2.0 * d)));
    out.push(Margin::at_most("sum_upper", g + b, 2.0 * d));
    out.note(format!("D = {d:.6}; {}", describe(&s)));
    Ok(out)
}

pub fn fonda(ctx: &mut Ctx) -> Result<Outcome> {
    let Some((s, _)) = weighted(ctx, EXPECTATION_SAMPLES)? else {
        return Ok(out_of_range());
    };
    let v = s.weighted_expectation.expect("jacobians requested");
    let mut out = Outcome::default();
    out.push(Margin::at_least("sum_min_j_e", v, ctx.nf().ln() / 1000.0));
    out.note(describe(&s));
    Ok(out)
}
