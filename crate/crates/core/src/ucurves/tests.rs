use super::*;
use crate::maps::{HyperbolicMatrix, MapSpec};
use crate::seed::task_rng;
use std::f64::consts::PI;

fn f_n(n: u32) -> MapModel {
    MapModel::new(&MapSpec::f_n(n)).unwrap()
}

fn curve(n: u32, m0: TorusPoint, store_every: usize) -> UCurve {
    let opts = UCurveOptions {
        store_every,
        ..UCurveOptions::default()
    };
    integrate_ucurve(&f_n(n), &m0, opts).unwrap()
}

#[test]
fn omega_basis() {
    let base = BaseMap { p: 2, r: 10.0 };
    let (om, s, u) = center_frame(&base, FRAC_PI_2);
    assert!((om - 2.0).abs() < 1e-14);
    let (om0, s0, u0) = center_frame(&base, 0.0);
    assert_eq!(om0, 12.0);
    assert_eq!(s0[0] * u0[0] + s0[1] * u0[1], 0.0);
    assert_eq!(s[0] * u[0] + s[1] * u[1], 0.0);

    let map = f_n(10);
    let mut rng = task_rng(1, 0);
    for _ in 0..100 {
        let m = TorusPoint::random_t4(&mut rng);
        let d = map.derivative(&m).unwrap();
        let x = m.x().radians();
        let (om, s, u) = center_frame(&base, x);
        let ds = |v: [f64; 2]| {
            [
                d[(0, 0)] * v[0] + d[(0, 1)] * v[1],
                d[(1, 0)] * v[0] + d[(1, 1)] * v[1],
            ]
        };
        let a = ds(s);
        let b = ds(u);
        assert!(a[0].abs() < 1e-12 && (a[1] - 1.0).abs() < 1e-12);
        assert!((b[0] - (1.0 + om * om)).abs() < 1e-12 * (1.0 + om * om));
        assert!((b[1] - om).abs() < 1e-12);
        // The fiber rows vanish on E^c.
        assert_eq!(d[(2, 0)], 0.0);
        assert_eq!(d[(3, 1)], 0.0);
    }
}

#[test]
fn critical_strip_geometry() {
    for n in [2.0, 5.0, 10.0, 16.0, 100.0, 1e4] {
        let c = crit_strip(n).unwrap();
        let r = n.sqrt();
        let (b1, b2) = c.intervals[0];
        let (b3, b4) = c.intervals[1];
        if n >= 5.0 {
            assert!(
                -2.0 / r < b1 - FRAC_PI_2 && b1 - FRAC_PI_2 < -1.0 / r,
                "b1, N={n}"
            );
            assert!(
                1.0 / r < b2 - FRAC_PI_2 && b2 - FRAC_PI_2 < 2.0 / r,
                "b2, N={n}"
            );
            assert!(
                -2.0 / r < b3 - 1.5 * PI && b3 - 1.5 * PI < -1.0 / r,
                "b3, N={n}"
            );
            assert!(
                1.0 / r < b4 - 1.5 * PI && b4 - 1.5 * PI < 2.0 / r,
                "b4, N={n}"
            );
        }
        assert!(c.length() <= 8.0 / r);
        assert!(c.contains(FRAC_PI_2) && in_crit(n, FRAC_PI_2));
        assert!(!c.contains(0.0) && !in_crit(n, 0.0));
        for i in 0..1000 {
            let x = TAU * (i as f64 + 0.5) / 1000.0;
            assert_eq!(c.contains(x), in_crit(n, x), "x={x} N={n}");
        }
    }
    assert!(crit_strip(16.0).unwrap().length() <= 2.0);
    assert!(crit_strip(1.0).is_err());
}

#[test]
fn cone_is_closed() {
    let q = 16f64.powf(0.25);
    assert!(in_cone(16.0, [1.0, q]));
    assert!(in_cone(16.0, [-1.0, q]));
    assert!(!in_cone(16.0, [1.0, q * (1.0 + 1e-12)]));
    assert!(!in_cone(16.0, [0.0, 1.0]));
    assert!(in_cone(16.0, [1.0, 0.0]));
}

#[test]
fn ucurve_speed_and_length() {
    let n = 10;
    let map = f_n(n);
    let skew = map.skew().unwrap();
    let a = curve(n, TorusPoint::t4(0.3, 1.2, 2.0, 4.0), 1000);
    let b = curve(n, TorusPoint::t4(4.0, 0.1, 0.5, 1.0), 1000);
    for c in [&a, &b] {
        let (lo, hi) = c.x_speed_range();
        assert!(
            lo >= 1.0 - 1.0 / n as f64 && hi <= 1.0 + 1.0 / n as f64,
            "{lo} {hi}"
        );
        assert!(c.tangent_error < TANGENT_TOL);
        assert!((c.span() - TAU).abs() < 1e-12);
        let (l0, l1) = length_bounds(skew);
        assert!(l0 <= c.length && c.length <= l1, "{l0} {} {l1}", c.length);
    }
    let ratio = a.length / b.length;
    assert!((0.9..=1.1).contains(&ratio), "{ratio}");
    // The x coordinate winds once, up to 1/N.
    let turn = a.x_speed.iter().sum::<f64>() / a.x_speed.len() as f64 * TAU;
    assert!((turn - TAU).abs() < TAU / n as f64);
}

#[test]
fn ucurve_fiber_is_on_the_unstable_line() {
    let map = f_n(5);
    let skew = map.skew().unwrap().clone();
    let c = curve(5, TorusPoint::t4(0.3, 1.2, 2.0, 4.0), 1);
    let e = skew.matrix.e_u;
    let scale = 1.0 / (skew.lambda_n() * skew.matrix.px_eu());
    for i in (0..c.len()).step_by(97) {
        let dz = c.points[i][2].sub(c.points[0][2]);
        let dw = c.points[i][3].sub(c.points[0][3]);
        let want_z = Angle::offset(e[0] * scale * c.t[i]);
        let want_w = Angle::offset(e[1] * scale * c.t[i]);
        assert!(dz.diff(want_z).abs() < 1e-9);
        assert!(dw.diff(want_w).abs() < 1e-9);
    }
}

#[test]
fn point_at_matches_nodes_and_refinement() {
    let map = f_n(5);
    let m0 = TorusPoint::t4(0.3, 1.2, 2.0, 4.0);
    let coarse = integrate_ucurve(
        &map,
        &m0,
        UCurveOptions {
            store_every: 10,
            ..UCurveOptions::default()
        },
    )
    .unwrap();
    let fine = curve(5, m0, 1);
    for i in [0, 3, coarse.len() / 2, coarse.len() - 1] {
        let p = coarse.point_at(coarse.t[i]).unwrap();
        for (c, q) in p.iter().enumerate() {
            assert!(q.diff(coarse.points[i][c]).abs() < 1e-12);
        }
    }
    for &t in &[0.123, 1.0, 3.3, 6.0] {
        let p = coarse.point_at(t).unwrap();
        let q = fine.point_at(t).unwrap();
        for c in 0..4 {
            assert!(p[c].diff(q[c]).abs() < 1e-10, "t={t} c={c}");
        }
    }
}

#[test]
fn step_validation() {
    // The base tangent barely turns along a u-curve, so even very coarse
    // steps pass the consistency check and land on the same curve.
    let map = f_n(5);
    let m0 = TorusPoint::t4(0.3, 1.2, 2.0, 4.0);
    let coarse = integrate_ucurve(
        &map,
        &m0,
        UCurveOptions {
            step: Some(0.5),
            ..UCurveOptions::default()
        },
    )
    .unwrap();
    let fine = curve(5, m0, 1);
    let (a, b) = (coarse.points.last().unwrap(), fine.points.last().unwrap());
    for c in 0..4 {
        assert!(a[c].diff(b[c]).abs() < 1e-9);
    }
    assert!((coarse.length - fine.length).abs() < 1e-9 * fine.length);
    for bad in [0.0, -1.0, f64::NAN] {
        let o = UCurveOptions {
            step: Some(bad),
            ..UCurveOptions::default()
        };
        assert!(integrate_ucurve(&map, &m0, o).is_err());
    }
    let big = integrate_ucurve(
        &f_n(13),
        &TorusPoint::t4(0.0, 0.0, 0.0, 0.0),
        UCurveOptions::default(),
    );
    assert!(big.is_err());
    assert!(
        integrate_ucurve(&f_n(5), &TorusPoint::t2(0.0, 0.0), UCurveOptions::default()).is_err()
    );
}

#[test]
fn constant_fields() {
    let c = curve(5, TorusPoint::t4(0.3, 1.2, 2.0, 4.0), 10);
    let good = make_adapted_field(c.clone(), XSpec::Constant([1.0, 0.0])).unwrap();
    assert_eq!(good.holder, 0.0);
    assert_eq!(good.class, Class::Good);
    let bad = make_adapted_field(c.clone(), XSpec::Constant([0.0, 1.0])).unwrap();
    assert_eq!(bad.class, Class::Bad);
    assert!(make_adapted_field(c, XSpec::Values(vec![[1.0, 0.0]])).is_err());
}

#[test]
fn holder_of_a_sqrt_profile() {
    // X moves by √d over distance d; the constant is then exactly 1.
    let s: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
    let x: Vec<[f64; 2]> = s.iter().map(|&d| [1.0, d.sqrt()]).collect();
    let h = holder_constant(&s, &x);
    assert!((h - 1.0).abs() < 1e-12, "{h}");
}

#[test]
fn expectation_bounds_and_convergence() {
    let n = 10;
    let c = curve(n, TorusPoint::t4(0.3, 1.2, 2.0, 4.0), 100);
    let ln = (n as f64).ln();
    let q = (n as f64).powf(0.25);
    for v in [[1.0, 0.0], [1.0, q], [1.0, -q], [1.0, 0.5]] {
        let f = make_adapted_field(c.clone(), XSpec::Constant(v)).unwrap();
        assert_eq!(f.class, Class::Good);
        let e = f.expectation().unwrap();
        assert!(e >= ln / 7.0, "{v:?}: {e}");
        let coarse = f.expectation_with(2).unwrap();
        assert!((e - coarse).abs() < QUAD_TOL);
    }
    for v in [[0.0, 1.0], [1.0, 10.0], [1.0, -3.0]] {
        let f = make_adapted_field(c.clone(), XSpec::Constant(v)).unwrap();
        assert!(f.expectation().unwrap() >= -(2.0 * n as f64).ln());
    }
    // d_m f(0, 1) = (-1, 0): the integrand vanishes identically.
    let vert = make_adapted_field(c, XSpec::Constant([0.0, 1.0])).unwrap();
    assert!(vert.expectation().unwrap().abs() < 1e-14);
}

#[test]
fn expectation_matches_x_average() {
    // Along a u-curve x advances at unit speed up to λ^N, so E is close to
    // the uniform x-average of log ‖d s(x) X‖.
    let n = 8;
    let c = curve(n, TorusPoint::t4(0.0, 0.7, 1.0, 2.0), 50);
    let f = make_adapted_field(c, XSpec::Constant([1.0, 0.0])).unwrap();
    let base = BaseMap { p: 2, r: n as f64 };
    let m = 200_000;
    let avg = (0..m)
        .map(|i| {
            let x = TAU * (i as f64 + 0.5) / m as f64;
            norm2(push_center(&base, x, [1.0, 0.0])).ln()
        })
        .sum::<f64>()
        / m as f64;
    let e = f.expectation().unwrap();
    assert!((e - avg).abs() < 2e-3, "{e} {avg}");
}

#[test]
fn pushforward_pieces() {
    let n = 5;
    let c = curve(n, TorusPoint::t4(0.3, 1.2, 2.0, 4.0), 1);
    let f = make_adapted_field(c, XSpec::Constant([1.0, 0.0])).unwrap();
    let p = push_field(&f, 1).unwrap();
    assert_eq!(p.count, 15126);
    let mu = HyperbolicMatrix::cat().mu;
    assert!((p.growth - mu.powi(10)).abs() < 1e-8 * p.growth);
    let spans: f64 = (1..=p.count + 1)
        .map(|j| {
            let (a, b) = p.interval(j);
            b - a
        })
        .sum();
    assert!((spans * p.growth - TAU * p.growth).abs() < 1e-6 * p.growth);

    let skew = f.curve.skew().unwrap().clone();
    let l2n = skew.fiber_lambda();
    let bound = holder_bound(&skew);
    for j in [1, 2, 777, 7000, p.count] {
        let piece = p.piece(j, 12, None).unwrap();
        assert!(
            piece.speed_ratio_error <= 2.0 * l2n,
            "{}",
            piece.speed_ratio_error
        );
        assert_eq!(piece.field.curve.level, 1);
        assert!(piece.field.holder < bound, "{} {bound}", piece.field.holder);
        assert!((piece.field.curve.t[0]).abs() < 1e-6);
        assert!((piece.field.curve.t[11] - TAU).abs() < 1e-6);
        let (lo, hi) = piece.field.curve.x_speed_range();
        assert!(lo >= 1.0 - 1.0 / n as f64 && hi <= 1.0 + 1.0 / n as f64);
    }
    let left = p.piece(p.count + 1, 4, None).unwrap();
    assert!(left.field.curve.t[3] < TAU);
    assert!(p.piece(0, 4, None).is_err());
    assert!(p.piece(p.count + 2, 4, None).is_err());
}

#[test]
fn pushed_tangent_is_the_scaled_frame() {
    // d(f^k ∘ γ)/dt = μ^{2kN} (α, e^u)/(λ^N |P_x e^u|), by finite differences.
    let n = 4;
    let c = curve(n, TorusPoint::t4(0.3, 1.2, 2.0, 4.0), 1);
    let f = make_adapted_field(c, XSpec::Constant([1.0, 0.0])).unwrap();
    let p = push_field(&f, 1).unwrap();
    let skew = f.curve.skew().unwrap().clone();
    let scale = 1.0 / (skew.lambda_n() * skew.matrix.px_eu());
    for &t in &[0.5, 2.0, 4.4] {
        let dt = 1e-7;
        let (a, _, _) = p.push_point(t - dt).unwrap();
        let (b, _, _) = p.push_point(t + dt).unwrap();
        let (m, _, _) = p.push_point(t).unwrap();
        let al = bundles::alpha(&skew, &m, DEFAULT_TOL).unwrap();
        let want = [
            p.growth * al.base[0] * scale,
            p.growth * al.base[1] * scale,
            p.growth * skew.matrix.e_u[0] * scale,
            p.growth * skew.matrix.e_u[1] * scale,
        ];
        for i in 0..4 {
            let fd = b[i].diff(a[i]) / (2.0 * dt);
            assert!(
                (fd - want[i]).abs() < 1e-4 * want[2].abs(),
                "i={i}: {fd} {}",
                want[i]
            );
        }
    }
}

#[test]
fn transported_fields_are_adapted() {
    let n = 10;
    let c = curve(n, TorusPoint::t4(0.3, 1.2, 2.0, 4.0), 1000);
    let f = make_adapted_field(c, XSpec::Constant([1.0, 0.0])).unwrap();
    let p = push_field(&f, 1).unwrap();
    let skew = f.curve.skew().unwrap().clone();
    let var_bound = skew.lambda_n().powf(1.0 / 3.0);
    let mut rng = task_rng(3, 0);
    for _ in 0..20 {
        let j = rng.gen_range(1..=p.count);
        let piece = p.piece(j, 16, None).unwrap();
        assert!(piece.field.holder < holder_bound(&skew));
        assert!(piece.field.variation() < var_bound);
        assert!(piece.speed_ratio_error <= 2.0 * skew.fiber_lambda());
    }
}

#[test]
fn transitions_at_n5() {
    let n = 5;
    let c = curve(n, TorusPoint::t4(0.3, 1.2, 2.0, 4.0), 1);
    let r = (n as f64).sqrt();
    let good = make_adapted_field(c.clone(), XSpec::Constant([1.0, 0.0])).unwrap();
    let g = transition_stats(&good, 1, Mode::Exact, 8, None).unwrap();
    assert_eq!(g.good + g.bad + g.leftover, g.full_pieces + 1);
    assert_eq!(g.full_pieces, 15126);
    assert!(
        g.bad_fraction <= 10.0 / (2.0 * PI * r),
        "{}",
        g.bad_fraction
    );
    // Bad pieces sit where |Ω| < N^{-1/4}; their share is close to that
    // x-measure.
    let q = (n as f64).powf(-0.25);
    let lo = ((-2.0 - q) / n as f64).acos();
    let hi = ((-2.0 + q) / n as f64).acos();
    let share = 2.0 * (lo - hi) / TAU;
    assert!(
        (g.bad_fraction - share).abs() < 0.01,
        "{} {share}",
        g.bad_fraction
    );

    let bad = make_adapted_field(c, XSpec::Constant([1.0, r])).unwrap();
    assert_eq!(bad.class, Class::Bad);
    let b = transition_stats(&bad, 1, Mode::Exact, 8, None).unwrap();
    assert!(b.good_fraction >= 1.0 / 3.0, "{}", b.good_fraction);
    let mc = transition_stats(
        &bad,
        1,
        Mode::MonteCarlo {
            samples: 4000,
            seed: 11,
        },
        8,
        None,
    )
    .unwrap();
    assert!((mc.good_fraction - b.good_fraction).abs() < 4.0 * mc.std_err + 1e-3);
    let again = transition_stats(
        &bad,
        1,
        Mode::MonteCarlo {
            samples: 4000,
            seed: 11,
        },
        8,
        None,
    )
    .unwrap();
    assert_eq!(mc, again);
}

#[test]
fn exact_mode_limit() {
    let c = curve(5, TorusPoint::t4(0.3, 1.2, 2.0, 4.0), 10);
    let f = make_adapted_field(c, XSpec::Constant([1.0, 0.0])).unwrap();
    assert!(transition_stats(&f, 2, Mode::Exact, 4, None).is_err());
}

#[test]
fn recursion_at_small_n() {
    let n = 3;
    let c = curve(n, TorusPoint::t4(0.3, 1.2, 2.0, 4.0), 1);
    let f = make_adapted_field(c, XSpec::Constant([1.0, 0.0])).unwrap();
    let s1 = transition_stats(&f, 1, Mode::Exact, 6, None).unwrap();
    let s2 = transition_stats(&f, 2, Mode::Exact, 6, None).unwrap();
    let mu2n = s1.growth;
    let eta = 5.0 / (PI * (n as f64).sqrt());
    let g1 = s1.good as f64;
    let b1 = (s1.bad + s1.leftover) as f64;
    let lower = (1.0 - eta) * mu2n * g1 + mu2n * b1 / 3.0;
    let upper = eta * mu2n * g1 + 2.0 * mu2n * b1 / 3.0 + mu2n;
    println!(
        "N=3: #G1={} #B1={} #G2={} #B2={} lower={lower:.1} upper={upper:.1}",
        s1.good, s1.bad, s2.good, s2.bad
    );
    assert!(s2.good as f64 >= lower);
    assert!(((s2.bad + s2.leftover) as f64) <= upper);
}

#[test]
fn strip_for_bad_fields() {
    let c = curve(5, TorusPoint::t4(0.3, 1.2, 2.0, 4.0), 100);
    let up = make_adapted_field(c.clone(), XSpec::Constant([1.0, 3.0])).unwrap();
    let (s, slope) = strip_for_bad_field(&up).unwrap();
    assert!((slope - 3.0).abs() < 1e-12);
    assert_eq!(s.intervals, vec![(FRAC_PI_2, 1.5 * PI)]);
    assert!((s.length() - PI).abs() < 1e-15);
    let down = make_adapted_field(c.clone(), XSpec::Constant([1.0, -3.0])).unwrap();
    let (s, _) = strip_for_bad_field(&down).unwrap();
    assert!((s.length() - PI).abs() < 1e-15);
    assert!(s.contains(0.1) && !s.contains(PI));
    let vert = make_adapted_field(c.clone(), XSpec::Constant([0.0, 1.0])).unwrap();
    assert!(strip_for_bad_field(&vert).unwrap().1.is_infinite());
    let good = make_adapted_field(c, XSpec::Constant([1.0, 0.0])).unwrap();
    assert!(strip_for_bad_field(&good).is_err());
}

#[test]
fn bad_fields_are_pushed_into_the_cone() {
    let n = 10.0;
    let base = BaseMap { p: 2, r: n };
    let r = n.sqrt();
    for v in [[0.0, 1.0], [1.0, r], [1.0, -r], [1.0, n], [1.0, -n]] {
        let mut rng = task_rng(5, 0);
        let chk = bad_to_good_check(&base, n, v, 10_000, &mut rng);
        assert_eq!(chk.in_cone, chk.samples, "{v:?}: margin {}", chk.min_margin);
    }
    // Just outside the cone, the push can land next to Ω = n.
    let q = n.powf(0.25);
    let mut rng = task_rng(5, 1);
    let near = bad_to_good_check(&base, n, [1.0, q * 1.01], 10_000, &mut rng);
    println!(
        "slope 1.01·N^(1/4): {}/{} in cone",
        near.in_cone, near.samples
    );
    assert!(near.in_cone < near.samples);
}

#[test]
fn good_stays_good() {
    let mut rng = task_rng(9, 0);
    let r = good_stays_good_check(25.0, 100_000, &mut rng).unwrap();
    assert!(r.all_pass());
    assert!(r.min_gap >= 5.0 - 2.0 - 25f64.powf(0.25) - 1e-12);
    let r = good_stays_good_check(100.0, 100_000, &mut rng).unwrap();
    assert!(r.all_pass());
    assert!(
        r.min_gap >= 10.0 - 2.0 - 100f64.powf(0.25) - 1e-9,
        "{}",
        r.min_gap
    );
    assert!(r.min_gap < 4.9);
    // At N = 16 the bound √N - 2 - N^{1/4} is zero.
    let r = good_stays_good_check(16.0, 100_000, &mut rng).unwrap();
    assert!(r.min_gap < 0.05);
}

#[test]
fn distortion() {
    let n = 10;
    let map = f_n(n);
    let c = curve(n, TorusPoint::t4(0.3, 1.2, 2.0, 4.0), 10_000);
    assert_eq!(distortion_estimate(&c, 0, &map, 64).unwrap(), 1.0);
    let d1 = distortion_estimate(&c, 1, &map, 64).unwrap();
    let d10 = distortion_estimate(&c, 10, &map, 64).unwrap();
    assert!((1.0..=1.1).contains(&d10), "{d10}");
    assert!(d10 >= d1 - 1e-12);
}

#[test]
fn perturbed_curve_segment() {
    let g = MapModel::new(&MapSpec::perturbed_f_n(6, 1e-3)).unwrap();
    let lambda_n = g.unperturbed().unwrap().lambda_n();
    let c = integrate_ucurve(
        &g,
        &TorusPoint::t4(0.3, 1.2, 2.0, 4.0),
        UCurveOptions {
            span: 0.05,
            ..UCurveOptions::default()
        },
    )
    .unwrap();
    assert!(c.x_speed.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    assert!(c.tangent_error < TANGENT_TOL);
    assert!((c.span() - 0.05).abs() < 1e-12);
    assert!(c.len() as f64 > 0.05 / (0.1 * lambda_n));
    let d = distortion_estimate(&c, 3, &g, 16).unwrap();
    assert!((1.0..1.1).contains(&d), "{d}");
}

#[test]
fn in_decomposition_agrees() {
    let n = 6;
    let c = curve(n, TorusPoint::t4(0.3, 1.2, 2.0, 4.0), 20);
    let f = make_adapted_field(c, XSpec::Constant([1.0, 0.0])).unwrap();
    let est = in_decomposition(&f, 5, 2000, 3).unwrap();
    let se = (est.direct_se.powi(2) + est.level_se.powi(2)).sqrt();
    assert!((est.direct - est.level_sum).abs() < 4.0 * se, "{est:?}");
    assert_eq!(est.levels.len(), 5);
    assert!(est.direct / 5.0 > (n as f64).ln() / 40.0);
}

#[test]
fn sin_theta_threshold() {
    // Smallest N for which |sin θ| ≥ N^{-1/3} holds off Crit on the cone.
    let holds = |n: f64| min_sin_theta_off_crit(n, 20_000).unwrap() >= n.powf(-1.0 / 3.0);
    let first = (2..200)
        .find(|&n| (n..n + 50).all(|m| holds(m as f64)))
        .unwrap();
    println!("sin theta bound holds from N = {first}");
    assert_eq!(first, SIN_THETA_MIN_N);
    assert!(!holds(10.0));
}

#[test]
fn surrogate_tracks_exact_curves() {
    let n = 5;
    let c = curve(n, TorusPoint::t4(0.3, 1.2, 2.0, 4.0), 1);
    let r = (n as f64).sqrt();
    for v in [[1.0, 0.0], [1.0, r], [0.0, 1.0]] {
        let field = make_adapted_field(c.clone(), XSpec::Constant(v)).unwrap();
        let exact = transition_stats(&field, 1, Mode::Exact, 8, None).unwrap();
        let sur = surrogate_stats(n as f64, v, 1 << 16).unwrap();
        assert!(
            (exact.good_fraction - sur.good_fraction).abs() < 0.01,
            "{v:?}"
        );
        let e = field.expectation().unwrap();
        assert!(
            (e - sur.expectation).abs() < 0.05,
            "{v:?}: {e} {}",
            sur.expectation
        );
    }
    assert!(surrogate_stats(5.0, [0.0, 0.0], 10).is_err());
    assert!(surrogate_stats(5.0, [1.0, 0.0], 0).is_err());
}
