use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::maps::{HyperbolicMatrix, MapSpec};

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(23)
}

fn f_n(n: u32) -> MapModel {
    MapModel::new(&MapSpec::f_n(n)).unwrap()
}

fn random4(r: &mut ChaCha8Rng) -> [Angle; 4] {
    [0; 4].map(|_| Angle::random(r))
}

fn unit_random(r: &mut ChaCha8Rng) -> [f64; 4] {
    normalize([0; 4].map(|_| r.gen::<f64>() * 2.0 - 1.0))
}

fn dist(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    norm(&[a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]])
}

#[test]
fn first_term_of_series() {
    let f = f_n(10);
    let s = f.skew().unwrap();
    let h = HyperbolicMatrix::cat();
    let mut r = rng();
    for _ in 0..100 {
        let fr = alpha_truncated(s, &random4(&mut r), 0).unwrap();
        let want = h.lambda_pow(10) * h.px_eu();
        assert!((fr.base[0] - want).abs() <= 1e-14 * want);
        assert_eq!(fr.base[1], 0.0);
        assert_eq!(fr.order, 0);
    }
}

#[test]
fn alpha_bounds_and_invariance() {
    let n = 10;
    let f = f_n(n);
    let s = f.skew().unwrap();
    let h = HyperbolicMatrix::cat();
    let (ln, l2n, m2n) = (h.lambda_pow(10), h.lambda_pow(20), h.mu_pow(20));
    let mut r = rng();
    for _ in 0..1000 {
        let m = random4(&mut r);
        let fr = alpha(s, &m, DEFAULT_TOL).unwrap();
        assert!(fr.tail_bound <= DEFAULT_TOL);
        let d = (fr.base[0] - ln * h.px_eu()).hypot(fr.base[1]);
        assert!(d <= l2n, "{d} > {l2n}");
        let pushed = mul4(&f.derivative4(&m), &fr.vector());
        let next = alpha(s, &f.eval4(&m), DEFAULT_TOL).unwrap().vector();
        let res = dist(&pushed, &next.map(|c| c * m2n));
        assert!(res <= 1e-8 * m2n, "{res}");
        assert!(res <= 1e-6, "{res}");
    }
    assert!(alpha(s, &random4(&mut r), 0.0).is_err());
    assert!(alpha(s, &random4(&mut r), -1.0).is_err());
}

#[test]
fn series_cap_reports_error() {
    let g = MapModel::new(&MapSpec::GN1N2 {
        p: 2,
        n1: 20,
        n2: 1,
        l: [[1, 0], [0, 1]],
        a: crate::maps::CAT,
    });
    assert!(g.is_err());
    let g = MapModel::new(&MapSpec::GN1N2 {
        p: 2,
        n1: 3,
        n2: 3,
        l: [[1, 0], [0, 1]],
        a: crate::maps::CAT,
    })
    .unwrap();
    let m = [Angle::ZERO; 4];
    assert!(alpha(g.skew().unwrap(), &m, 1e-300).is_err());
}

#[test]
fn stable_frame_conjugacy_matches_forward_series() {
    let mut r = rng();
    for n in [3, 6, 10] {
        let f = f_n(n);
        let s = f.skew().unwrap();
        for _ in 0..200 {
            let m = random4(&mut r);
            let a = stable_frame(s, &m, 1e-20).unwrap();
            let b = stable_frame_series(s, &m, 1e-20).unwrap();
            let scale = a.base[0].hypot(a.base[1]);
            assert!((a.base[0] - b.base[0]).abs() <= 1e-13 * scale);
            assert!((a.base[1] - b.base[1]).abs() <= 1e-13 * scale);
            assert_eq!(a.fiber, s.matrix.e_s);
        }
    }
}

#[test]
fn stable_frame_invariance_and_transversality() {
    let f = f_n(10);
    let s = f.skew().unwrap();
    let l2n = s.fiber_lambda();
    let mut r = rng();
    for _ in 0..1000 {
        let m = random4(&mut r);
        let st = stable_frame(s, &m, DEFAULT_TOL).unwrap();
        let mut v = to_dd(&st.vector());
        v[2] = s.matrix.e_s_dd[0];
        v[3] = s.matrix.e_s_dd[1];
        let pushed = push_dd(s, &m, &v).map(|c| c.to_f64());
        let next = stable_frame(s, &f.eval4(&m), DEFAULT_TOL).unwrap().vector();
        assert!(dist(&pushed, &next.map(|c| c * l2n)) <= 1e-8);

        let u = alpha(s, &m, DEFAULT_TOL).unwrap().vector();
        let sv = st.vector();
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                vec![
                    sv[i],
                    u[i],
                    [1.0, 0.0, 0.0, 0.0][i],
                    [0.0, 1.0, 0.0, 0.0][i],
                ]
            })
            .collect();
        assert!(crate::dd::det(&rows).to_f64().abs() > 1e-6);
    }
}

#[test]
fn linear_coupling_frames() {
    let g = MapModel::new(&MapSpec::GN1N2 {
        p: 3,
        n1: 2,
        n2: 8,
        l: [[2, 1], [1, -1]],
        a: crate::maps::CAT,
    })
    .unwrap();
    let s = g.skew().unwrap();
    let (mu, la) = (s.fiber_mu(), s.fiber_lambda());
    let mut r = rng();
    for _ in 0..200 {
        let m = random4(&mut r);
        let u = alpha(s, &m, 1e-18).unwrap().vector();
        let next = alpha(s, &g.eval4(&m), 1e-18).unwrap().vector();
        let pushed = mul4(&g.derivative4(&m), &u);
        assert!(dist(&pushed, &next.map(|c| c * mu)) <= 1e-9 * mu);
        let st = stable_frame(s, &m, 1e-18).unwrap();
        let back = mul4(
            &g.inverse_derivative4(&g.eval4(&m)),
            &stable_frame(s, &g.eval4(&m), 1e-18).unwrap().vector(),
        );
        assert!(dist(&back, &st.vector().map(|c| c / la)) <= 1e-9 / la);
    }
}

#[test]
fn cone_ratio() {
    let n = 10;
    let f = f_n(n);
    let h = HyperbolicMatrix::cat();
    let ln = h.lambda_pow(10);
    let (lo, hi) = (ln * (h.px_eu() - 3.0 * ln), ln * (h.px_eu() + 3.0 * ln));
    let mut r = rng();
    for _ in 0..10_000 {
        let v = unstable_direction(&f, &random4(&mut r)).unwrap();
        assert!((lo..=hi).contains(&v[0].abs()));
    }
}

#[test]
fn power_iteration_converges_from_generic_seed() {
    let f = f_n(10);
    let s = f.skew().unwrap();
    let mut r = rng();
    let eu = s.matrix.e_u;
    for _ in 0..100 {
        let m = TorusPoint::T4(random4(&mut r));
        let exact = alpha(s, &as_t4(&m).unwrap(), DEFAULT_TOL).unwrap().unit();
        let seeded = power_iteration_unstable(&f, &m, 3).unwrap();
        let generic =
            power_iteration_unstable_from(&f, &m, 3, Some([0.0, 0.0, eu[0], eu[1]])).unwrap();
        let other = power_iteration_unstable_from(&f, &m, 3, Some([0.3, -0.2, 0.5, 0.7])).unwrap();
        for v in [seeded, generic, other] {
            assert!(dist(&v, &exact) <= 1e-6);
        }
    }
}

#[test]
fn epsilon_zero_power_iteration_is_unchanged() {
    let f = f_n(6);
    let g = MapModel::new(&MapSpec::perturbed_f_n(6, 0.0)).unwrap();
    let mut r = rng();
    for _ in 0..50 {
        let m = TorusPoint::T4(random4(&mut r));
        assert_eq!(
            power_iteration_unstable(&f, &m, 3).unwrap(),
            power_iteration_unstable(&g, &m, 3).unwrap()
        );
        assert_eq!(
            power_iteration_stable(&f, &m, 3).unwrap(),
            power_iteration_stable(&g, &m, 3).unwrap()
        );
    }
}

#[test]
fn perturbed_constants_a() {
    let g = MapModel::new(&MapSpec::perturbed_f_n(10, 1e-3)).unwrap();
    let s = g.unperturbed().unwrap();
    let (mu, la) = (s.fiber_mu(), s.fiber_lambda());
    let mut r = rng();
    for _ in 0..500 {
        let m = random4(&mut r);
        let e = unstable_expansion(&g, &m).unwrap() / mu;
        assert!((0.99..=1.01).contains(&e), "{e}");
        let c = stable_contraction(&g, &m).unwrap() / la;
        assert!((0.99..=1.01).contains(&c), "{c}");
    }
}

#[test]
fn power_iteration_frames_are_invariant_for_perturbation() {
    let g = MapModel::new(&MapSpec::perturbed_f_n(5, 0.05)).unwrap();
    let mut r = rng();
    for _ in 0..100 {
        let m = random4(&mut r);
        let v = unstable_direction(&g, &m).unwrap();
        let w = unstable_direction(&g, &g.eval4(&m)).unwrap();
        let pushed = normalize(mul4(&g.derivative4(&m), &v));
        assert!(dist(&pushed, &w) < 1e-9);
        let v = stable_direction(&g, &g.eval4(&m)).unwrap();
        let w = stable_direction(&g, &m).unwrap();
        let pulled = normalize(mul4(&g.inverse_derivative4(&g.eval4(&m)), &v));
        assert!(dist(&pulled, &w) < 1e-9);
    }
}

#[test]
fn jacobians() {
    let f = f_n(10);
    let l2n = f.skew().unwrap().fiber_lambda();
    let mut r = rng();
    for _ in 0..300 {
        let m = TorusPoint::T4(random4(&mut r));
        assert_eq!(
            unstable_jacobian(&f, &m, 0, Direction::Forward).unwrap(),
            1.0
        );
        assert_eq!(
            unstable_jacobian(&f, &m, 0, Direction::Backward).unwrap(),
            1.0
        );
        let j = unstable_jacobian(&f, &m, 1, Direction::Backward).unwrap();
        assert!(j >= l2n / 1.01 && j <= l2n / 0.99);
    }
    for spec in [MapSpec::f_n(4), MapSpec::perturbed_f_n(4, 0.01)] {
        let g = MapModel::new(&spec).unwrap();
        for _ in 0..100 {
            let m = random4(&mut r);
            let tm = TorusPoint::T4(m);
            let mut gk = m;
            for _ in 0..3 {
                gk = g.eval4(&gk);
            }
            let fwd = unstable_jacobian(&g, &tm, 3, Direction::Forward).unwrap();
            let back = unstable_jacobian(&g, &TorusPoint::T4(gk), 3, Direction::Backward).unwrap();
            assert!((fwd * back - 1.0).abs() < 1e-8);
            let j2 = unstable_jacobian(&g, &tm, 2, Direction::Forward).unwrap();
            let g2 = g.eval4(&g.eval4(&m));
            let j1 = unstable_jacobian(&g, &TorusPoint::T4(g2), 1, Direction::Forward).unwrap();
            assert!((j1 * j2 / fwd - 1.0).abs() < 1e-8);
        }
    }
}

#[test]
fn center_plane_of_f_n_is_base_plane() {
    let f = f_n(8);
    let mut r = rng();
    for _ in 0..50 {
        let m = TorusPoint::T4(random4(&mut r));
        let [a, b] = center_plane(&f, &m, 4).unwrap();
        assert!(dist(&a, &[1.0, 0.0, 0.0, 0.0]) < 1e-12, "{a:?}");
        assert!(dist(&b, &[0.0, 1.0, 0.0, 0.0]) < 1e-12, "{b:?}");
    }
}

#[test]
fn perturbed_center_plane_is_invariant() {
    let g = MapModel::new(&MapSpec::perturbed_f_n(6, 1e-2)).unwrap();
    let mut r = rng();
    for _ in 0..50 {
        let m = random4(&mut r);
        let here = center_plane(&g, &TorusPoint::T4(m), 4).unwrap();
        let there = center_plane(&g, &TorusPoint::T4(g.eval4(&m)), 4).unwrap();
        let d = g.derivative4(&m);
        for v in here {
            let w = normalize(mul4(&d, &v));
            let proj: f64 = there
                .iter()
                .map(|b| b.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>().powi(2))
                .sum();
            assert!((1.0 - proj).abs() < 1e-9, "{proj}");
        }
    }
}

#[test]
fn symplectic_form_properties() {
    let f = f_n(10);
    let s = f.skew().unwrap();
    let frames = Frames::new(s).unwrap();
    let mut r = rng();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = random4(&mut r);
        let (u, v) = (unit_random(&mut r), unit_random(&mut r));
        let tm = TorusPoint::T4(m);
        let a = symplectic_form(&f, &tm, &u, &v).unwrap();
        let b = symplectic_form(&f, &tm, &v, &u).unwrap();
        assert!((a + b).abs() <= 1e-12);
        let here = SymplecticFrame::at(&frames, &m).unwrap();
        let there = SymplecticFrame::at(&frames, &f.eval4(&m)).unwrap();
        let (pu, pv) = (push_dd(s, &m, &to_dd(&u)), push_dd(s, &m, &to_dd(&v)));
        let res = (there.omega(&pu, &pv) - here.omega(&to_dd(&u), &to_dd(&v))).to_f64();
        worst = worst.max(res.abs());
    }
    assert!(worst <= 1e-8, "{worst}");

    let m = random4(&mut r);
    let fr = SymplecticFrame::at(&frames, &m).unwrap();
    let basis = [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        alpha(s, &m, SYMPLECTIC_TOL).unwrap().vector(),
        stable_frame(s, &m, SYMPLECTIC_TOL).unwrap().vector(),
    ];
    let gram: Vec<Vec<f64>> = basis
        .iter()
        .map(|a| {
            basis
                .iter()
                .map(|b| fr.omega(&to_dd(a), &to_dd(b)).to_f64())
                .collect()
        })
        .collect();
    assert!(crate::dd::det(&gram).to_f64().abs() > 1e-8);
}
