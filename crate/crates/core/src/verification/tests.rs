use super::*;

fn quick(n: u32) -> CheckParams {
    CheckParams {
        samples: Some(200),
        curves: Some(2),
        ..CheckParams::new(n)
    }
}

fn margin<'a>(r: &'a CheckReport, name: &str) -> &'a Margin {
    r.margins.iter().find(|m| m.name == name).expect(name)
}

#[test]
fn registry_ids_are_unique() {
    let mut ids: Vec<&str> = ids().collect();
    assert_eq!(ids.len(), REGISTRY.len());
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), REGISTRY.len());
    assert!(REGISTRY.iter().all(|e| e.min_n <= e.max_n));
}

#[test]
fn bad_parameters_are_errors() {
    let p = CheckParams::new(10);
    assert!(matches!(
        run_check("no_such_check", &p),
        Err(Error::UnknownCheck(_))
    ));
    assert!(run_check("reversibility", &CheckParams::new(0)).is_err());
    let nan = CheckParams { eps: f64::NAN, ..p };
    assert!(run_check("reversibility", &nan).is_err());
    let empty = CheckParams {
        samples: Some(0),
        ..p
    };
    assert!(run_check("center_norm", &empty).is_err());
    let no_curves = CheckParams {
        curves: Some(0),
        ..p
    };
    assert!(run_check("bounds", &no_curves).is_err());
}

#[test]
fn margins_follow_their_direction() {
    let up = Margin::at_most("x", 1.0, 2.0);
    assert!(up.holds());
    assert_eq!(up.margin(), -1.0);
    let down = Margin::at_least("y", 1.0, 2.0);
    assert!(!down.holds());
    assert!(down.gating && !down.clone().informational().gating);
    assert!(!Margin::at_least("z", 0.0, 1.0).gated_if(false).gating);
}

#[test]
fn reports_are_reproducible() {
    let p = CheckParams::new(10);
    let a = run_check("center_norm", &p).unwrap();
    let b = run_check("center_norm", &p).unwrap();
    assert!(a.same_result(&b));
    let other = run_check("center_norm", &CheckParams { seed: 1, ..p }).unwrap();
    assert_ne!(a.margins, other.margins);
}

#[test]
fn spec_examples_at_n10() {
    let p = CheckParams::new(10);
    let r = run_check("reversibility", &p).unwrap();
    assert_eq!(r.status, Status::Pass);
    assert!(r.margins.iter().all(|m| m.measured <= 1e-12));
    let d = run_check("second_derivative", &p).unwrap();
    assert_eq!(d.status, Status::Pass);
    assert!(margin(&d, "d2f").measured <= 10.0 * 1.01);
}

#[test]
fn thresholds_and_ceilings_make_checks_report_only() {
    let r = run_check("good_to_good", &CheckParams::new(10)).unwrap();
    assert_eq!(r.status, Status::ReportOnly);
    assert!(r.margins.iter().all(|m| !m.gating));
    assert!(r.note.contains("below validity threshold"));
    assert_eq!(
        run_check("good_to_good", &CheckParams::new(25))
            .unwrap()
            .status,
        Status::Pass
    );

    let s = run_check("symplectic", &quick(16)).unwrap();
    assert_eq!(s.status, Status::ReportOnly);
    assert!(s.note.contains("beyond working precision"));

    let big = run_check("inverse_conjugacy", &CheckParams::new(30)).unwrap();
    assert_eq!(big.status, Status::ReportOnly);
    assert!(big.note.contains("not representable"));
    assert_eq!(
        run_check("sin_theta", &CheckParams::new(176))
            .unwrap()
            .status,
        Status::Pass
    );
}

#[test]
fn surrogate_takes_over_beyond_exact_curves() {
    let r = run_check("ratio_100", &CheckParams::new(29)).unwrap();
    assert_eq!(r.status, Status::Pass);
    assert!(r.note.contains("surrogate"));
    let v = run_check("variation", &CheckParams::new(13)).unwrap();
    assert_eq!(v.status, Status::ReportOnly);
    assert!(v.margins.is_empty());
}

#[test]
fn perturbed_scopes_are_labelled() {
    let p = CheckParams {
        eps: 1e-3,
        ..quick(3)
    };
    let c = run_check("cone_ratio", &p).unwrap();
    assert!(c.note.contains("evaluated on f_N"));
    let w = run_check("weighted_total", &p).unwrap();
    assert_eq!(w.status, Status::ReportOnly);
    assert!(w.note.contains("not integrated"));
}

#[test]
fn perturbed_suite_at_zero_matches_fn() {
    let p = quick(3);
    let a = run_suite(Suite::FN, &p);
    let b = run_suite(Suite::Perturbed, &p);
    assert_eq!(a.len(), REGISTRY.len());
    for (x, y) in a.iter().zip(&b) {
        let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
        assert!(x.same_result(y), "{}", x.id);
    }
    assert_eq!(run_suite(Suite::All, &p).len(), 2 * REGISTRY.len());
}

#[test]
fn exit_codes() {
    let report = |status| {
        Ok(CheckReport {
            id: "x",
            params: CheckParams::new(1),
            samples: 0,
            curves: 0,
            status,
            margins: vec![],
            wall_time: 0.0,
            note: String::new(),
        })
    };
    assert_eq!(
        exit_code(&[report(Status::Pass), report(Status::ReportOnly)]),
        0
    );
    assert_eq!(exit_code(&[report(Status::Pass), report(Status::Fail)]), 1);
    assert_eq!(
        exit_code(&[report(Status::Fail), Err(Error::UnknownCheck("y".into()))]),
        2
    );
    assert_eq!("fN".parse::<Suite>().unwrap(), Suite::FN);
    assert!("everything".parse::<Suite>().is_err());
}
