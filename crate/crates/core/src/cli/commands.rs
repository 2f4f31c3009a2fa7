use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use super::{list, maybe, value};
use crate::error::{Error, Result};
use crate::io::{self, Cell, RunConfig};
use crate::maps::{MapModel, MapSpec};
use crate::seed;
use crate::spectrum::{self, SpectrumOptions};
use crate::torus::TorusPoint;
use crate::ucurves::{self, Class, Mode, XSpec};
use crate::verification::{self, CheckParams, CheckReport, CurveCache, Status, Suite};

/// Exponents at or below this count as the near-zero mass of a heatmap.
pub const NEAR_ZERO: f64 = 0.01;
/// Exponents above this count as the chaotic mass of a heatmap.
pub const CHAOTIC: f64 = 0.1;
/// Pieces enumerated by `pieces=auto` before switching to Monte Carlo.
const AUTO_ENUMERATION_MAX: u64 = 200_000;
const SURROGATE_GRID: usize = 1 << 18;

pub(super) fn run(cfg: &RunConfig) -> Result<i32> {
    let t = Instant::now();
    let (code, summary) = match cfg.get("subcommand").unwrap_or_default() {
        "spectrum" => spectrum(cfg)?,
        "heatmap" => heatmap(cfg)?,
        "ucurve-stats" => ucurve_stats(cfg)?,
        "verify" => verify(cfg)?,
        "perturb-sweep" => perturb_sweep(cfg)?,
        other => {
            return Err(Error::InvalidParams(format!(
                "unknown subcommand `{other}`"
            )))
        }
    };
    let written = match cfg.get("out") {
        Some(p) => format!(" -> {p}"),
        None => String::new(),
    };
    println!("{summary} ({:.2}s){written}", t.elapsed().as_secs_f64());
    Ok(code)
}

fn out_path(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.get("out").map(PathBuf::from)
}

fn random_point(dim: usize, root: u64, index: u64) -> TorusPoint {
    let mut rng = seed::task_rng(root, index);
    if dim == 2 {
        TorusPoint::random_t2(&mut rng)
    } else {
        TorusPoint::random_t4(&mut rng)
    }
}

fn spectrum(cfg: &RunConfig) -> Result<(i32, String)> {
    let spec = MapSpec::from_pairs(&cfg.entries)?;
    let map = MapModel::new(&spec)?;
    let n: usize = value(cfg, "n")?;
    let orbits: usize = value(cfg, "orbits")?;
    let root: u64 = value(cfg, "seed")?;
    let opts = SpectrumOptions {
        qr_stride: value(cfg, "qr_stride")?,
        burn_in: value(cfg, "burn_in")?,
    };
    if orbits == 0 {
        return Err(Error::InvalidParams("need at least one orbit".into()));
    }
    let split = match cfg.get("method").unwrap_or_default() {
        "full" => false,
        "split" => true,
        other => return Err(Error::InvalidParams(format!("unknown method `{other}`"))),
    };
    let reports = (0..orbits)
        .into_par_iter()
        .map(|i| {
            let m0 = random_point(map.dim(), root, i as u64);
            if split {
                spectrum::split_spectrum(&map, &m0, n, opts)
            } else {
                spectrum::lyapunov_spectrum_with(&map, &m0, n, opts)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let d = map.dim();
    let mut cols: Vec<String> = vec!["orbit".into()];
    cols.extend((1..=d).map(|i| format!("chi_{i}")));
    cols.extend(["sum_residual".into(), "pairing_residual".into()]);
    let rows: Vec<Vec<Cell>> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = vec![Cell::from(i)];
            row.extend(r.exponents.iter().map(|&x| Cell::from(x)));
            row.push(r.sum_residual.into());
            row.push(r.pairing_residual.into());
            row
        })
        .collect();
    if let Some(p) = out_path(cfg) {
        let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
        io::write_csv(&p, cfg, &cols, &rows)?;
    }
    let mean: Vec<String> = (0..d)
        .map(|i| reports.iter().map(|r| r.exponents[i]).sum::<f64>() / orbits as f64)
        .map(|x| format!("{x:.4}"))
        .collect();
    let worst = |f: fn(&spectrum::ExponentReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
    Ok((
        0,
        format!(
            "spectrum {spec} n={n} orbits={orbits}: chi = [{}], max |sum| {:.1e}, max pairing {:.1e}",
            mean.join(", "),
            worst(|r| r.sum_residual),
            worst(|r| r.pairing_residual),
        ),
    ))
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let num = |p: &str| {
        p.trim()
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("grid `{s}`: {e}")))
    };
    match s.split_once(['x', 'X']) {
        Some((w, h)) => Ok((num(w)?, num(h)?)),
        None => {
            let w = num(s)?;
            Ok((w, w))
        }
    }
}

fn heatmap(cfg: &RunConfig) -> Result<(i32, String)> {
    let r: f64 = value(cfg, "r")?;
    let n: usize = value(cfg, "n")?;
    let (w, h) = parse_grid(cfg.get("grid").unwrap_or_default())?;
    let field = spectrum::exponent_field(r, (w, h), n)?;
    if let Some(p) = out_path(cfg) {
        io::write_pgm(&p, w, h, &field.values, cfg)?;
    }
    if let Some(p) = maybe::<PathBuf>(cfg, "csv")? {
        let tau = std::f64::consts::TAU;
        let rows: Vec<Vec<Cell>> = (0..h)
            .flat_map(|iy| (0..w).map(move |ix| (ix, iy)))
            .map(|(ix, iy)| {
                vec![
                    ix.into(),
                    iy.into(),
                    ((ix as f64 + 0.5) / w as f64 * tau).into(),
                    ((iy as f64 + 0.5) / h as f64 * tau).into(),
                    field.get(ix, iy).into(),
                ]
            })
            .collect();
        io::write_csv(&p, cfg, &["ix", "iy", "x", "y", "exponent"], &rows)?;
    }
    Ok((
        0,
        format!(
            "heatmap r={r} grid={w}x{h} n={n}: min {:.4}, max {:.4}, mean {:.4}, mass <= {NEAR_ZERO} {:.3}, mass > {CHAOTIC} {:.3}",
            field.min(),
            field.max(),
            field.mean(),
            field.fraction_below(NEAR_ZERO),
            field.fraction_above(CHAOTIC),
        ),
    ))
}

fn direction(field: &str, n: f64) -> Result<[f64; 2]> {
    let v = match field {
        "good" => [1.0, 0.0],
        "bad" => [1.0, n.sqrt()],
        "vertical" => [0.0, 1.0],
        s => [
            1.0,
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("field `{s}`: {e}")))?,
        ],
    };
    let r = v[0].hypot(v[1]);
    if !r.is_finite() {
        return Err(Error::InvalidParams(format!(
            "field `{field}` is not a direction"
        )));
    }
    Ok([v[0] / r, v[1] / r])
}

const UCURVE_COLUMNS: [&str; 15] = [
    "curve",
    "class",
    "level",
    "curve_mode",
    "piece_mode",
    "full_pieces",
    "sample_size",
    "good",
    "bad",
    "leftover",
    "good_fraction",
    "bad_fraction",
    "std_err",
    "expectation",
    "distortion",
];

fn class_name(c: Class) -> &'static str {
    match c {
        Class::Good => "good",
        Class::Bad => "bad",
    }
}

fn ucurve_stats(cfg: &RunConfig) -> Result<(i32, String)> {
    let n: u32 = value(cfg, "N")?;
    let nf = n as f64;
    let curves: usize = value(cfg, "curves")?;
    let k: usize = value(cfg, "k")?;
    let root: u64 = value(cfg, "seed")?;
    let samples: usize = value(cfg, "samples")?;
    let spp: usize = value(cfg, "samples_per_piece")?;
    let field = cfg.get("field").unwrap_or_default();
    let dir = direction(field, nf)?;
    let curve_mode = cfg.get("curve_mode").unwrap_or_default();
    let pieces = cfg.get("pieces").unwrap_or_default();
    if curves == 0 || k == 0 {
        return Err(Error::InvalidParams("need curves >= 1 and k >= 1".into()));
    }
    if !matches!(pieces, "auto" | "enumeration" | "montecarlo") {
        return Err(Error::InvalidParams(format!(
            "unknown piece mode `{pieces}`"
        )));
    }
    let class = if ucurves::in_cone(nf, dir) {
        Class::Good
    } else {
        Class::Bad
    };
    let rows: Vec<Vec<Cell>> = match curve_mode {
        "surrogate" => {
            if k != 1 {
                return Err(Error::InvalidParams(
                    "the surrogate covers level k = 1 only".into(),
                ));
            }
            let s = ucurves::surrogate_stats(nf, dir, SURROGATE_GRID)?;
            vec![vec![
                0usize.into(),
                class_name(class).into(),
                1usize.into(),
                "surrogate".into(),
                "grid".into(),
                0usize.into(),
                s.grid.into(),
                0usize.into(),
                0usize.into(),
                0usize.into(),
                s.good_fraction.into(),
                s.bad_fraction.into(),
                0.0.into(),
                s.expectation.into(),
                f64::NAN.into(),
            ]]
        }
        "exact" => {
            if n > ucurves::N_CURVE_MAX {
                return Err(Error::InvalidParams(format!(
                    "exact curves need N <= {}",
                    ucurves::N_CURVE_MAX
                )));
            }
            let map = MapModel::new(&MapSpec::f_n(n))?;
            let cache = CurveCache::new(root);
            (0..curves)
                .into_par_iter()
                .map(|i| {
                    let curve = cache.curve(n, i)?;
                    let f = ucurves::make_adapted_field(curve, XSpec::Constant(dir))?;
                    let e = f.expectation()?;
                    let count = ucurves::push_field(&f, k)?.count;
                    let enumerate = match pieces {
                        "enumeration" => true,
                        "montecarlo" => false,
                        _ => count <= AUTO_ENUMERATION_MAX,
                    };
                    let mode = if enumerate {
                        Mode::Exact
                    } else {
                        Mode::MonteCarlo {
                            samples,
                            seed: seed::task_seed(root, i as u64),
                        }
                    };
                    let s = ucurves::transition_stats(&f, k, mode, spp, None)?;
                    let d = ucurves::distortion_estimate(&f.curve, k, &map, 2_000)?;
                    Ok(vec![
                        i.into(),
                        class_name(f.class).into(),
                        k.into(),
                        "exact".into(),
                        (if enumerate {
                            "enumeration"
                        } else {
                            "montecarlo"
                        })
                        .into(),
                        s.full_pieces.into(),
                        s.sample_size.into(),
                        s.good.into(),
                        s.bad.into(),
                        s.leftover.into(),
                        s.good_fraction.into(),
                        s.bad_fraction.into(),
                        s.std_err.into(),
                        e.into(),
                        d.into(),
                    ])
                })
                .collect::<Result<_>>()?
        }
        other => {
            return Err(Error::InvalidParams(format!(
                "unknown curve mode `{other}`"
            )))
        }
    };
    if let Some(p) = out_path(cfg) {
        io::write_csv(&p, cfg, &UCURVE_COLUMNS, &rows)?;
    }
    let col = |name: &str| -> Vec<f64> {
        let j = UCURVE_COLUMNS
            .iter()
            .position(|c| *c == name)
            .expect("column");
        rows.iter()
            .map(|r| match r[j] {
                Cell::Num(x) => x,
                _ => f64::NAN,
            })
            .collect()
    };
    let e = col("expectation");
    let g = col("good_fraction");
    let e_min = e.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok((
        0,
        format!(
            "ucurve-stats N={n} field={field} ({}) k={k} {curve_mode}: E min {e_min:.4} mean {:.4}, good fraction {:.4}, curves {}",
            class_name(class),
            mean(&e),
            mean(&g),
            rows.len(),
        ),
    ))
}

const VERIFY_COLUMNS: [&str; 14] = [
    "id", "N", "eps", "samples", "curves", "seed", "status", "margin", "measured", "bound",
    "relation", "gating", "holds", "note",
];

fn report_rows(r: &CheckReport) -> Vec<Vec<Cell>> {
    let head = || -> Vec<Cell> {
        vec![
            r.id.into(),
            r.params.n.into(),
            r.params.eps.into(),
            r.samples.into(),
            r.curves.into(),
            r.params.seed.into(),
            r.status.to_string().into(),
        ]
    };
    if r.margins.is_empty() {
        let mut row = head();
        row.extend([
            "".into(),
            f64::NAN.into(),
            f64::NAN.into(),
            "".into(),
            "".into(),
            "".into(),
            r.note.clone().into(),
        ]);
        return vec![row];
    }
    r.margins
        .iter()
        .map(|m| {
            let mut row = head();
            row.extend([
                m.name.clone().into(),
                m.measured.into(),
                m.bound.into(),
                (if m.upper { "<=" } else { ">=" }).into(),
                (m.gating as u32).into(),
                (m.holds() as u32).into(),
                r.note.clone().into(),
            ]);
            row
        })
        .collect()
}

fn report_line(r: &CheckReport) -> String {
    let worst = r
        .margins
        .iter()
        .filter(|m| m.gating || r.status == Status::ReportOnly)
        .min_by(|a, b| {
            let rel = |m: &verification::Margin| m.margin() / m.bound.abs().max(f64::MIN_POSITIVE);
            rel(a).total_cmp(&rel(b))
        });
    let detail = match worst {
        Some(m) => format!(
            "{} = {:.6e} {} {:.6e}",
            m.name,
            m.measured,
            if m.upper { "<=" } else { ">=" },
            m.bound
        ),
        None => String::new(),
    };
    let note = if r.note.is_empty() {
        String::new()
    } else {
        format!(" [{}]", r.note)
    };
    format!(
        "{:<11} {:<24} N={} eps={} {detail}{note}",
        r.status.to_string(),
        r.id,
        r.params.n,
        r.params.eps
    )
}

fn verify(cfg: &RunConfig) -> Result<(i32, String)> {
    let params = CheckParams {
        n: value(cfg, "N")?,
        eps: value(cfg, "eps")?,
        samples: maybe(cfg, "samples")?,
        curves: maybe(cfg, "curves")?,
        seed: value(cfg, "seed")?,
    };
    let (label, ids, reports): (String, Vec<String>, Vec<Result<CheckReport>>) =
        match cfg.get("check") {
            Some(_) => {
                let ids: Vec<String> = list(cfg, "check")?;
                if ids.is_empty() {
                    return Err(Error::InvalidParams("empty check list".into()));
                }
                for id in &ids {
                    if !verification::ids().any(|k| k == id) {
                        return Err(Error::UnknownCheck(id.clone()));
                    }
                }
                let cache = CurveCache::new(params.seed);
                let reports = ids
                    .par_iter()
                    .map(|id| verification::run_with_cache(id, &params, &cache))
                    .collect();
                (format!("checks={}", ids.join(",")), ids, reports)
            }
            None => {
                let suite: Suite = value(cfg, "suite")?;
                let reports = verification::run_suite(suite, &params);
                let ids = verification::REGISTRY
                    .iter()
                    .cycle()
                    .take(reports.len())
                    .map(|e| e.id.to_string())
                    .collect();
                (
                    format!("suite={}", cfg.get("suite").unwrap_or_default()),
                    ids,
                    reports,
                )
            }
        };
    let mut rows = Vec::new();
    let (mut pass, mut fail, mut report_only, mut errors) = (0, 0, 0, 0);
    for (id, r) in ids.iter().zip(&reports) {
        match r {
            Ok(r) => {
                println!("{}", report_line(r));
                rows.extend(report_rows(r));
                match r.status {
                    Status::Pass => pass += 1,
                    Status::Fail => fail += 1,
                    Status::ReportOnly => report_only += 1,
                }
            }
            Err(e) => {
                println!("{:<11} {id:<24} {e}", "error");
                let mut row: Vec<Cell> =
                    vec![id.as_str().into(), params.n.into(), params.eps.into()];
                row.extend([
                    0usize.into(),
                    0usize.into(),
                    params.seed.into(),
                    "error".into(),
                ]);
                row.extend([
                    "".into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    "".into(),
                    "".into(),
                    "".into(),
                ]);
                row.push(e.to_string().into());
                rows.push(row);
                errors += 1;
            }
        }
    }
    if let Some(p) = out_path(cfg) {
        io::write_csv(&p, cfg, &VERIFY_COLUMNS, &rows)?;
    }
    Ok((
        verification::exit_code(&reports),
        format!(
            "verify {label} N={} eps={}: {pass} pass, {fail} fail, {report_only} report-only, {errors} errors",
            params.n, params.eps
        ),
    ))
}

fn perturb_sweep(cfg: &RunConfig) -> Result<(i32, String)> {
    let n: u32 = value(cfg, "N")?;
    let eps: Vec<f64> = list(cfg, "eps")?;
    let seeds: usize = value(cfg, "seeds")?;
    let iters: usize = value(cfg, "n")?;
    let root: u64 = value(cfg, "seed")?;
    let checks: Vec<String> = list(cfg, "checks")?;
    if eps.is_empty() || seeds == 0 {
        return Err(Error::InvalidParams(
            "need at least one ε and one seed".into(),
        ));
    }
    for id in &checks {
        if !verification::ids().any(|k| k == id) {
            return Err(Error::UnknownCheck(id.clone()));
        }
    }
    let bound = (n as f64).ln() / 40.0;
    let mut rows = Vec::new();
    let mut code = 0;
    let mut worst = f64::INFINITY;
    for &e in &eps {
        let spec = if e == 0.0 {
            MapSpec::f_n(n)
        } else {
            MapSpec::perturbed_f_n(n, e)
        };
        let map = MapModel::new(&spec)?;
        let reports = (0..seeds)
            .into_par_iter()
            .map(|i| {
                spectrum::split_spectrum(
                    &map,
                    &random_point(4, root, i as u64),
                    iters,
                    SpectrumOptions::default(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut min_c = f64::INFINITY;
        for (i, r) in reports.iter().enumerate() {
            let chi_c = r.exponents[1];
            min_c = min_c.min(chi_c);
            let mut row: Vec<Cell> = vec![e.into(), i.into()];
            row.extend(r.exponents.iter().map(|&x| Cell::from(x)));
            row.extend([
                r.sum_residual.into(),
                r.pairing_residual.into(),
                bound.into(),
                ((chi_c > bound) as u32).into(),
            ]);
            rows.push(row);
        }
        worst = worst.min(min_c);
        if min_c <= bound {
            code = 1;
        }
        let params = CheckParams {
            eps: e,
            seed: root,
            ..CheckParams::new(n)
        };
        let cache = CurveCache::new(root);
        let mut statuses = Vec::new();
        for id in &checks {
            let r = verification::run_with_cache(id, &params, &cache)?;
            if r.status == Status::Fail {
                code = 1;
            }
            statuses.push(format!("{id} {}", r.status));
        }
        println!(
            "eps={e}: chi_c+ min {min_c:.4} (bound {bound:.4}) over {seeds} orbits{}{}",
            if statuses.is_empty() { "" } else { "; " },
            statuses.join(", ")
        );
    }
    if let Some(p) = out_path(cfg) {
        let cols = [
            "eps",
            "orbit",
            "chi_1",
            "chi_2",
            "chi_3",
            "chi_4",
            "sum_residual",
            "pairing_residual",
            "chi_c_bound",
            "above_bound",
        ];
        io::write_csv(&p, cfg, &cols, &rows)?;
    }
    Ok((
        code,
        format!(
            "perturb-sweep N={n} eps={} seeds={seeds} n={iters}: min chi_c+ {worst:.4} vs bound {bound:.4}",
            cfg.get("eps").unwrap_or_default()
        ),
    ))
}
