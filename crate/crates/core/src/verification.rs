//! Named numerical checks of the inequalities behind the main theorem, with
//! three-valued outcomes and measured margins, and the suites that run them.
//!
//! Each registry entry records the smallest N at which its inequality was
//! observed to hold; below it a check reports its margins without gating.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::maps::{BaseMap, MapModel, MapSpec, SkewProduct};
use crate::seed;
use crate::torus::{Angle, TorusPoint};
use crate::ucurves::{self, UCurve, UCurveOptions};

mod checks;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    ReportOnly,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::ReportOnly => "report-only",
        })
    }
}

/// One measured quantity against its bound.
#[derive(Clone, Debug, PartialEq)]
pub struct Margin {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    /// The inequality is `measured ≤ bound` (otherwise `measured ≥ bound`).
    pub upper: bool,
    pub gating: bool,
}

impl Margin {
    fn new(name: &str, measured: f64, bound: f64, upper: bool) -> Margin {
        Margin {
            name: name.to_string(),
            measured,
            bound,
            upper,
            gating: true,
        }
    }

    pub fn at_most(name: &str, measured: f64, bound: f64) -> Margin {
        Margin::new(name, measured, bound, true)
    }

    pub fn at_least(name: &str, measured: f64, bound: f64) -> Margin {
        Margin::new(name, measured, bound, false)
    }

    pub fn informational(mut self) -> Margin {
        self.gating = false;
        self
    }

    pub fn gated_if(mut self, on: bool) -> Margin {
        self.gating = on;
        self
    }

    /// `measured − bound`.
    pub fn margin(&self) -> f64 {
        self.measured - self.bound
    }

    pub fn holds(&self) -> bool {
        if self.upper {
            self.measured <= self.bound
        } else {
            self.measured >= self.bound
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckParams {
    pub n: u32,
    pub eps: f64,
    /// Overrides the registry sample size.
    pub samples: Option<usize>,
    /// Overrides the registry curve count.
    pub curves: Option<usize>,
    pub seed: u64,
}

impl CheckParams {
    pub fn new(n: u32) -> CheckParams {
        CheckParams {
            n,
            eps: 0.0,
            samples: None,
            curves: None,
            seed: DEFAULT_SEED,
        }
    }
}

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub id: &'static str,
    pub params: CheckParams,
    pub samples: usize,
    pub curves: usize,
    pub status: Status,
    pub margins: Vec<Margin>,
    pub wall_time: f64,
    pub note: String,
}

impl CheckReport {
    /// Everything except the wall time, for reproducibility comparisons.
    pub fn same_result(&self, other: &CheckReport) -> bool {
        self.id == other.id
            && self.samples == other.samples
            && self.curves == other.curves
            && self.status == other.status
            && self.margins == other.margins
            && self.note == other.note
    }
}

/// Which map a check describes when ε ≠ 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    /// A statement about f_N; evaluated on f_N.
    Unperturbed,
    /// A pointwise statement that also holds for g; evaluated on g.
    Perturbed,
    /// A statement about g along its u-curves; evaluated on f_N and reported.
    PerturbedCurves,
}

pub struct Entry {
    pub id: &'static str,
    pub min_n: u32,
    /// Largest N within working precision.
    pub max_n: u32,
    pub samples: usize,
    pub curves: usize,
    pub scope: Scope,
    /// Never gates, whatever N.
    pub report_only: bool,
    run: fn(&mut Ctx) -> Result<Outcome>,
}

macro_rules! entry {
    ($id:literal, $min:expr, $samples:expr, $curves:expr, $scope:ident, $ro:expr, $f:path) => {
        entry!($id, $min, $samples, $curves, $scope, $ro, $f, u32::MAX)
    };
    ($id:literal, $min:expr, $samples:expr, $curves:expr, $scope:ident, $ro:expr, $f:path, $max:expr) => {
        Entry {
            id: $id,
            min_n: $min,
            max_n: $max,
            samples: $samples,
            curves: $curves,
            scope: Scope::$scope,
            report_only: $ro,
            run: $f,
        }
    };
}

pub static REGISTRY: &[Entry] = &[
    entry!(
        "reversibility",
        1,
        1_000,
        0,
        Unperturbed,
        false,
        checks::reversibility
    ),
    entry!(
        "inverse_conjugacy",
        1,
        1_000,
        0,
        Unperturbed,
        false,
        checks::inverse_conjugacy
    ),
    entry!(
        "center_norm",
        3,
        10_000,
        0,
        Unperturbed,
        false,
        checks::center_norm
    ),
    entry!(
        "second_derivative",
        1,
        10_000,
        0,
        Perturbed,
        false,
        checks::second_derivative
    ),
    entry!(
        "partial_hyp_constants",
        3,
        10_000,
        0,
        Perturbed,
        false,
        checks::partial_hyp_constants,
        20
    ),
    entry!(
        "alpha_invariance",
        2,
        1_000,
        0,
        Unperturbed,
        false,
        checks::alpha_invariance
    ),
    entry!(
        "cone_ratio",
        1,
        10_000,
        0,
        Unperturbed,
        false,
        checks::cone_ratio
    ),
    entry!("variation", 1, 64, 1, Unperturbed, false, checks::variation),
    entry!(
        "holder_transport",
        1,
        64,
        1,
        Unperturbed,
        false,
        checks::holder_transport
    ),
    entry!("bounds", 1, 0, 20, Unperturbed, false, checks::bounds),
    entry!(
        "omega_offcrit",
        2,
        100_000,
        0,
        Unperturbed,
        false,
        checks::omega_offcrit
    ),
    entry!(
        "sin_theta",
        ucurves::SIN_THETA_MIN_N,
        100_000,
        0,
        Unperturbed,
        false,
        checks::sin_theta
    ),
    entry!(
        "good_to_good",
        22,
        100_000,
        0,
        Unperturbed,
        false,
        checks::good_to_good
    ),
    entry!(
        "bad_to_good",
        7,
        10_000,
        0,
        Unperturbed,
        false,
        checks::bad_to_good
    ),
    entry!(
        "transitions",
        2,
        4_000,
        1,
        Unperturbed,
        false,
        checks::transitions
    ),
    entry!(
        "ratio_100",
        29,
        4_000,
        1,
        Unperturbed,
        false,
        checks::ratio_100
    ),
    entry!(
        "jacobian_range",
        2,
        10_000,
        0,
        Perturbed,
        false,
        checks::jacobian_range
    ),
    entry!(
        "distortion",
        1,
        2_000,
        1,
        Perturbed,
        false,
        checks::distortion
    ),
    entry!(
        "weighted_sums",
        1,
        2_000,
        1,
        PerturbedCurves,
        false,
        checks::weighted_sums
    ),
    entry!(
        "weighted_total",
        1,
        2_000,
        1,
        PerturbedCurves,
        false,
        checks::weighted_total
    ),
    entry!("fonda", 1, 400, 1, PerturbedCurves, false, checks::fonda),
    entry!(
        "symplectic",
        1,
        1_000,
        0,
        Unperturbed,
        false,
        checks::symplectic,
        14
    ),
    entry!(
        "holder_center_empirical",
        1,
        1_000,
        0,
        Perturbed,
        true,
        checks::holder_center_empirical
    ),
];

pub fn ids() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|e| e.id)
}

fn lookup(id: &str) -> Result<(usize, &'static Entry)> {
    REGISTRY
        .iter()
        .enumerate()
        .find(|(_, e)| e.id == id)
        .ok_or_else(|| Error::UnknownCheck(id.to_string()))
}

/// What a check function hands back.
#[derive(Default)]
pub(crate) struct Outcome {
    margins: Vec<Margin>,
    note: Vec<String>,
    /// The statement could not be evaluated as stated at these parameters.
    report_only: bool,
}

impl Outcome {
    fn push(&mut self, m: Margin) {
        self.margins.push(m);
    }

    fn note(&mut self, s: impl Into<String>) {
        self.note.push(s.into());
    }

    fn unavailable(why: &str) -> Outcome {
        Outcome {
            margins: Vec::new(),
            note: vec![why.to_string()],
            report_only: true,
        }
    }
}

type CurveKey = (u32, usize);

/// Root u-curves shared by the checks of one suite run.
type CurveSlot = Arc<OnceLock<std::result::Result<UCurve, String>>>;

#[derive(Default)]
pub struct CurveCache {
    seed: u64,
    slots: Mutex<HashMap<CurveKey, CurveSlot>>,
}

impl CurveCache {
    pub fn new(seed: u64) -> CurveCache {
        CurveCache {
            seed,
            slots: Mutex::default(),
        }
    }

    /// Start of root curve `i`.
    pub fn start(&self, i: usize) -> TorusPoint {
        let mut rng = seed::task_rng(seed::splitmix64(self.seed), 1_000 + i as u64);
        TorusPoint::random_t4(&mut rng)
    }

    /// Root curve `i` for f_N.
    pub fn curve(&self, n: u32, i: usize) -> Result<UCurve> {
        let slot = {
            let mut slots = self.slots.lock().expect("cache lock");
            slots.entry((n, i)).or_default().clone()
        };
        let res = slot.get_or_init(|| {
            let map = MapModel::new(&MapSpec::f_n(n)).map_err(|e| e.to_string())?;
            let opts = UCurveOptions {
                store_every: store_every(n),
                ..UCurveOptions::default()
            };
            ucurves::integrate_ucurve(&map, &self.start(i), opts).map_err(|e| e.to_string())
        });
        res.clone().map_err(Error::Numerical)
    }
}

fn store_every(n: u32) -> usize {
    if n >= 9 {
        16
    } else {
        1
    }
}

pub(crate) struct Ctx<'a> {
    pub n: u32,
    pub eps: f64,
    pub samples: usize,
    pub curves: usize,
    pub rng: ChaCha8Rng,
    /// (f_N, map under test), or why they could not be built.
    maps: std::result::Result<(MapModel, MapModel), Error>,
    pub cache: &'a CurveCache,
}

impl Ctx<'_> {
    /// f_N.
    pub fn f(&self) -> Result<&MapModel> {
        self.maps.as_ref().map(|m| &m.0).map_err(unavailable_map)
    }

    /// The map under test; f_N when ε = 0.
    pub fn g(&self) -> Result<&MapModel> {
        self.maps.as_ref().map(|m| &m.1).map_err(unavailable_map)
    }

    pub fn skew(&self) -> Result<&SkewProduct> {
        Ok(self.f()?.skew().expect("f_N is a skew product"))
    }

    /// s_N.
    pub fn base(&self) -> BaseMap {
        BaseMap { p: 2, r: self.nf() }
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    pub fn random4(&mut self) -> [Angle; 4] {
        std::array::from_fn(|_| Angle::random(&mut self.rng))
    }

    pub fn unit4(&mut self) -> [f64; 4] {
        loop {
            let v: [f64; 4] = std::array::from_fn(|_| 2.0 * self.rng.gen::<f64>() - 1.0);
            let r = crate::bundles::norm(&v);
            if r > 1e-3 && r <= 1.0 {
                return v.map(|c| c / r);
            }
        }
    }

    pub fn perturbed(&self) -> bool {
        self.eps != 0.0
    }

    /// Curve-level work is limited to the curve integrator's range.
    pub fn curves_available(&self) -> bool {
        self.n <= ucurves::N_CURVE_MAX
    }
}

fn unavailable_map(e: &Error) -> Error {
    match e {
        Error::InvalidParams(s) => Error::InvalidParams(s.clone()),
        other => Error::InvalidParams(other.to_string()),
    }
}

/// Runs one check with its own generator and a private curve cache.
pub fn run_check(id: &str, params: &CheckParams) -> Result<CheckReport> {
    run_with_cache(id, params, &CurveCache::new(params.seed))
}

pub fn run_with_cache(id: &str, params: &CheckParams, cache: &CurveCache) -> Result<CheckReport> {
    let (index, entry) = lookup(id)?;
    if params.n < 1 {
        return Err(Error::InvalidParams("N must be at least 1".into()));
    }
    if !params.eps.is_finite() {
        return Err(Error::InvalidParams("ε must be finite".into()));
    }
    let start = Instant::now();
    // Built lazily in effect: checks that need no map still run when f_N
    // cannot be represented.
    let maps = MapModel::new(&MapSpec::f_n(params.n)).and_then(|f| {
        let g = if params.eps == 0.0 {
            f.clone()
        } else {
            MapModel::new(&MapSpec::perturbed_f_n(params.n, params.eps))?
        };
        Ok((f, g))
    });
    let mut ctx = Ctx {
        n: params.n,
        eps: params.eps,
        samples: params.samples.unwrap_or(entry.samples),
        curves: params.curves.unwrap_or(entry.curves),
        rng: seed::task_rng(params.seed, index as u64),
        maps,
        cache,
    };
    if ctx.samples == 0 && entry.samples > 0 {
        return Err(Error::InvalidParams(format!("{id} needs samples")));
    }
    if ctx.curves == 0 && entry.curves > 0 {
        return Err(Error::InvalidParams(format!("{id} needs curves")));
    }
    let mut out = match ((entry.run)(&mut ctx), &ctx.maps) {
        (Ok(out), _) => out,
        (Err(_), Err(e)) => Outcome::unavailable(&format!("f_N not representable: {e}")),
        (Err(e), Ok(_)) => return Err(e),
    };
    let below = params.n < entry.min_n;
    let above = params.n > entry.max_n;
    let mut report_only = entry.report_only || below || above || out.report_only;
    if below {
        out.note(format!("below validity threshold N >= {}", entry.min_n));
    }
    if above {
        out.note(format!("beyond working precision N <= {}", entry.max_n));
    }
    if ctx.perturbed() {
        match entry.scope {
            Scope::Unperturbed => out.note("statement about f_N; evaluated on f_N"),
            Scope::PerturbedCurves => {
                out.note("u-curves of g not integrated; evaluated on f_N");
                report_only = true;
            }
            Scope::Perturbed => {}
        }
    }
    if report_only {
        for m in &mut out.margins {
            m.gating = false;
        }
    }
    let status = if report_only {
        Status::ReportOnly
    } else if out.margins.iter().any(|m| m.gating && !m.holds()) {
        Status::Fail
    } else {
        Status::Pass
    };
    Ok(CheckReport {
        id: entry.id,
        params: *params,
        samples: ctx.samples,
        curves: ctx.curves,
        status,
        margins: out.margins,
        wall_time: start.elapsed().as_secs_f64(),
        note: out.note.join("; "),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    FN,
    Perturbed,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Suite> {
        match s {
            "fN" | "fn" | "f_N" => Ok(Suite::FN),
            "perturbed" => Ok(Suite::Perturbed),
            "all" => Ok(Suite::All),
            _ => Err(Error::Parse(format!("unknown suite `{s}`"))),
        }
    }
}

/// Runs every registered check. The fN suite forces ε = 0; the perturbed
/// suite uses `params.eps`; `all` runs both, fN first. Reports come back in
/// registry order.
pub fn run_suite(suite: Suite, params: &CheckParams) -> Vec<Result<CheckReport>> {
    let passes: Vec<CheckParams> = match suite {
        Suite::FN => vec![CheckParams {
            eps: 0.0,
            ..*params
        }],
        Suite::Perturbed => vec![*params],
        Suite::All => vec![
            CheckParams {
                eps: 0.0,
                ..*params
            },
            *params,
        ],
    };
    let mut out = Vec::new();
    for p in passes {
        let cache = CurveCache::new(p.seed);
        let reports: Vec<Result<CheckReport>> = REGISTRY
            .par_iter()
            .map(|e| run_with_cache(e.id, &p, &cache))
            .collect();
        out.extend(reports);
    }
    out
}

/// 0 when everything passed or was report-only, 1 on any failure, 2 on any
/// execution error.
pub fn exit_code(reports: &[Result<CheckReport>]) -> i32 {
    if reports.iter().any(|r| r.is_err()) {
        2
    } else if reports
        .iter()
        .any(|r| matches!(r, Ok(c) if c.status == Status::Fail))
    {
        1
    } else {
        0
    }
}

#[cfg(test)]
mod tests;
