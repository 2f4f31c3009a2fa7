//! The `skewlab` command line.
//!
//! Every subcommand resolves its flags into a [`RunConfig`]: values from
//! `--config` first, then explicit flags, then defaults. Computation reads
//! only the resolved config, so writing it back out and re-running it
//! reproduces the output.

use std::ffi::OsString;
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::io::RunConfig;
use crate::maps::MapSpec;
use crate::verification::DEFAULT_SEED;

mod commands;

const MAP_KEYS: [&str; 10] = [
    "family", "inner", "r", "N", "N1", "N2", "p", "eps", "A", "L",
];

#[derive(Parser, Debug)]
#[command(
    name = "skewlab",
    version,
    about = "Lyapunov spectra, u-curve statistics and checks for f_N"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lyapunov spectrum of one or more orbits.
    Spectrum(SpectrumArgs),
    /// Exponent field of the standard map as a PGM image.
    Heatmap(HeatmapArgs),
    /// Expectations and level-k transition counts along u-curves of f_N.
    UcurveStats(UcurveArgs),
    /// Run verification checks.
    Verify(VerifyArgs),
    /// Spectra and perturbation checks over a list of ε.
    PerturbSweep(SweepArgs),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// key=value file with defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the resolved configuration here.
    #[arg(long)]
    save_config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct MapArgs {
    /// standard, cat_power, fN, fr, gN1N2, p_variant or perturbed.
    #[arg(long)]
    family: Option<String>,
    /// Family wrapped by `perturbed`.
    #[arg(long)]
    inner: Option<String>,
    #[arg(long = "N", value_name = "N")]
    big_n: Option<u32>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long = "N1")]
    n1: Option<u32>,
    #[arg(long = "N2")]
    n2: Option<u32>,
    #[arg(long)]
    p: Option<i64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Fiber matrix as `a,b,c,d`.
    #[arg(long = "A")]
    a: Option<String>,
    #[arg(long = "L")]
    l: Option<String>,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    map: MapArgs,
    /// Iterations per orbit.
    #[arg(long = "n")]
    iterations: Option<usize>,
    #[arg(long)]
    orbits: Option<usize>,
    #[arg(long)]
    qr_stride: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// full (one QR frame) or split (forward and backward half frames, T⁴ only).
    #[arg(long)]
    method: Option<String>,
}

#[derive(Args, Debug)]
struct HeatmapArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_hyphen_values = true)]
    r: Option<f64>,
    /// `W` or `WxH`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long = "n")]
    iterations: Option<usize>,
    /// Also write the raw field as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct UcurveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "N", value_name = "N")]
    big_n: Option<u32>,
    #[arg(long)]
    curves: Option<usize>,
    /// good, bad, vertical, or a slope n for the direction (1, n).
    #[arg(long, allow_hyphen_values = true)]
    field: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// exact or surrogate.
    #[arg(long)]
    curve_mode: Option<String>,
    /// auto, enumeration or montecarlo.
    #[arg(long)]
    pieces: Option<String>,
    /// Monte Carlo draws.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    samples_per_piece: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// fN, perturbed or all.
    #[arg(long)]
    suite: Option<String>,
    /// Comma-separated check ids instead of a suite.
    #[arg(long)]
    check: Option<String>,
    #[arg(long = "N", value_name = "N")]
    big_n: Option<u32>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    curves: Option<usize>,
    /// List check ids and exit.
    #[arg(long)]
    list: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "N", value_name = "N")]
    big_n: Option<u32>,
    /// Comma-separated ε values.
    #[arg(long)]
    eps: Option<String>,
    /// Orbits per ε.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long = "n")]
    iterations: Option<usize>,
    /// Comma-separated check ids run at every ε.
    #[arg(long)]
    checks: Option<String>,
}

/// Flags overlaid on a config.
struct Overlay(RunConfig);

impl Overlay {
    fn set<T: ToString>(&mut self, key: &str, v: &Option<T>) -> &mut Self {
        if let Some(v) = v {
            self.0.set(key, v.to_string());
        }
        self
    }

    fn default<T: ToString>(&mut self, key: &str, v: T) -> &mut Self {
        self.0
            .entries
            .entry(key.to_string())
            .or_insert_with(|| v.to_string());
        self
    }
}

fn start(subcommand: &str, common: &Common) -> Result<Overlay> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::read(path)?,
        None => RunConfig::default(),
    };
    match cfg.get("subcommand") {
        Some(s) if s != subcommand => {
            return Err(Error::InvalidParams(format!(
                "config is for `{s}`, not `{subcommand}`"
            )))
        }
        _ => {}
    }
    cfg.set("subcommand", subcommand);
    let mut o = Overlay(cfg);
    o.set("seed", &common.seed).default("seed", DEFAULT_SEED);
    o.set("out", &common.out.as_ref().map(|p| p.display().to_string()));
    Ok(o)
}

fn finish(o: Overlay, common: &Common) -> Result<RunConfig> {
    if let Some(path) = &common.save_config {
        o.0.write(path)?;
    }
    Ok(o.0)
}

pub(crate) fn value<T: FromStr>(cfg: &RunConfig, key: &str) -> Result<T>
where
    T::Err: Display,
{
    let s = cfg
        .get(key)
        .ok_or_else(|| Error::InvalidParams(format!("missing `{key}`")))?;
    s.parse()
        .map_err(|e| Error::Parse(format!("{key}={s}: {e}")))
}

pub(crate) fn maybe<T: FromStr>(cfg: &RunConfig, key: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    cfg.get(key).map(|_| value(cfg, key)).transpose()
}

pub(crate) fn list<T: FromStr>(cfg: &RunConfig, key: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    let s = cfg.get(key).unwrap_or_default();
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse()
                .map_err(|e| Error::Parse(format!("{key}: `{p}`: {e}")))
        })
        .collect()
}

/// Resolves the map keys of `cfg` into a spec and rewrites them in canonical
/// form. A nonzero `eps` on a plain family wraps it in `perturbed`.
pub(crate) fn resolve_map(cfg: &mut RunConfig) -> Result<MapSpec> {
    let family = cfg.get("family").unwrap_or("fN").to_string();
    cfg.set("family", &family);
    let eps: Option<f64> = maybe(cfg, "eps")?;
    if family != "perturbed" && eps.is_some_and(|e| e != 0.0) {
        cfg.set("inner", &family).set("family", "perturbed");
    }
    let spec = MapSpec::from_pairs(&cfg.entries)?;
    for k in MAP_KEYS {
        cfg.entries.remove(k);
    }
    cfg.extend(spec.to_pairs());
    Ok(spec)
}

fn resolve(command: &Command) -> Result<RunConfig> {
    match command {
        Command::Spectrum(a) => {
            let mut o = start("spectrum", &a.common)?;
            overlay_map(&mut o, &a.map);
            o.set("n", &a.iterations)
                .set("orbits", &a.orbits)
                .set("qr_stride", &a.qr_stride)
                .set("burn_in", &a.burn_in)
                .set("method", &a.method)
                .default("n", 100_000)
                .default("orbits", 1)
                .default("qr_stride", 1)
                .default("burn_in", 0);
            let spec = resolve_map(&mut o.0)?;
            o.default("method", default_method(&spec)?);
            finish(o, &a.common)
        }
        Command::Heatmap(a) => {
            let mut o = start("heatmap", &a.common)?;
            o.set("r", &a.r)
                .set("grid", &a.grid)
                .set("n", &a.iterations)
                .set("csv", &a.csv.as_ref().map(|p| p.display().to_string()))
                .default("r", -0.364)
                .default("grid", 512)
                .default("n", 1_000);
            finish(o, &a.common)
        }
        Command::UcurveStats(a) => {
            let mut o = start("ucurve-stats", &a.common)?;
            o.set("N", &a.big_n)
                .set("curves", &a.curves)
                .set("field", &a.field)
                .set("k", &a.k)
                .set("curve_mode", &a.curve_mode)
                .set("pieces", &a.pieces)
                .set("samples", &a.samples)
                .set("samples_per_piece", &a.samples_per_piece)
                .default("N", 10)
                .default("curves", 1)
                .default("field", "good")
                .default("k", 1)
                .default("pieces", "auto")
                .default("samples", 4_000)
                .default("samples_per_piece", 8);
            let n: u32 = value(&o.0, "N")?;
            let mode = if n <= crate::ucurves::N_CURVE_MAX {
                "exact"
            } else {
                "surrogate"
            };
            o.default("curve_mode", mode);
            finish(o, &a.common)
        }
        Command::Verify(a) => {
            let mut o = start("verify", &a.common)?;
            o.set("suite", &a.suite)
                .set("check", &a.check)
                .set("N", &a.big_n)
                .set("eps", &a.eps)
                .set("samples", &a.samples)
                .set("curves", &a.curves)
                .default("N", 10)
                .default("eps", 0.0);
            if o.0.get("check").is_none() {
                o.default("suite", "fN");
            }
            finish(o, &a.common)
        }
        Command::PerturbSweep(a) => {
            let mut o = start("perturb-sweep", &a.common)?;
            o.set("N", &a.big_n)
                .set("eps", &a.eps)
                .set("seeds", &a.seeds)
                .set("n", &a.iterations)
                .set("checks", &a.checks)
                .default("N", 10)
                .default("eps", "0,1e-4,1e-3")
                .default("seeds", 10)
                .default("n", 100_000)
                .default("checks", "partial_hyp_constants,jacobian_range");
            finish(o, &a.common)
        }
    }
}

/// Largest per-step spread `χ_1 − χ_d` a single QR frame resolves.
const FULL_FRAME_SPREAD: f64 = 32.0;

fn default_method(spec: &MapSpec) -> Result<&'static str> {
    let map = crate::maps::MapModel::new(spec)?;
    Ok(match map.unperturbed() {
        Some(s) if 2.0 * s.fiber_mu().ln() > FULL_FRAME_SPREAD => "split",
        _ => "full",
    })
}

fn overlay_map(o: &mut Overlay, m: &MapArgs) {
    o.set("family", &m.family)
        .set("inner", &m.inner)
        .set("N", &m.big_n)
        .set("r", &m.r)
        .set("N1", &m.n1)
        .set("N2", &m.n2)
        .set("p", &m.p)
        .set("eps", &m.eps)
        .set("A", &m.a)
        .set("L", &m.l);
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 when a check fails, 2 on usage or
/// execution errors.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Command::Verify(VerifyArgs { list: true, .. }) = cli.command {
        for id in crate::verification::ids() {
            println!("{id}");
        }
        return 0;
    }
    let result = resolve(&cli.command).and_then(|cfg| commands::run(&cfg));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
