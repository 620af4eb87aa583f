//! The `tiltbound` command line: argument parsing, dispatch, artifact
//! writing and exit statuses.
//!
//! Every subcommand can also be described by a JSON file passed as
//! `--config`, e.g. `{"command": "cgf", "source": "gaussian.json",
//! "grid": "-4:4:81", "out": "cgf.csv"}`. Relative paths in a config file
//! resolve against the file's directory.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cgf_engine::{evaluate_cgf, tilt_with, LogMgfField, Method, MonteCarlo, Polynomial};
use crate::convexity_lab::{
    certify, certify_cgf, classify_family_lc, default_rays, default_tolerance, certify_ld, LdConfig, Target,
    Verdict,
};
use crate::error::{Error, Result};
use crate::gls_spaces::{
    bphi_norm, duality_exponents, mgf_bound_from_tail, tail_bound, DualityConfig, GeneratingFunctionConfig,
    GeneratingFunctionSpec, NormEstimate, TailModel, TailTable,
};
use crate::legendre::{conjugate, ConvexGridFunction, Extension};
use crate::numeric::{check_strictly_increasing, parse_grid};
use crate::report::{self, fmt_f64, write_atomic, Table};
use crate::rv_models::{RandomSource, VectorSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_DOMAIN: i32 = 2;
pub const EXIT_NEGATIVE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "tiltbound",
    version,
    about = "CGF convexity, Legendre conjugates and B(φ) norms",
    args_conflicts_with_subcommands = true
)]
pub struct Cli {
    /// Run the experiment described in a JSON file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Tabulate Δ = ln E e^{λξ} and Φ = Δ/λ.
    Cgf(CgfArgs),
    /// Tilted expectation and variance of a polynomial observable.
    Tilt(TiltArgs),
    /// Discrete Legendre conjugate of a grid function or generating function.
    Conjugate(ConjugateArgs),
    /// B(φ) norm of a source.
    Norm(NormArgs),
    /// Tail bound exp(-φ*(x/ρ)).
    Tailbound(TailboundArgs),
    /// Smallest C with E e^{λX} <= exp φ(Cλ) from tail information.
    Mgfbound(MgfboundArgs),
    /// Closed-form LC rule for the φ[m, γ] family.
    Classify(ClassifyArgs),
    /// Tail, CGF and moment exponents.
    Duality(DualityArgs),
    /// Convexity certificate of Δ, Φ or a tabulated function.
    Certify(CertifyArgs),
    /// ln Q and V = ln Q/|λ| of a vector source along rays, with an LD certificate.
    Mv(MvArgs),
    /// Merge artifacts into a long-format series,x,y CSV.
    Plot(PlotArgs),
}

fn default_seed() -> u64 {
    42
}

fn default_n() -> usize {
    1_000_000
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgfArgs {
    /// Source JSON file.
    #[arg(long)]
    pub source: PathBuf,
    /// `a:b:n` or `logspace:a:b:n`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    /// auto, closed_form, quadrature, monte_carlo or empirical.
    #[arg(long)]
    #[serde(default)]
    pub method: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 42)]
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiltArgs {
    #[arg(long)]
    pub source: PathBuf,
    /// Tilts: a grid or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: String,
    /// Coefficients `c0,c1,...` of τ(ξ) = Σ c_k ξ^k (default: ξ).
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub tau: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub method: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 42)]
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjugateArgs {
    /// `x,value` CSV (with an optional `<file>.json` sidecar).
    #[arg(long, conflicts_with = "phi")]
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// `phi2`, a generating-function JSON file or an `x,value` CSV.
    #[arg(long)]
    #[serde(default)]
    pub phi: Option<String>,
    /// Grid on which `--phi` is tabulated.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub grid: Option<String>,
    /// Output abscissae of the conjugate.
    #[arg(long, allow_hyphen_values = true)]
    pub out_grid: String,
    /// affine_with_boundary_slope or plus_infinity_outside, applied to both sides
    /// (overrides a sidecar).
    #[arg(long)]
    #[serde(default)]
    pub extension: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormArgs {
    #[arg(long)]
    pub source: PathBuf,
    /// Generating function (default phi2).
    #[arg(long)]
    #[serde(default)]
    pub phi: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailboundArgs {
    #[arg(long)]
    #[serde(default)]
    pub phi: Option<String>,
    /// Norm ρ; computed from `--source` on `--grid` when absent.
    #[arg(long, conflicts_with = "source")]
    #[serde(default)]
    pub rho: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub source: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub grid: Option<String>,
    /// Thresholds: a grid or a comma-separated list.
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MgfboundArgs {
    /// Source JSON whose law supplies the tail.
    #[arg(long, conflicts_with = "table")]
    #[serde(default)]
    pub source: Option<PathBuf>,
    /// Tail table CSV with columns `threshold,survival`.
    #[arg(long)]
    #[serde(default)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    pub phi: Option<String>,
    #[arg(long)]
    pub grid: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub m: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualityArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long, default_value_t = 1_000_000)]
    #[serde(default = "default_n")]
    pub n: usize,
    #[arg(long, default_value_t = 42)]
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[arg(long)]
    #[serde(default)]
    pub x_grid: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub lambda_grid: Option<String>,
    /// Comma-separated moment orders (default 2,4,8,16,32).
    #[arg(long)]
    #[serde(default)]
    pub p_list: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyArgs {
    #[arg(long, conflicts_with = "input")]
    #[serde(default)]
    pub source: Option<PathBuf>,
    /// `x,value` CSV to certify directly.
    #[arg(long)]
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub grid: Option<String>,
    /// oc (Δ) or lc (Φ); ignored for `--input`.
    #[arg(long, default_value = "oc")]
    #[serde(default = "default_target")]
    pub target: String,
    #[arg(long)]
    #[serde(default)]
    pub method: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 42)]
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[arg(long)]
    #[serde(default)]
    pub tol: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_target() -> String {
    "oc".into()
}

fn default_rays_count() -> usize {
    16
}

fn default_radii() -> String {
    "0.0625:4:64".into()
}

fn default_pairs() -> usize {
    200
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MvArgs {
    /// Vector source JSON file.
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long, default_value_t = 16)]
    #[serde(default = "default_rays_count")]
    pub rays: usize,
    #[arg(long, default_value = "0.0625:4:64")]
    #[serde(default = "default_radii")]
    pub radii: String,
    #[arg(long, default_value_t = 200)]
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    /// Draws for sampled fields.
    #[arg(long, default_value_t = 1_000_000)]
    #[serde(default = "default_n")]
    pub n: usize,
    #[arg(long, default_value_t = 42)]
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[arg(long)]
    #[serde(default)]
    pub tol: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotArgs {
    /// Artifacts to merge.
    #[arg(long, num_args = 0..)]
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Result of a successful run: the summary line and the exit status
/// (0, or 3 for a legitimate negative or indeterminate outcome).
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub summary: Value,
    pub status: i32,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Outcome { summary, status: EXIT_OK, warnings: Vec::new() }
    }
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Domain(_) => EXIT_DOMAIN,
        _ => EXIT_FAILURE,
    }
}

/// Parses the command line, runs it and prints the summary (stdout) or the
/// error (stderr). Returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            eprintln!("{}", json!({ "error": e.render().to_string().trim() }));
            return EXIT_FAILURE;
        }
    };
    let result = match (cli.config, cli.command) {
        (Some(path), _) => load_config(&path).and_then(|(cmd, base)| run(&cmd, &base)),
        (None, Some(cmd)) => run(&cmd, Path::new("")),
        (None, None) => Err(Error::Invalid("a subcommand or --config is required".into())),
    };
    match result {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("{}", json!({ "warning": w }));
            }
            println!("{}", outcome.summary);
            outcome.status
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.to_string() }));
            exit_code(&e)
        }
    }
}

/// Reads an experiment JSON; returns the command and the directory relative
/// paths resolve against.
pub fn load_config(path: &Path) -> Result<(Command, PathBuf)> {
    let text = std::fs::read_to_string(path)?;
    let cmd: Command = serde_json::from_str(&text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cmd, base))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() || base.as_os_str().is_empty() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn existing(base: &Path, p: &Path) -> Result<PathBuf> {
    let full = resolve(base, p);
    if full.exists() {
        Ok(full)
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} does not exist", full.display()),
        )))
    }
}

/// A grid (`a:b:n`, `logspace:a:b:n`) or a comma-separated list.
pub fn parse_points(s: &str) -> Result<Vec<f64>> {
    if s.contains(':') {
        return parse_grid(s);
    }
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad number {t:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        return Err(Error::Parse("empty list".into()));
    }
    check_strictly_increasing(&v, "list")?;
    Ok(v)
}

pub fn parse_method(name: Option<&str>, n: Option<usize>, seed: u64, source: &RandomSource) -> Result<Method> {
    Ok(match name.unwrap_or("auto") {
        "auto" => Method::auto(source),
        "closed_form" => Method::ClosedForm,
        "quadrature" => Method::Quadrature,
        "monte_carlo" => Method::MonteCarlo { n: n.unwrap_or(1_000_000), seed },
        "empirical" => Method::Empirical,
        other => return Err(Error::Parse(format!("unknown method {other:?}"))),
    })
}

fn parse_extension(s: &str) -> Result<Extension> {
    match s {
        "affine_with_boundary_slope" => Ok(Extension::AffineWithBoundarySlope),
        "plus_infinity_outside" => Ok(Extension::PlusInfinityOutside),
        other => Err(Error::Parse(format!("unknown extension {other:?}"))),
    }
}

/// `phi2`, a generating-function JSON file, or an `x,value` CSV.
pub fn load_phi(base: &Path, s: Option<&str>) -> Result<GeneratingFunctionSpec> {
    match s {
        None | Some("phi2") => Ok(GeneratingFunctionSpec::phi2()),
        Some(p) => {
            let path = existing(base, Path::new(p))?;
            if path.extension().is_some_and(|e| e == "csv") {
                Ok(GeneratingFunctionSpec::custom(report::read_grid_function(&path)?))
            } else {
                let cfg: GeneratingFunctionConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                GeneratingFunctionSpec::from_config(&cfg)
            }
        }
    }
}

fn emit(base: &Path, out: Option<&PathBuf>, contents: &str) -> Result<Option<String>> {
    match out {
        None => Ok(None),
        Some(p) => {
            let full = resolve(base, p);
            write_atomic(&full, contents.as_bytes())?;
            Ok(Some(full.display().to_string()))
        }
    }
}

fn pretty(v: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn verdict_status(v: Verdict) -> i32 {
    if v == Verdict::Inconclusive {
        EXIT_NEGATIVE
    } else {
        EXIT_OK
    }
}

/// Runs one command; relative paths resolve against `base`.
pub fn run(cmd: &Command, base: &Path) -> Result<Outcome> {
    match cmd {
        Command::Cgf(a) => {
            let source = RandomSource::from_json_file(&existing(base, &a.source)?)?;
            let grid = parse_grid(&a.grid)?;
            let method = parse_method(a.method.as_deref(), a.n, a.seed, &source)?;
            let eval = evaluate_cgf(&source, &grid, method)?;
            let out = emit(base, a.out.as_ref(), &report::cgf_to_csv(&eval))?;
            Ok(Outcome::ok(json!({
                "command": "cgf",
                "source": source.name(),
                "method": method.label(),
                "rows": eval.lambda_grid.len(),
                "out": out,
            })))
        }
        Command::Tilt(a) => {
            let source = RandomSource::from_json_file(&existing(base, &a.source)?)?;
            let lambdas = parse_points(&a.lambda)?;
            let tau = match &a.tau {
                None => Polynomial::identity(),
                Some(s) => Polynomial::new(
                    s.split(',')
                        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad coefficient {t:?}: {e}"))))
                        .collect::<Result<Vec<_>>>()?,
                )?,
            };
            let method = parse_method(a.method.as_deref(), a.n, a.seed, &source)?;
            let mut t = Table::new(&["lambda", "log_normalizer", "tilted_mean", "tilted_variance"]);
            for l in &lambdas {
                let w = tilt_with(&source, *l, method)?;
                t.push(vec![*l, w.log_normalizer(), w.tilted_mean(&tau), w.tilted_variance(&tau)?]);
            }
            let out = emit(base, a.out.as_ref(), &t.to_csv())?;
            Ok(Outcome::ok(json!({
                "command": "tilt",
                "source": source.name(),
                "rows": t.rows.len(),
                "out": out,
            })))
        }
        Command::Conjugate(a) => {
            let mut f = match (&a.input, &a.phi) {
                (Some(p), _) => report::read_grid_function(&existing(base, p)?)?,
                (None, phi) => {
                    let spec = load_phi(base, phi.as_deref())?;
                    let grid = parse_grid(a.grid.as_deref().ok_or_else(|| {
                        Error::Invalid("--grid is required to tabulate --phi".into())
                    })?)?;
                    let values = grid.iter().map(|l| spec.eval(*l)).collect::<Result<Vec<_>>>()?;
                    ConvexGridFunction::new(grid, values)?
                }
            };
            if let Some(e) = &a.extension {
                let ext = parse_extension(e)?;
                f = f.with_extensions(ext, ext);
            }
            let xs = parse_grid(&a.out_grid)?;
            let c = conjugate(&f, &xs)?;
            let csv = report::xy_to_csv(&c.grid, &c.values);
            let out = emit(base, a.out.as_ref(), &csv)?;
            if let Some(p) = &a.out {
                let side = crate::legendre::GridSidecar {
                    left_extension: Extension::PlusInfinityOutside,
                    right_extension: Extension::PlusInfinityOutside,
                    domain_bound: None,
                    hulled: c.hulled,
                };
                write_atomic(&report::sidecar_path(&resolve(base, p)), report::sidecar_to_json(&side)?.as_bytes())?;
            }
            Ok(Outcome::ok(json!({
                "command": "conjugate",
                "rows": c.grid.len(),
                "hulled": c.hulled,
                "finite_domain": [fmt_f64(c.finite_domain.0), fmt_f64(c.finite_domain.1)],
                "out": out,
            })))
        }
        Command::Norm(a) => {
            let source = RandomSource::from_json_file(&existing(base, &a.source)?)?;
            let spec = load_phi(base, a.phi.as_deref())?;
            let norm = bphi_norm(&source, &spec, &parse_grid(&a.grid)?)?;
            emit(base, a.out.as_ref(), &pretty(&norm)?)?;
            let status = if norm.value.is_finite() { EXIT_OK } else { EXIT_NEGATIVE };
            let mut summary = serde_json::to_value(&norm)?;
            summary["command"] = json!("norm");
            Ok(Outcome { summary, status, warnings: Vec::new() })
        }
        Command::Tailbound(a) => {
            let spec = load_phi(base, a.phi.as_deref())?;
            let norm = match (a.rho, &a.source) {
                (Some(rho), _) => NormEstimate {
                    value: rho,
                    argsup: None,
                    boundary_flag: false,
                    monotone_hull: false,
                    grid_points: 0,
                    grid_min: 0.0,
                    grid_max: 0.0,
                },
                (None, Some(src)) => {
                    let source = RandomSource::from_json_file(&existing(base, src)?)?;
                    let grid = parse_grid(a.grid.as_deref().ok_or_else(|| {
                        Error::Invalid("--grid is required to compute the norm of --source".into())
                    })?)?;
                    bphi_norm(&source, &spec, &grid)?
                }
                (None, None) => return Err(Error::Invalid("give --rho or --source".into())),
            };
            let xs = parse_points(&a.x)?;
            let mut t = Table::new(&["x", "bound"]);
            for x in &xs {
                t.push(vec![*x, tail_bound(&spec, &norm, *x)?]);
            }
            let out = emit(base, a.out.as_ref(), &t.to_csv())?;
            Ok(Outcome::ok(json!({
                "command": "tailbound",
                "rho": norm.value,
                "rows": t.rows.len(),
                "bounds": t.rows.iter().map(|r| r[1]).collect::<Vec<_>>(),
                "out": out,
            })))
        }
        Command::Mgfbound(a) => {
            let tail = match (&a.source, &a.table) {
                (Some(p), _) => TailModel::Law(RandomSource::from_json_file(&existing(base, p)?)?),
                (None, Some(p)) => {
                    let t = Table::from_csv(&std::fs::read_to_string(existing(base, p)?)?)?;
                    TailModel::Table(TailTable::new(t.column("threshold")?, t.column("survival")?)?)
                }
                (None, None) => return Err(Error::Invalid("give --source or --table".into())),
            };
            let spec = load_phi(base, a.phi.as_deref())?;
            let b = mgf_bound_from_tail(&tail, &spec, &parse_grid(&a.grid)?)?;
            let status = if b.c.is_some() { EXIT_OK } else { EXIT_NEGATIVE };
            let mut summary = serde_json::to_value(&b)?;
            summary["command"] = json!("mgfbound");
            if b.c.is_none() {
                summary["c"] = json!("none found");
            }
            Ok(Outcome { summary, status, warnings: Vec::new() })
        }
        Command::Classify(a) => {
            let verdict = classify_family_lc(a.m, a.gamma);
            Ok(Outcome::ok(json!({ "m": a.m, "gamma": a.gamma, "verdict": verdict })))
        }
        Command::Duality(a) => {
            let source = RandomSource::from_json_file(&existing(base, &a.source)?)?;
            let config = DualityConfig {
                x_grid: a.x_grid.as_deref().map(parse_points).transpose()?,
                lambda_grid: a.lambda_grid.as_deref().map(parse_points).transpose()?,
                p_list: match &a.p_list {
                    Some(s) => parse_points(s)?,
                    None => DualityConfig::default().p_list,
                },
                n: a.n,
                seed: a.seed,
            };
            let report = duality_exponents(&source, &config)?;
            emit(base, a.out.as_ref(), &pretty(&report)?)?;
            Ok(Outcome::ok(json!({
                "command": "duality",
                "d_tail": report.d_tail,
                "d_cgf": report.d_cgf,
                "d_moment": report.d_moment,
                "slopes": report.slopes,
                "n": report.n,
                "seed": report.seed,
            })))
        }
        Command::Certify(a) => {
            let cert = match (&a.input, &a.source) {
                (Some(p), _) => {
                    let f = report::read_grid_function(&existing(base, p)?)?;
                    let tol = a.tol.unwrap_or_else(|| default_tolerance(f.values()));
                    certify(&f, Target::OC, tol)?
                }
                (None, Some(p)) => {
                    let source = RandomSource::from_json_file(&existing(base, p)?)?;
                    let grid = parse_grid(a.grid.as_deref().ok_or_else(|| {
                        Error::Invalid("--grid is required with --source".into())
                    })?)?;
                    let target = match a.target.as_str() {
                        "oc" => Target::OC,
                        "lc" => Target::LC,
                        other => return Err(Error::Parse(format!("unknown target {other:?} (oc or lc)"))),
                    };
                    let method = parse_method(a.method.as_deref(), a.n, a.seed, &source)?;
                    certify_cgf(&source, &grid, target, method, a.tol)?
                }
                (None, None) => return Err(Error::Invalid("give --source or --input".into())),
            };
            emit(base, a.out.as_ref(), &pretty(&cert)?)?;
            let status = verdict_status(cert.verdict);
            let mut summary = serde_json::to_value(&cert)?;
            summary["command"] = json!("certify");
            Ok(Outcome { summary, status, warnings: Vec::new() })
        }
        Command::Mv(a) => {
            let vs = VectorSource::from_json_file(&existing(base, &a.source)?)?;
            let field: Box<dyn LogMgfField> = vs.field(MonteCarlo { n: a.n, seed: a.seed })?;
            let rays = default_rays(vs.dim(), a.rays, a.seed);
            let radii = parse_grid(&a.radii)?;
            let mut header: Vec<String> = vec!["ray".into(), "radius".into()];
            header.extend((1..=vs.dim()).map(|i| format!("lambda_{i}")));
            header.push("log_q".into());
            header.push("v".into());
            let mut t = Table { header, rows: Vec::new() };
            for (k, u) in rays.iter().enumerate() {
                for r in &radii {
                    let p: Vec<f64> = u.iter().map(|c| c * r).collect();
                    let lq = field.log_q(&p);
                    let mut row = vec![k as f64, *r];
                    row.extend(&p);
                    row.push(lq);
                    row.push(lq / r);
                    t.push(row);
                }
            }
            let cfg = LdConfig { midpoint_pairs: a.pairs, seed: a.seed, tol: a.tol };
            let cert = certify_ld(field.as_ref(), &rays, &radii, &cfg)?;
            let out = emit(base, a.out.as_ref(), &t.to_csv())?;
            Ok(Outcome {
                summary: json!({
                    "command": "mv",
                    "dim": vs.dim(),
                    "method": field.method_label(),
                    "rows": t.rows.len(),
                    "certificate": cert,
                    "out": out,
                }),
                status: verdict_status(cert.verdict),
                warnings: Vec::new(),
            })
        }
        Command::Plot(a) => {
            let mut inputs = Vec::new();
            for p in &a.inputs {
                let full = existing(base, p)?;
                let label = full.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                inputs.push((label, std::fs::read_to_string(&full)?));
            }
            let g = report::render_plot_grid(&inputs)?;
            let out = emit(base, Some(&a.out), &g.csv)?;
            Ok(Outcome {
                summary: json!({ "command": "plot", "series": g.series, "out": out }),
                status: EXIT_OK,
                warnings: g.warnings,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_lists() {
        assert_eq!(parse_points("0.5,1,2").unwrap(), vec![0.5, 1.0, 2.0]);
        assert_eq!(parse_points("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_points("2,1").is_err());
        assert!(parse_points("a").is_err());
    }

    #[test]
    fn config_round_trip() {
        let text = r#"{"command":"classify","m":1,"gamma":-1}"#;
        let cmd: Command = serde_json::from_str(text).unwrap();
        let out = run(&cmd, Path::new("")).unwrap();
        assert_eq!(out.summary["verdict"], "not_LC");
        assert!(serde_json::from_str::<Command>(r#"{"command":"classify","m":1}"#).is_err());
        assert!(serde_json::from_str::<Command>(r#"{"command":"classify","m":1,"gamma":0,"zz":1}"#).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Domain("x".into())), EXIT_DOMAIN);
        assert_eq!(exit_code(&Error::Parse("x".into())), EXIT_FAILURE);
        assert_eq!(main_with_args(["tiltbound", "classify", "--m", "1", "--gamma", "-1"]), EXIT_OK);
        assert_eq!(main_with_args(["tiltbound", "classify", "--m", "1"]), EXIT_FAILURE);
        assert_eq!(main_with_args(["tiltbound"]), EXIT_FAILURE);
    }
}
