//! Batch runs from a JSON config: `inspect`, `verify`, `classify` and `flow`.
//!
//! Exit codes: 0 pass, 1 residual failure, 2 config error, 3 geometry error,
//! 4 flow stall.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{self, CatalogError, GeometrySpec, DEFAULT_JET_DEGREE};
use crate::diagnostics::{self, Check, DiagnosticsError, DiagnosticsReport, IDENTITY_NAMES};
use crate::flow::{self, DescentParams, DirectionalCheck, FlowError, FlowStatus, JGrid, DRIFT_TOL};
use crate::geometry::GeometryError;
use crate::numfmt;
use crate::unstruct::StructureError;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "ahtorsion", version, about = "Intrinsic torsion diagnostics and harmonic flow")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandLine,
}

#[derive(Debug, Subcommand)]
pub enum CommandLine {
    /// Full residual suite at the sampled points.
    Inspect(RunArgs),
    /// Identity battery only.
    Verify(RunArgs),
    /// Gray–Hervella class over the sampled points.
    Classify(RunArgs),
    /// Gradient descent of the total bending energy on a flat torus.
    Flow(RunArgs),
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Inspect,
    Verify,
    Classify,
    Flow,
}

impl CommandLine {
    pub fn split(&self) -> (Command, &RunArgs) {
        match self {
            CommandLine::Inspect(a) => (Command::Inspect, a),
            CommandLine::Verify(a) => (Command::Verify, a),
            CommandLine::Classify(a) => (Command::Classify, a),
            CommandLine::Flow(a) => (Command::Flow, a),
        }
    }
}

fn default_true() -> bool {
    true
}

/// Geometry by catalog name with parameters, or a full inline spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    Flat {
        n: usize,
        jet_degree: Option<usize>,
    },
    Conformal {
        n: usize,
        f: String,
        #[serde(default = "default_true")]
        periodic: bool,
        jet_degree: Option<usize>,
    },
    Hopf {
        n: usize,
        inner: Option<f64>,
        outer: Option<f64>,
        jet_degree: Option<usize>,
    },
    S6 {
        jet_degree: Option<usize>,
    },
    Random {
        n: usize,
        seed: u64,
        amplitude: f64,
        #[serde(default)]
        curved: bool,
        jet_degree: Option<usize>,
    },
    Inline {
        spec: GeometrySpec,
    },
}

impl GeometryConfig {
    pub fn spec(&self) -> Result<GeometrySpec, CatalogError> {
        let (mut spec, degree) = match self {
            GeometryConfig::Flat { n, jet_degree } => (catalog::flat_kahler(*n)?, *jet_degree),
            GeometryConfig::Conformal {
                n,
                f,
                periodic,
                jet_degree,
            } => (catalog::conformal(*n, f, *periodic)?, *jet_degree),
            GeometryConfig::Hopf {
                n,
                inner,
                outer,
                jet_degree,
            } => (
                catalog::hopf_chart_on(*n, inner.unwrap_or(0.5), outer.unwrap_or(2.0))?,
                *jet_degree,
            ),
            GeometryConfig::S6 { jet_degree } => (catalog::s6_nearly_kahler(), *jet_degree),
            GeometryConfig::Random {
                n,
                seed,
                amplitude,
                curved,
                jet_degree,
            } => (catalog::random(*n, *seed, *amplitude, *curved)?, *jet_degree),
            GeometryConfig::Inline { spec } => (spec.clone(), None),
        };
        if let Some(d) = degree {
            spec.jet_degree = d;
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum PointsConfig {
    Sampled {
        count: usize,
        #[serde(default)]
        seed: u64,
    },
    Explicit {
        list: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub m: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol_grad")]
    pub tol_grad: f64,
    /// Number of random directions for the gradient check.
    #[serde(default = "default_checks")]
    pub gradient_checks: usize,
    #[serde(default)]
    pub check_seed: u64,
    pub growth: Option<f64>,
    /// Smallest trial step before the run counts as stalled.
    pub min_step: Option<f64>,
    pub trace: Option<PathBuf>,
    pub grid: Option<PathBuf>,
}

fn default_max_iter() -> usize {
    5000
}

fn default_tol_grad() -> f64 {
    1e-5
}

fn default_checks() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub command: Option<Command>,
    pub geometry: GeometryConfig,
    pub points: Option<PointsConfig>,
    pub tol: Option<f64>,
    pub jet_degree: Option<usize>,
    pub flow: Option<FlowConfig>,
    pub output: Option<PathBuf>,
}

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_POINTS: usize = 25;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("internal check failed: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Geometry(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<CatalogError> for CliError {
    fn from(e: CatalogError) -> Self {
        match e {
            CatalogError::Dimension { .. } | CatalogError::Parse(_) | CatalogError::Variable { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Geometry(e.to_string()),
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        match e {
            DiagnosticsError::Catalog(c) => c.into(),
            DiagnosticsError::NoPoints => CliError::Config(e.to_string()),
            DiagnosticsError::CrossCheck { .. } | DiagnosticsError::Structure(StructureError::CrossCheck { .. }) => {
                CliError::Internal(e.to_string())
            }
            _ => CliError::Geometry(e.to_string()),
        }
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::Resolution(_) | FlowError::Dimension(_) | FlowError::TooLarge(_) => {
                CliError::Config(e.to_string())
            }
            FlowError::Structure(StructureError::TooSmall(_)) => CliError::Config(e.to_string()),
            _ => CliError::Geometry(e.to_string()),
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.schema != SCHEMA {
        return Err(CliError::Config(format!("unsupported schema {}, expected {SCHEMA}", cfg.schema)));
    }
    Ok(cfg)
}

/// `i`-th element of the van der Corput sequence in `base`.
pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Halton points in the unit cube, rotated by a seeded shift (Cranley–Patterson),
/// so each seed gives a different but equally well-spread set.
pub fn halton_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "Halton bases cover up to {} dimensions", PRIMES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
    (1..=count as u64)
        .map(|i| {
            (0..dim)
                .map(|a| (radical_inverse(i, PRIMES[a]) + shift[a]).fract())
                .collect()
        })
        .collect()
}

pub fn sample_points(spec: &GeometrySpec, points: &PointsConfig) -> Result<Vec<Vec<f64>>, CliError> {
    let dim = spec.dim();
    let pts = match points {
        PointsConfig::Sampled { count, seed } => {
            if *count == 0 {
                return Err(CliError::Config("points.count must be positive".into()));
            }
            halton_points(dim, *count, *seed)
                .iter()
                .map(|u| spec.domain.from_unit(u))
                .collect()
        }
        PointsConfig::Explicit { list } => {
            if list.is_empty() {
                return Err(CliError::Config("points.list is empty".into()));
            }
            if let Some(p) = list.iter().find(|p| p.len() != dim) {
                return Err(CliError::Config(format!("point {p:?} does not have {dim} coordinates")));
            }
            if let Some(p) = list.iter().find(|p| !spec.domain.contains(p)) {
                return Err(CliError::Geometry(GeometryError::OutsideDomain(p.clone()).to_string()));
            }
            list.clone()
        }
    };
    Ok(pts)
}

/// Files written by a run besides the main report.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub files: Vec<(PathBuf, String)>,
}

/// Report text, exit code and side files of one run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: String,
    pub exit_code: i32,
    pub artifacts: Artifacts,
}

fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    numfmt::to_json_string(value).map_err(|e| CliError::Internal(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub schema: u32,
    pub command: Command,
    pub geometry: GeometrySpec,
    pub tol: f64,
    pub class: String,
    pub max_norms: [f64; 4],
    pub points: Vec<ClassPoint>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPoint {
    pub x: Vec<f64>,
    pub class: String,
    pub gh_norms: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckSummary {
    pub eps: f64,
    pub directions: Vec<DirectionalCheck>,
    pub max_rel_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub schema: u32,
    pub command: Command,
    pub geometry: GeometryConfig,
    pub m: usize,
    pub params: DescentParams,
    pub status: FlowStatus,
    pub iterations: usize,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub terminal_grad_norm: f64,
    pub terminal_harmonic: f64,
    pub monotone: bool,
    pub max_drift: f64,
    pub gradient_check: GradientCheckSummary,
    pub trace: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub pass: bool,
}

/// Execute a parsed config. `tol` and `seed` override the config values.
pub fn execute(
    command: Command,
    cfg: &RunConfig,
    tol: Option<f64>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<Outcome, CliError> {
    if let Some(c) = cfg.command {
        if c != command {
            return Err(CliError::Config(format!("config is for `{c:?}`, run as `{command:?}`")));
        }
    }
    let tol = tol.or(cfg.tol).unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0) {
        return Err(CliError::Config(format!("tolerance must be positive, got {tol}")));
    }
    if command == Command::Flow {
        return run_flow(cfg, seed, out);
    }
    if cfg.flow.is_some() {
        return Err(CliError::Config("`flow` section given for a diagnostics command".into()));
    }
    let mut spec = cfg.geometry.spec()?;
    if let Some(d) = cfg.jet_degree {
        spec.jet_degree = d;
    }
    if spec.jet_degree < 3 {
        return Err(CliError::Config(format!("jet_degree must be at least 3, got {}", spec.jet_degree)));
    }
    let mut points = cfg.points.clone().unwrap_or(PointsConfig::Sampled {
        count: DEFAULT_POINTS,
        seed: 0,
    });
    if let (Some(s), PointsConfig::Sampled { seed, .. }) = (seed, &mut points) {
        *seed = s;
    }
    let point_seed = match points {
        PointsConfig::Sampled { seed, .. } => Some(seed),
        PointsConfig::Explicit { .. } => None,
    };
    let xs = sample_points(&spec, &points)?;
    match command {
        Command::Inspect => {
            let report = diagnostics::diagnose(&spec, &xs, tol, point_seed)?;
            finish(&report, report.pass)
        }
        Command::Verify => {
            let mut report = diagnostics::diagnose(&spec, &xs, tol, point_seed)?;
            retain_identity_checks(&mut report);
            finish(&report, report.pass)
        }
        Command::Classify => {
            let report = classify(&spec, &xs, tol)?;
            finish(&report, report.pass)
        }
        Command::Flow => unreachable!("handled above"),
    }
}

fn finish<T: Serialize>(report: &T, pass: bool) -> Result<Outcome, CliError> {
    Ok(Outcome {
        report: json(report)?,
        exit_code: if pass { 0 } else { 1 },
        artifacts: Artifacts::default(),
    })
}

fn retain_identity_checks(report: &mut DiagnosticsReport) {
    report
        .checks
        .retain(|c| IDENTITY_NAMES.contains(&c.name.as_str()) || c.name == "ric_star_jj" || c.name == "nearly_kahler");
    report.pass = report.checks.iter().all(|c| c.pass);
}

fn classify(spec: &GeometrySpec, xs: &[Vec<f64>], tol: f64) -> Result<ClassReport, CliError> {
    use rayon::prelude::*;
    let s = spec.build()?;
    let points: Vec<ClassPoint> = xs
        .par_iter()
        .map(|x| -> Result<ClassPoint, DiagnosticsError> {
            let pa = crate::unstruct::PointAnalysis::new(&s, x, spec.jet_degree)?;
            let norms = crate::unstruct::intrinsic_torsion(&pa)?.components.norms();
            Ok(ClassPoint {
                x: x.clone(),
                class: diagnostics::gh_label(&norms, tol),
                gh_norms: norms,
            })
        })
        .collect::<Result<_, _>>()?;
    let overall = diagnostics::classify_gh(&s, xs, tol, spec.jet_degree)?;
    let mut checks = Vec::new();
    if let Some(want) = &spec.expected.class {
        checks.push(Check {
            name: "class".into(),
            pass: &overall.label == want,
            detail: format!("expected {want}, got {}", overall.label),
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(ClassReport {
        schema: SCHEMA,
        command: Command::Classify,
        geometry: spec.clone(),
        tol,
        class: overall.label,
        max_norms: overall.max_norms,
        points,
        checks,
        pass,
    })
}

/// Relative tolerance of the directional-derivative check in flow summaries.
pub const GRADIENT_CHECK_TOL: f64 = 1e-4;
const GRADIENT_CHECK_EPS: f64 = 1e-4;

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn run_flow(cfg: &RunConfig, seed: Option<u64>, out: Option<&Path>) -> Result<Outcome, CliError> {
    let fc = cfg
        .flow
        .as_ref()
        .ok_or_else(|| CliError::Config("flow command needs a `flow` section".into()))?;
    if cfg.points.is_some() {
        return Err(CliError::Config("`points` is not used by the flow command".into()));
    }
    if !(fc.tol_grad > 0.0) {
        return Err(CliError::Config(format!("tol_grad must be positive, got {}", fc.tol_grad)));
    }
    let start = match &cfg.geometry {
        GeometryConfig::Random {
            n,
            seed,
            amplitude,
            curved: false,
            ..
        } => JGrid::from_random_structure(*seed, *n, fc.m, *amplitude)?,
        GeometryConfig::Flat { n, .. } => JGrid::constant(*n, fc.m)?,
        other => {
            return Err(CliError::Config(format!(
                "flow runs on flat tori only (`flat` or flat `random`), got {other:?}"
            )))
        }
    };
    let mut params = DescentParams {
        max_iter: fc.max_iter,
        tol_grad: fc.tol_grad,
        ..DescentParams::default()
    };
    if let Some(g) = fc.growth {
        if !(g >= 1.0) {
            return Err(CliError::Config(format!("growth must be at least 1, got {g}")));
        }
        params.growth = g;
    }
    if let Some(t) = fc.min_step {
        if !(t > 0.0) {
            return Err(CliError::Config(format!("min_step must be positive, got {t}")));
        }
        params.min_step = t;
    }

    let grad = flow::gradient(&start);
    let check_seed = seed.unwrap_or(fc.check_seed);
    let directions = (0..fc.gradient_checks as u64)
        .map(|k| {
            let phi = flow::random_variation(&start, check_seed.wrapping_mul(1000).wrapping_add(k), 1.0);
            flow::directional_check(&start, &grad, &phi, GRADIENT_CHECK_EPS)
        })
        .collect::<Result<Vec<_>, _>>()?;
    // at a critical start the pairing vanishes and relative errors are meaningless
    let critical = grad.norm < fc.tol_grad;
    let max_rel_error = if critical {
        0.0
    } else {
        directions.iter().map(|d| d.rel_error).fold(0.0, f64::max)
    };
    let gradient_check = GradientCheckSummary {
        eps: GRADIENT_CHECK_EPS,
        directions,
        max_rel_error,
        pass: max_rel_error < GRADIENT_CHECK_TOL,
    };

    let result = flow::descend(&start, &params)?;
    let out = out.map(Path::to_path_buf).or_else(|| cfg.output.clone());
    let trace_path = fc.trace.clone().or_else(|| out.as_deref().map(|o| sibling(o, ".trace.csv")));
    let grid_path = fc.grid.clone().or_else(|| out.as_deref().map(|o| sibling(o, ".grid.json")));
    let mut artifacts = Artifacts::default();
    if let Some(p) = &trace_path {
        let mut buf = Vec::new();
        flow::write_trace_csv(&result.trace, &mut buf).map_err(|e| CliError::Internal(e.to_string()))?;
        artifacts
            .files
            .push((p.clone(), String::from_utf8(buf).expect("CSV of numbers is UTF-8")));
    }
    if let Some(p) = &grid_path {
        let text = numfmt::to_json_compact(&result.grid.field().to_matrices())
            .map_err(|e| CliError::Internal(e.to_string()))?;
        artifacts.files.push((p.clone(), text));
    }
    let monotone = result.is_monotone();
    let converged = result.status == FlowStatus::Converged;
    let pass = converged && monotone && gradient_check.pass && result.max_drift < DRIFT_TOL;
    let summary = FlowSummary {
        schema: SCHEMA,
        command: Command::Flow,
        geometry: cfg.geometry.clone(),
        m: fc.m,
        params,
        status: result.status,
        iterations: result.iterations(),
        initial_energy: result.initial_energy(),
        final_energy: result.final_energy(),
        terminal_grad_norm: result.final_grad_norm(),
        terminal_harmonic: result.terminal_harmonic,
        monotone,
        max_drift: result.max_drift,
        gradient_check,
        trace: trace_path,
        grid: grid_path,
        pass,
    };
    let exit_code = match result.status {
        FlowStatus::Stalled => 4,
        _ if pass => 0,
        _ => 1,
    };
    Ok(Outcome {
        report: json(&summary)?,
        exit_code,
        artifacts,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Run the CLI and return the process exit code. Reports go to `--out` (or the
/// config's `output`), otherwise to stdout; errors go to stderr.
pub fn run(cli: &Cli) -> i32 {
    let (command, args) = cli.command.split();
    let result = (|| -> Result<Outcome, CliError> {
        let text = fs::read_to_string(&args.config).map_err(|source| CliError::Io {
            path: args.config.clone(),
            source,
        })?;
        let cfg = parse_config(&text)?;
        let outcome = execute(command, &cfg, args.tol, args.seed, args.out.as_deref())?;
        let out = args.out.clone().or(cfg.output.clone());
        match &out {
            Some(p) => write_file(p, &outcome.report)?,
            None => print!("{}", outcome.report),
        }
        for (p, text) in &outcome.artifacts.files {
            write_file(p, text)?;
        }
        Ok(outcome)
    })();
    match result {
        Ok(o) => o.exit_code,
        Err(e) => {
            eprintln!("ahtorsion: {e}");
            e.exit_code()
        }
    }
}

/// Default jet degree used when neither the geometry nor the config sets one.
pub fn default_jet_degree() -> usize {
    DEFAULT_JET_DEGREE
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_is_deterministic_and_in_cube() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(6, 3), 2.0 / 9.0);
        let a = halton_points(4, 50, 11);
        assert_eq!(a, halton_points(4, 50, 11));
        assert_ne!(a, halton_points(4, 50, 12));
        assert!(a.iter().flatten().all(|u| (0.0..1.0).contains(u)));
    }

    #[test]
    fn strict_schema() {
        let ok = r#"{"schema":1,"command":"inspect","geometry":{"type":"conformal","n":2,"f":"sin(x1)","periodic":true,"jet_degree":4},"points":{"count":25,"seed":11},"tol":1e-6}"#;
        let cfg = parse_config(ok).unwrap();
        assert_eq!(cfg.points, Some(PointsConfig::Sampled { count: 25, seed: 11 }));
        for bad in [
            r#"{"schema":1,"geometry":{"type":"flat","n":2},"tolerance":1e-6}"#,
            r#"{"schema":1,"geometry":{"type":"flat","n":2,"f":"x1"}}"#,
            r#"{"schema":2,"geometry":{"type":"flat","n":2}}"#,
            r#"{"schema":1,"geometry":{"type":"flat","n":2},"points":{"count":3,"sed":1}}"#,
        ] {
            assert_eq!(parse_config(bad).unwrap_err().exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn error_classes() {
        let cfg = parse_config(r#"{"schema":1,"geometry":{"type":"conformal","n":2,"f":"x1"}}"#).unwrap();
        let e = execute(Command::Inspect, &cfg, None, None, None).unwrap_err();
        assert_eq!(e.exit_code(), 3, "{e}");
        let cfg = parse_config(r#"{"schema":1,"geometry":{"type":"conformal","n":2,"f":"sin(x9)"}}"#).unwrap();
        assert_eq!(execute(Command::Inspect, &cfg, None, None, None).unwrap_err().exit_code(), 2);
        let cfg = parse_config(r#"{"schema":1,"geometry":{"type":"s6"},"points":{"list":[[0.9,0.5,0,0,0,0]]}}"#)
            .unwrap();
        assert_eq!(execute(Command::Inspect, &cfg, None, None, None).unwrap_err().exit_code(), 3);
        let cfg = parse_config(r#"{"schema":1,"geometry":{"type":"random","n":2,"seed":1,"amplitude":0.3},"flow":{"m":2}}"#)
            .unwrap();
        assert_eq!(execute(Command::Flow, &cfg, None, None, None).unwrap_err().exit_code(), 2);
    }
}
