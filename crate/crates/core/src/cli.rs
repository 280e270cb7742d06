//! Config and report plumbing behind the `liouville` binary.
//!
//! A run reads a JSON [`RunConfig`], resolves it (points normalized, ρ sweep
//! expanded, grid built), dispatches to one pipeline and writes
//! `<command>.json` plus CSV data into the output directory. Volatile run
//! metadata (timestamps, thread count, paths) goes to `<command>.meta.json`
//! so the report itself is byte-identical across reruns.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::blowup::{
    blowup_rate, classify_sequence, find_critical_configurations_with, ClassifyOptions, CriticalSearchOptions,
};
use crate::error::{Error, Result};
use crate::potential::{
    build_h, check_cond_teo3, check_cond_teo31, morse_analysis, CriticalKind, HarmonicTerm, KExpr, MorseData,
    MorseOptions, PotentialSpec, Singularity, SingularityConfig,
};
use crate::radial::{minimize_radial_on, RadialOptions, RadialProfile};
use crate::series::{bar_d, degree, existence_verdict, expand_g, gamma_set, morse_existence_check, OrderVector};
use crate::solver::{dilation_family, evaluate_j, minimize, Init, SolveResult, SolveStatus, SolverOptions};
use crate::sphere::{build_grid, write_field_csv, ScalarField, SphereGrid, SpherePoint};
use crate::VERSION;

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "LIOUVILLE_THREADS";

/// Deviation from unit length above which a configured point triggers a warning.
pub const NORMALIZATION_WARNING: f64 = 1e-6;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DEGENERATE_MORSE: i32 = 3;
pub const EXIT_MAX_ITER: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Analyze,
    Solve,
    Radial,
    Onofri,
    Blowup,
    Morse,
}

impl Command {
    pub const ALL: [Command; 6] =
        [Command::Analyze, Command::Solve, Command::Radial, Command::Onofri, Command::Blowup, Command::Morse];

    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Solve => "solve",
            Command::Radial => "radial",
            Command::Onofri => "onofri",
            Command::Blowup => "blowup",
            Command::Morse => "morse",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command '{s}'")))
    }
}

/// A point given as a vector (normalized on load) or as polar angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointInput {
    Vector([f64; 3]),
    Angles { theta: f64, phi: f64 },
}

impl PointInput {
    fn resolve(&self, what: &str, warnings: &mut Vec<String>) -> Result<SpherePoint> {
        match *self {
            PointInput::Vector(v) => {
                let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                let p = SpherePoint::new(v[0], v[1], v[2]).map_err(|e| Error::Config(format!("{what}: {e}")))?;
                if (n - 1.0).abs() > NORMALIZATION_WARNING {
                    warnings.push(format!("{what}: vector of length {n} normalized"));
                }
                Ok(p)
            }
            PointInput::Angles { theta, phi } => {
                if !(theta.is_finite() && phi.is_finite()) {
                    return Err(Error::Config(format!("{what}: non-finite angles")));
                }
                Ok(SpherePoint::from_angles(theta, phi))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularityInput {
    pub point: PointInput,
    pub alpha: f64,
}

/// Smooth factor K.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KSpec {
    Constant { value: f64 },
    /// Σ c Y_lm, or exp of it when `exponential` is set.
    Harmonics {
        terms: Vec<HarmonicTerm>,
        #[serde(default)]
        exponential: bool,
    },
    Expression { expr: KExpr },
}

impl Default for KSpec {
    fn default() -> Self {
        KSpec::Constant { value: 1.0 }
    }
}

impl KSpec {
    pub fn to_expr(&self) -> KExpr {
        match self {
            KSpec::Constant { value } => KExpr::constant(*value),
            KSpec::Harmonics { terms, exponential } => {
                let h = KExpr::Harmonics { terms: terms.clone() };
                if *exponential {
                    KExpr::exp(h)
                } else {
                    h
                }
            }
            KSpec::Expression { expr } => expr.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoInput {
    Value(f64),
    List(Vec<f64>),
    Sweep { start: f64, stop: f64, count: usize },
}

impl RhoInput {
    pub fn values(&self) -> Vec<f64> {
        match self {
            RhoInput::Value(v) => vec![*v],
            RhoInput::List(v) => v.clone(),
            RhoInput::Sweep { start, stop, count } => match count {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
            },
        }
    }
}

/// Unit of the configured ρ values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoUnit {
    #[default]
    Absolute,
    /// Values are multiples of π.
    Pi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub l_max: usize,
    /// Defaults to L + 1.
    pub n_theta: Option<usize>,
    /// Defaults to 2L + 2.
    pub n_phi: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { l_max: 63, n_theta: None, n_phi: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeOptions {
    /// Γ and g(x) are listed up to this exponent (at least max ρ/8π + 1).
    pub x_max: Option<f64>,
    pub bar_d_override: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnofriOptions {
    pub t: Vec<f64>,
    /// Concentration point; defaults to the maximum of h.
    pub pole: Option<PointInput>,
}

impl Default for OnofriOptions {
    fn default() -> Self {
        Self { t: vec![1.0, 2.0, 4.0], pole: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlowupOptions {
    /// Number of blow-up points.
    pub k: usize,
    pub starts: usize,
    /// Height λ at which the rate term is evaluated.
    pub lambda: f64,
    pub search: CriticalSearchOptions,
    pub classify: ClassifyOptions,
}

impl Default for BlowupOptions {
    fn default() -> Self {
        Self { k: 1, starts: 32, lambda: 10.0, search: CriticalSearchOptions::default(), classify: ClassifyOptions::default() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub singularities: Vec<SingularityInput>,
    #[serde(default)]
    pub k: KSpec,
    #[serde(default)]
    pub rho: Option<RhoInput>,
    #[serde(default)]
    pub rho_unit: RhoUnit,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub radial: RadialOptions,
    #[serde(default)]
    pub morse: MorseOptions,
    #[serde(default)]
    pub analyze: AnalyzeOptions,
    #[serde(default)]
    pub onofri: OnofriOptions,
    #[serde(default)]
    pub blowup: BlowupOptions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Command-line overrides of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Thread count from the flag, then the environment, then the config.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>, config: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    if let Some(v) = env.filter(|v| !v.trim().is_empty()) {
        let n = v.trim().parse::<usize>().map_err(|e| Error::Config(format!("{THREADS_ENV}={v}: {e}")))?;
        return Ok(Some(n));
    }
    Ok(config)
}

/// A config after validation: everything the pipelines need.
#[derive(Clone, Debug)]
pub struct Resolved {
    /// Echo of the config with normalized points, applied overrides and the
    /// volatile fields (threads, output) cleared.
    pub config: RunConfig,
    pub spec: PotentialSpec,
    pub rhos: Vec<f64>,
    pub grid: Arc<SphereGrid>,
    pub seed: u64,
    pub warnings: Vec<String>,
}

pub fn resolve(config: &RunConfig, seed: Option<u64>) -> Result<Resolved> {
    let cfg_err = |e: Error| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    };
    let mut warnings = Vec::new();
    let mut items = Vec::with_capacity(config.singularities.len());
    let mut echo = config.clone();
    for (i, s) in config.singularities.iter().enumerate() {
        let point = s.point.resolve(&format!("singularity {i}"), &mut warnings)?;
        echo.singularities[i].point = PointInput::Vector(point.coords());
        items.push(Singularity { point, alpha: s.alpha });
    }
    let singularities = SingularityConfig::new(items).map_err(cfg_err)?;
    let spec = PotentialSpec::new(config.k.to_expr(), singularities);
    spec.validate().map_err(cfg_err)?;

    let scale = match config.rho_unit {
        RhoUnit::Absolute => 1.0,
        RhoUnit::Pi => PI,
    };
    let rhos: Vec<f64> = config.rho.as_ref().map(|r| r.values()).unwrap_or_default().iter().map(|r| r * scale).collect();
    if let Some(bad) = rhos.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::Config(format!("rho values must be positive, got {bad}")));
    }
    if config.rho.is_some() && rhos.is_empty() {
        return Err(Error::Config("rho sweep is empty".into()));
    }

    let l = config.grid.l_max;
    let grid = build_grid(config.grid.n_theta.unwrap_or(l + 1), config.grid.n_phi.unwrap_or(2 * l + 2), l).map_err(cfg_err)?;
    config.solver.validate().map_err(cfg_err)?;
    if config.onofri.t.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Config("onofri.t values must be positive".into()));
    }
    if let Some(p) = &config.onofri.pole {
        let q = p.resolve("onofri.pole", &mut warnings)?;
        echo.onofri.pole = Some(PointInput::Vector(q.coords()));
    }
    if config.blowup.k == 0 {
        return Err(Error::Config("blowup.k must be at least 1".into()));
    }

    let seed = seed.unwrap_or(config.seed);
    echo.seed = seed;
    echo.threads = None;
    echo.output = None;
    Ok(Resolved { config: echo, spec, rhos, grid, seed, warnings })
}

fn require_rho(r: &Resolved, cmd: Command) -> Result<()> {
    if r.rhos.is_empty() {
        return Err(Error::Config(format!("{cmd} needs rho")));
    }
    Ok(())
}

/// Checks that only depend on the config, run before anything is written.
pub fn validate_for(r: &Resolved, cmd: Command) -> Result<()> {
    match cmd {
        Command::Solve | Command::Radial => require_rho(r, cmd)?,
        Command::Analyze => {
            require_rho(r, cmd)?;
            if let Some(x) = r.config.analyze.x_max {
                if !(x.is_finite() && x > 0.0) {
                    return Err(Error::Config("analyze.x_max must be positive".into()));
                }
            }
        }
        Command::Onofri => {
            if r.config.onofri.t.is_empty() {
                return Err(Error::Config("onofri.t is empty".into()));
            }
        }
        Command::Blowup | Command::Morse => {}
    }
    if cmd == Command::Radial {
        let s = &r.spec.singularities;
        if !(s.m() == 2 && s.antipodal_pair() && s.all_pos()) {
            return Err(Error::Config("radial needs two antipodal singularities with positive orders".into()));
        }
    }
    Ok(())
}

/// What a finished command hands back to the binary.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: PathBuf,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Maps library errors onto the frozen exit-code contract.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::DegenerateMorse(_) => EXIT_DEGENERATE_MORSE,
        Error::MaxIter { .. } => EXIT_MAX_ITER,
        _ => EXIT_FAILURE,
    }
}

/// Installs the global worker pool (no-op without the `parallel` feature).
pub fn configure_threads(n: Option<usize>) -> Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<PathBuf> {
        let p = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&p, text)?;
        Ok(p)
    }

    fn field(&mut self, name: &str, u: &ScalarField) -> Result<()> {
        let p = self.path(name);
        write_field_csv(u, fs::File::create(p)?)
    }

    fn profile(&mut self, name: &str, v: &RadialProfile) -> Result<()> {
        let p = self.path(name);
        v.write_csv(fs::File::create(p)?)
    }

    fn rows(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct CommandOutput {
    result: Value,
    tolerances: BTreeMap<&'static str, f64>,
    exit_code: i32,
}

fn attempt<T: Serialize>(r: Result<T>) -> Value {
    match r {
        Ok(v) => serde_json::to_value(v).unwrap_or(Value::Null),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Runs `cmd` for the config at `config_path`.
///
/// Config problems surface as [`Error::Config`] before the output directory
/// is touched. Degenerate Morse data and solver MaxIter still write their
/// reports and come back as exit codes 3 and 4 in the [`Outcome`].
pub fn run(cmd: Command, config_path: &Path, overrides: &Overrides) -> Result<Outcome> {
    let config = RunConfig::load(config_path)?;
    let resolved = resolve(&config, overrides.seed)?;
    validate_for(&resolved, cmd)?;
    let out_dir = overrides.out.clone().or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let threads = resolve_threads(overrides.threads, std::env::var(THREADS_ENV).ok().as_deref(), config.threads)?;
    run_resolved(cmd, &resolved, out_dir, threads, Some(config_path))
}

/// [`run`] on an already resolved config.
pub fn run_resolved(
    cmd: Command,
    r: &Resolved,
    out_dir: PathBuf,
    threads: Option<usize>,
    config_path: Option<&Path>,
) -> Result<Outcome> {
    let started = unix_seconds();
    let clock = Instant::now();
    let mut out = Output::create(out_dir)?;
    let co = match cmd {
        Command::Analyze => cmd_analyze(r, &mut out)?,
        Command::Solve => cmd_solve(r, &mut out)?,
        Command::Radial => cmd_radial(r, &mut out)?,
        Command::Onofri => cmd_onofri(r, &mut out)?,
        Command::Blowup => cmd_blowup(r, &mut out)?,
        Command::Morse => cmd_morse(r, &mut out)?,
    };
    let grid = &r.grid;
    let report = json!({
        "tool": "liouville",
        "version": VERSION,
        "command": cmd.name(),
        "seed": r.seed,
        "config": r.config,
        "resolution": {
            "l_max": grid.l_max(),
            "n_theta": grid.n_theta(),
            "n_phi": grid.n_phi(),
            "ring_spacing": grid.resolution(),
        },
        "tolerances": co.tolerances,
        "warnings": r.warnings,
        "exit_code": co.exit_code,
        "result": co.result,
    });
    let report_path = out.json(&format!("{}.json", cmd.name()), &report)?;
    let meta = json!({
        "started_unix": started,
        "finished_unix": unix_seconds(),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "threads": threads,
        "output_dir": out.dir.display().to_string(),
        "config_path": config_path.map(|p| p.display().to_string()),
    });
    out.json(&format!("{}.meta.json", cmd.name()), &meta)?;
    Ok(Outcome { exit_code: co.exit_code, report: report_path, files: out.files, warnings: r.warnings.clone() })
}

fn morse_tolerances(t: &mut BTreeMap<&'static str, f64>, m: &MorseOptions) {
    t.insert("morse_tol_grad", m.tol_grad);
    t.insert("morse_exclusion_radius", m.exclusion_radius);
    t.insert("morse_fd_scale", m.fd_scale);
    t.insert("morse_hessian_threshold", m.hessian_threshold);
    t.insert("morse_laplacian_threshold", m.laplacian_threshold);
}

fn morse_section(r: &Resolved, data: &MorseData) -> Value {
    let verdict = (!data.degenerate).then(|| {
        morse_existence_check(
            data.r,
            data.s,
            data.r_prime,
            data.s_prime,
            r.spec.singularities.m(),
            r.config.analyze.bar_d_override,
        )
    });
    json!({ "data": data, "euler_sum": data.euler_sum(), "existence_at_8pi": verdict })
}

fn cmd_analyze(r: &Resolved, out: &mut Output) -> Result<CommandOutput> {
    let orders: OrderVector = r.spec.singularities.orders();
    let top = r.rhos.iter().fold(0.0f64, |m, v| m.max(*v)) / (8.0 * PI);
    let x_max = r.config.analyze.x_max.unwrap_or(3.0).max(top + 1.0);
    let gamma = gamma_set(&orders, x_max)?;
    let g = expand_g(&orders, x_max)?;

    let mut rows = Vec::new();
    let mut sweep = Vec::new();
    for &rho in &r.rhos {
        let d = degree(rho, &orders);
        let k = rho / (8.0 * PI);
        rows.push(vec![
            rho.to_string(),
            k.to_string(),
            d.as_ref().map(|d| d.degree.to_string()).unwrap_or_default(),
        ]);
        let teo31 = if orders.m() >= 2 && orders.all_positive() && k < 1.0 + orders.min_alpha().unwrap() {
            attempt(check_cond_teo31(&r.spec, k, &r.grid, r.config.morse.fd_scale))
        } else {
            Value::Null
        };
        sweep.push(json!({
            "rho": rho,
            "rho_over_8pi": k,
            "degree": attempt(d),
            "existence": attempt(existence_verdict(rho, &orders)),
            "laplacian_condition_8kpi": teo31,
        }));
    }
    out.rows("degree.csv", &["rho", "rho_over_8pi", "degree"], &rows)?;

    let data = morse_analysis(&r.spec, &r.grid, &r.config.morse)?;
    let teo3 = if orders.m() >= 2 && orders.all_positive() && !data.degenerate {
        attempt(check_cond_teo3(&r.spec, &r.grid, &r.config.morse))
    } else {
        Value::Null
    };
    let mut tolerances = BTreeMap::new();
    tolerances.insert("exponent_tol", crate::series::EXPONENT_TOL);
    tolerances.insert("x_max", x_max);
    morse_tolerances(&mut tolerances, &r.config.morse);
    let result = json!({
        "orders": orders.alphas(),
        "gamma": gamma,
        "generating_function": { "terms": g.nonzero_terms(), "display": g.to_string() },
        "bar_d": attempt(bar_d(&orders)),
        "sweep": sweep,
        "laplacian_condition_8pi": teo3,
        "morse": morse_section(r, &data),
    });
    let exit_code = if data.degenerate { EXIT_DEGENERATE_MORSE } else { EXIT_OK };
    Ok(CommandOutput { result, tolerances, exit_code })
}

fn solver_tolerances(t: &mut BTreeMap<&'static str, f64>, s: &SolverOptions) {
    t.insert("tol_res", s.tol_res);
    t.insert("blowup_ceiling", s.blowup_ceiling);
    t.insert("max_iter", s.max_iter as f64);
}

fn run_sweep(r: &Resolved, h: &ScalarField) -> (Vec<SolveResult>, Vec<Value>, i32) {
    let opts = SolverOptions { seed: r.seed, ..r.config.solver.clone() };
    let mut results: Vec<SolveResult> = Vec::new();
    let mut entries = Vec::new();
    let mut exit_code = EXIT_OK;
    for &rho in &r.rhos {
        let init = results.last().map_or(Init::Zero, |p| Init::Field(p.u.clone()));
        match minimize(rho, h, &init, &opts) {
            Ok(res) => {
                if res.status == SolveStatus::MaxIter {
                    exit_code = EXIT_MAX_ITER;
                }
                entries.push(serde_json::to_value(res.summary()).unwrap_or(Value::Null));
                results.push(res);
            }
            Err(e) => {
                exit_code = exit_code.max(match e {
                    Error::MaxIter { .. } => EXIT_MAX_ITER,
                    _ => EXIT_FAILURE,
                });
                entries.push(json!({ "rho": rho, "status": "MaxIter", "error": e.to_string() }));
                break;
            }
        }
    }
    (results, entries, exit_code)
}

fn cmd_solve(r: &Resolved, out: &mut Output) -> Result<CommandOutput> {
    let h = build_h(&r.spec, &r.grid)?;
    let (results, entries, exit_code) = run_sweep(r, &h);
    for (i, res) in results.iter().enumerate() {
        out.field(&format!("u_{i:03}.csv"), &res.u)?;
    }
    let mut tolerances = BTreeMap::new();
    solver_tolerances(&mut tolerances, &r.config.solver);
    Ok(CommandOutput { result: json!({ "solves": entries }), tolerances, exit_code })
}

fn cmd_radial(r: &Resolved, out: &mut Output) -> Result<CommandOutput> {
    let opts = &r.config.radial;
    let grid = SphereGrid::for_band_limit(opts.l_max)?;
    let mut prev: Option<RadialProfile> = None;
    let mut entries = Vec::new();
    let mut exit_code = EXIT_OK;
    for (i, &rho) in r.rhos.iter().enumerate() {
        match minimize_radial_on(rho, &r.spec, opts, &grid, prev.as_ref()) {
            Ok(sol) => {
                if sol.result.status == SolveStatus::MaxIter {
                    exit_code = EXIT_MAX_ITER;
                }
                out.profile(&format!("profile_{i:03}.csv"), &sol.profile)?;
                out.field(&format!("u_{i:03}.csv"), &sol.result.u)?;
                entries.push(json!({
                    "rho": rho,
                    "j_radial": sol.j_radial,
                    "lifted_residual": sol.result.residual,
                    "status": sol.result.status,
                    "iterations": sol.result.iterations,
                    "axis": sol.axis,
                    "tail_exponents": sol.profile.tail_exponents(),
                    "lifted": sol.result.summary(),
                    "profile": format!("profile_{i:03}.csv"),
                    "field": format!("u_{i:03}.csv"),
                }));
                prev = Some(sol.profile);
            }
            Err(e) => {
                exit_code = exit_code.max(match e {
                    Error::MaxIter { .. } => EXIT_MAX_ITER,
                    _ => EXIT_FAILURE,
                });
                entries.push(json!({ "rho": rho, "error": e.to_string() }));
                break;
            }
        }
    }
    let mut tolerances = BTreeMap::new();
    tolerances.insert("tol_step", opts.tol_step);
    tolerances.insert("tol_res", opts.tol_res);
    tolerances.insert("lift_l_max", opts.l_max as f64);
    tolerances.insert("nodes", opts.nodes as f64);
    Ok(CommandOutput { result: json!({ "solves": entries }), tolerances, exit_code })
}

/// Location and value of the maximum of h: the largest nondegenerate
/// maximum from the Morse scan, or the best grid node.
fn maximum_of_h(r: &Resolved, h: &ScalarField) -> (SpherePoint, f64) {
    let (node, node_max) = h.argmax();
    let mut best = (*r.grid.point(node), node_max);
    if let Ok(data) = morse_analysis(&r.spec, &r.grid, &r.config.morse) {
        for p in data.points.iter().filter(|p| p.kind == CriticalKind::Maximum) {
            if p.h > best.1 {
                best = (p.location, p.h);
            }
        }
    }
    best
}

fn cmd_onofri(r: &Resolved, out: &mut Output) -> Result<CommandOutput> {
    let h = build_h(&r.spec, &r.grid)?;
    let rho = r.rhos.first().copied().unwrap_or(8.0 * PI);
    let (pole, max_h) = match &r.config.onofri.pole {
        Some(PointInput::Vector(v)) => {
            let p = SpherePoint::new(v[0], v[1], v[2])?;
            (p, r.spec.h(&p))
        }
        _ => maximum_of_h(r, &h),
    };
    let reference = -rho * max_h.ln();
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for &t in &r.config.onofri.t {
        let u = dilation_family(t, &pole, &r.grid)?;
        let j = evaluate_j(&u, rho, &h)?;
        let mass = u.map(f64::exp).integrate();
        let gap = j - reference;
        rows.push(vec![t.to_string(), j.to_string(), gap.to_string(), mass.to_string()]);
        table.push(json!({ "t": t, "j": j, "gap": gap, "exp_mass": mass }));
    }
    out.rows("onofri.csv", &["t", "j", "gap", "exp_mass"], &rows)?;
    let mut tolerances = BTreeMap::new();
    tolerances.insert("ring_spacing", r.grid.resolution());
    Ok(CommandOutput {
        result: json!({ "rho": rho, "pole": pole, "max_h": max_h, "reference": reference, "table": table }),
        tolerances,
        exit_code: EXIT_OK,
    })
}

fn cmd_blowup(r: &Resolved, out: &mut Output) -> Result<CommandOutput> {
    let b = &r.config.blowup;
    let search = CriticalSearchOptions { seed: r.seed, ..b.search.clone() };
    let found = find_critical_configurations_with(b.k, &r.spec, &r.grid, b.starts, &search)?;
    let mut configs = Vec::new();
    for c in &found {
        let with = c.configuration.clone().with_heights(vec![b.lambda; b.k])?;
        let conditions: Vec<f64> = with
            .points
            .iter()
            .map(|q| r.spec.laplacian_log_h(q, 1e-4) + 2.0 * (b.k as f64 - 1.0))
            .collect();
        configs.push(json!({
            "critical": c,
            "rate": attempt(blowup_rate(&with, &r.spec, b.k)),
            "rate_lambda": b.lambda,
            "laplacian_conditions": conditions,
        }));
    }
    let mut result = json!({ "k": b.k, "starts": b.starts, "configurations": configs });
    let mut exit_code = EXIT_OK;
    let mut tolerances = BTreeMap::new();
    tolerances.insert("search_tol_grad", search.tol_grad);
    tolerances.insert("search_fd_scale", search.fd_scale);
    tolerances.insert("search_cluster_radius", search.cluster_radius);
    tolerances.insert("search_separation", search.separation);
    if r.rhos.len() >= 3 {
        let h = build_h(&r.spec, &r.grid)?;
        let (results, entries, code) = run_sweep(r, &h);
        exit_code = code;
        for (i, res) in results.iter().enumerate() {
            out.field(&format!("u_{i:03}.csv"), &res.u)?;
        }
        result["solves"] = Value::Array(entries);
        result["sequence"] = attempt(classify_sequence(&results, &r.spec, &b.classify));
        solver_tolerances(&mut tolerances, &r.config.solver);
        tolerances.insert("classify_mass_tol", b.classify.mass_tol);
        tolerances.insert("classify_mass_radius", b.classify.mass_radius);
    }
    Ok(CommandOutput { result, tolerances, exit_code })
}

fn cmd_morse(r: &Resolved, out: &mut Output) -> Result<CommandOutput> {
    let data = morse_analysis(&r.spec, &r.grid, &r.config.morse)?;
    let rows: Vec<Vec<String>> = data
        .points
        .iter()
        .map(|p| {
            let [x, y, z] = p.location.coords();
            vec![
                x.to_string(),
                y.to_string(),
                z.to_string(),
                p.h.to_string(),
                format!("{:?}", p.kind).to_lowercase(),
                p.index.to_string(),
                p.laplacian_h.to_string(),
                p.gradient_norm.to_string(),
            ]
        })
        .collect();
    out.rows("critical_points.csv", &["x", "y", "z", "h", "kind", "index", "laplacian_h", "gradient_norm"], &rows)?;
    let mut tolerances = BTreeMap::new();
    morse_tolerances(&mut tolerances, &r.config.morse);
    let exit_code = if data.degenerate { EXIT_DEGENERATE_MORSE } else { EXIT_OK };
    Ok(CommandOutput { result: morse_section(r, &data), tolerances, exit_code })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_sweep_and_units() {
        let cfg = RunConfig::from_json(r#"{"rho": {"start": 4, "stop": 20, "count": 5}, "rho_unit": "pi", "grid": {"l_max": 7}}"#)
            .unwrap();
        let r = resolve(&cfg, None).unwrap();
        assert_eq!(r.rhos.len(), 5);
        assert!((r.rhos[4] - 20.0 * PI).abs() < 1e-12);
        assert_eq!(r.grid.n_theta(), 8);
    }

    #[test]
    fn points_are_normalized_with_warning() {
        let cfg = RunConfig::from_json(
            r#"{"singularities": [{"point": [0, 0, 2], "alpha": 1}, {"point": {"theta": 3.141592653589793, "phi": 0}, "alpha": 1}],
                "grid": {"l_max": 7}}"#,
        )
        .unwrap();
        let r = resolve(&cfg, Some(5)).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.config.singularities[0].point, PointInput::Vector([0.0, 0.0, 1.0]));
        assert!(r.spec.singularities.antipodal_pair());
        assert_eq!(r.seed, 5);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(RunConfig::from_json("{"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"rhoo": 3}"#), Err(Error::Config(_))));
        let bad_alpha = RunConfig::from_json(r#"{"singularities": [{"point": [0, 0, 1], "alpha": -2}]}"#).unwrap();
        assert!(matches!(resolve(&bad_alpha, None), Err(Error::Config(_))));
        let undersampled = RunConfig::from_json(r#"{"grid": {"l_max": 7, "n_theta": 4}}"#).unwrap();
        assert!(matches!(resolve(&undersampled, None), Err(Error::Config(_))));
        let no_rho = resolve(&RunConfig::from_json(r#"{"grid": {"l_max": 7}}"#).unwrap(), None).unwrap();
        assert!(validate_for(&no_rho, Command::Solve).is_err());
        assert!(validate_for(&no_rho, Command::Morse).is_ok());
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::DegenerateMorse("x".into())), 3);
        assert_eq!(exit_code(&Error::MaxIter { iterations: 1, residual: 1.0 }), 4);
    }

    #[test]
    fn thread_precedence() {
        assert_eq!(resolve_threads(Some(2), Some("3"), Some(4)).unwrap(), Some(2));
        assert_eq!(resolve_threads(None, Some("3"), Some(4)).unwrap(), Some(3));
        assert_eq!(resolve_threads(None, None, Some(4)).unwrap(), Some(4));
        assert!(resolve_threads(None, Some("x"), None).is_err());
    }
}
