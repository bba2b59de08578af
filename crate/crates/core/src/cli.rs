//! Batch front end: TOML run configurations, subcommand dispatch and
//! deterministic CSV/JSON artifacts.
//!
//! Every run writes `results.csv` (one row per grid point, floats as
//! `{:.16e}`), `resolved-config.json` (the configuration with all defaults
//! filled in) and `report.json` (summary statistics) into the output
//! directory. Configuration problems exit with status 2 and a
//! `path:line: message` diagnostic; numerical failures on individual grid
//! points are recorded in the row's `status` column and the run continues.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cgf::{make_builtin, verify_cramer, verify_moment_condition, InnovationModel, Law, MAX_CUMULANT_ORDER};
use crate::error::Error;
use crate::field::{Angular, CoefficientField, Cutoff, Family, Origin, PartialSumModel, SlowlyVarying};
use crate::mc::{self, OracleEstimate};
use crate::regress::{self, Kernel, RegressionDesign, RegressionFunction};
use crate::risk;
use crate::series::{inversion_coefficients, lambda_coefficients, MAX_ORDER};
use crate::tilt::{self, normal, TiltOptions, Variant};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Tail,
    CdfDiff,
    Quantile,
    Es,
    CompareTruncation,
    Regress,
    Verify,
    Cumulants,
    Scaling,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Tail => "tail",
            Command::CdfDiff => "cdf-diff",
            Command::Quantile => "quantile",
            Command::Es => "es",
            Command::CompareTruncation => "compare-truncation",
            Command::Regress => "regress",
            Command::Verify => "verify",
            Command::Cumulants => "cumulants",
            Command::Scaling => "scaling",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "moddev", version, about = "Moderate-deviation tail approximations for linear random fields")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `oracle.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

// ---------------------------------------------------------------------------
// configuration schema

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub innovation: InnovationSpec,
    #[serde(default)]
    pub field: FieldSpec,
    #[serde(default)]
    pub window: WindowSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub tilt: TiltSpec,
    #[serde(default)]
    pub truncation: TruncationSpec,
    #[serde(default)]
    pub regress: RegressSpec,
    #[serde(default)]
    pub cumulants: CumulantSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// `name` plus the law's parameters and optional `radius_h`/`bound_c`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnovationSpec {
    pub name: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OriginSpec {
    Value(f64),
    Mode(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitCoefficient {
    pub index: Vec<i64>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    /// `iid`, `geometric`, `long_memory`, `farima` or `explicit`.
    #[serde(default = "default_family")]
    pub family: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub rho: Option<f64>,
    pub alpha: Option<f64>,
    /// `constant` or `log1p`.
    #[serde(default = "default_profile")]
    pub profile: String,
    /// `constant` or `first_cosine`.
    #[serde(default = "default_angular")]
    pub angular: String,
    #[serde(default = "one")]
    pub angular_constant: f64,
    /// A number, `auto` or `continuum_matched`.
    #[serde(default = "default_origin")]
    pub a0: OriginSpec,
    pub beta: Option<f64>,
    #[serde(default)]
    pub phi: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
    /// Fixed coefficient cutoff; the family default applies when absent.
    pub m_max: Option<usize>,
    /// Cutoff `⌈c·n⌉`; ignored when `m_max` is set.
    pub window_multiple: Option<f64>,
    #[serde(default)]
    pub coefficients: Vec<ExplicitCoefficient>,
}

fn default_family() -> String {
    "iid".into()
}
fn default_dim() -> usize {
    1
}
fn default_profile() -> String {
    "constant".into()
}
fn default_angular() -> String {
    "constant".into()
}
fn default_origin() -> OriginSpec {
    OriginSpec::Mode("auto".into())
}
fn one() -> f64 {
    1.0
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec {
            family: default_family(),
            dim: default_dim(),
            rho: None,
            alpha: None,
            profile: default_profile(),
            angular: default_angular(),
            angular_constant: 1.0,
            a0: default_origin(),
            beta: None,
            phi: Vec::new(),
            theta: Vec::new(),
            m_max: None,
            window_multiple: None,
            coefficients: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    /// Window half-width `n`, or a list of them.
    #[serde(default = "default_window")]
    pub n: OneOrMany,
}

fn default_window() -> OneOrMany {
    OneOrMany::One(100)
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { n: default_window() }
    }
}

impl WindowSpec {
    fn list(&self) -> Vec<usize> {
        match &self.n {
            OneOrMany::One(n) => vec![*n],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Explicit standardized thresholds; overrides the start/stop/step form.
    pub x: Option<Vec<f64>>,
    #[serde(default)]
    pub x_start: f64,
    #[serde(default = "default_x_stop")]
    pub x_stop: f64,
    #[serde(default = "default_x_step")]
    pub x_step: f64,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
}

fn default_x_stop() -> f64 {
    3.0
}
fn default_x_step() -> f64 {
    0.5
}
fn default_alpha() -> Vec<f64> {
    vec![0.1, 0.05, 0.025, 0.01]
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            x: None,
            x_start: 0.0,
            x_stop: default_x_stop(),
            x_step: default_x_step(),
            alpha: default_alpha(),
        }
    }
}

impl GridSpec {
    fn xs(&self) -> Vec<f64> {
        if let Some(x) = &self.x {
            return x.clone();
        }
        let count = ((self.x_stop - self.x_start) / self.x_step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.x_start + k as f64 * self.x_step).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// `auto`, `exact_enum`, `irwin_hall`, `plain_mc`, `tilted_is` or `none`.
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_samples")]
    pub n_samples: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Move lattice thresholds to the midpoint between attainable values.
    #[serde(default = "yes")]
    pub mid_lattice: bool,
}

fn default_method() -> String {
    "auto".into()
}
fn default_samples() -> u64 {
    100_000
}
fn default_seed() -> u64 {
    1
}
fn yes() -> bool {
    true
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec {
            method: default_method(),
            n_samples: default_samples(),
            seed: default_seed(),
            mid_lattice: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiltSpec {
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_series_order")]
    pub series_order: usize,
    /// `theorem` or `saddlepoint`.
    #[serde(default = "default_variant")]
    pub variant: String,
}

fn default_t_max() -> f64 {
    TiltOptions::default().t_max
}
fn default_series_order() -> usize {
    TiltOptions::default().series_order
}
fn default_variant() -> String {
    "theorem".into()
}

impl Default for TiltSpec {
    fn default() -> Self {
        TiltSpec {
            t_max: default_t_max(),
            series_order: default_series_order(),
            variant: default_variant(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    #[serde(default = "default_m")]
    pub m: Vec<usize>,
}

fn default_m() -> Vec<usize> {
    vec![5, 20, 80]
}

impl Default for TruncationSpec {
    fn default() -> Self {
        TruncationSpec { m: default_m() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressSpec {
    #[serde(default = "default_kernel")]
    pub kernel: Kernel,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
    /// Query points; defaults to `0.1, …, 0.9` along the diagonal.
    #[serde(default)]
    pub z: Vec<Vec<f64>>,
    #[serde(default = "default_regress_x")]
    pub x: f64,
    /// Also write `simulation.csv` with one simulated sinusoid fit.
    #[serde(default)]
    pub simulate: bool,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn default_kernel() -> Kernel {
    Kernel::Gaussian
}
fn default_bandwidth() -> f64 {
    0.1
}
fn default_regress_x() -> f64 {
    2.0
}

impl Default for RegressSpec {
    fn default() -> Self {
        RegressSpec {
            kernel: default_kernel(),
            bandwidth: default_bandwidth(),
            z: Vec::new(),
            x: default_regress_x(),
            simulate: false,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CumulantSpec {
    #[serde(default = "default_cumulant_order")]
    pub order: usize,
}

fn default_cumulant_order() -> usize {
    8
}

impl Default for CumulantSpec {
    fn default() -> Self {
        CumulantSpec {
            order: default_cumulant_order(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Write `weights.csv` for the first window.
    #[serde(default)]
    pub weights: bool,
}

// ---------------------------------------------------------------------------
// validation

/// A configuration problem tied to a key of the TOML file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(text: &str, section: &str, key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            line: locate(text, section, key),
            message: if key.is_empty() {
                format!("[{section}] {}", message.into())
            } else {
                format!("[{section}] {key}: {}", message.into())
            },
        }
    }

    fn from_error(text: &str, section: &str, err: Error) -> Self {
        match err {
            Error::InvalidParameter { name, reason } => ConfigError::at(text, section, &name, reason),
            other => ConfigError::at(text, section, "", other.to_string()),
        }
    }

    pub fn render(&self, path: &Path) -> String {
        match self.line {
            Some(line) => format!("{}:{line}: {}", path.display(), self.message),
            None => format!("{}: {}", path.display(), self.message),
        }
    }
}

/// 1-based line of `key` inside `[section]`, falling back to the section
/// header.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section {
                header = Some(idx + 1);
            }
            continue;
        }
        if current == section && !key.is_empty() {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(idx + 1);
                }
            }
        }
    }
    header
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Everything a subcommand needs, built and validated up front.
pub struct Resolved {
    pub config: RunConfig,
    pub innovation: InnovationModel,
    pub field: CoefficientField,
    pub windows: Vec<usize>,
    pub xs: Vec<f64>,
    pub opts: TiltOptions,
    pub variant: Variant,
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of_offset(text, s.start)),
        message: e.message().trim().to_string(),
    })
}

fn build_field(text: &str, spec: &FieldSpec, windows: &[usize]) -> Result<CoefficientField, ConfigError> {
    let err = |e: Error| ConfigError::from_error(text, "field", e);
    let cutoff = match (spec.m_max, spec.window_multiple) {
        (Some(m), _) => Cutoff::Fixed(m),
        (None, Some(c)) => Cutoff::WindowMultiple(c),
        (None, None) => Cutoff::Auto,
    };
    let require = |v: Option<f64>, key: &str| {
        v.ok_or_else(|| ConfigError::at(text, "field", key, format!("required by family `{}`", spec.family)))
    };
    let field = match spec.family.as_str() {
        "iid" => CoefficientField::iid(spec.dim).map_err(err)?,
        "geometric" => CoefficientField::geometric(spec.dim, require(spec.rho, "rho")?, cutoff).map_err(err)?,
        "long_memory" => {
            let profile = match spec.profile.as_str() {
                "constant" => SlowlyVarying::Constant,
                "log1p" => SlowlyVarying::Log1p,
                other => return Err(ConfigError::at(text, "field", "profile", format!("unknown profile `{other}`"))),
            };
            let angular = match spec.angular.as_str() {
                "constant" => Angular::Constant(spec.angular_constant),
                "first_cosine" => Angular::FirstCosine,
                other => return Err(ConfigError::at(text, "field", "angular", format!("unknown angular factor `{other}`"))),
            };
            let origin = match &spec.a0 {
                OriginSpec::Value(v) => Origin::Value(*v),
                OriginSpec::Mode(m) if m == "auto" => Origin::Auto,
                OriginSpec::Mode(m) if m == "continuum_matched" => Origin::ContinuumMatched,
                OriginSpec::Mode(m) => return Err(ConfigError::at(text, "field", "a0", format!("unknown mode `{m}`"))),
            };
            CoefficientField::long_memory(spec.dim, require(spec.alpha, "alpha")?, profile, angular, origin, cutoff)
                .map_err(err)?
        }
        "farima" => {
            if spec.dim != 1 {
                return Err(ConfigError::at(text, "field", "dim", "farima fields are one-dimensional"));
            }
            CoefficientField::farima(require(spec.beta, "beta")?, spec.phi.clone(), spec.theta.clone(), cutoff)
                .map_err(err)?
        }
        "explicit" => {
            let map = spec.coefficients.iter().map(|c| (c.index.clone(), c.value)).collect();
            CoefficientField::explicit(spec.dim, map).map_err(err)?
        }
        other => return Err(ConfigError::at(text, "field", "family", format!("unknown family `{other}`"))),
    };
    if windows.is_empty() || windows.contains(&0) {
        return Err(ConfigError::at(text, "window", "n", "window half-widths must be positive"));
    }
    Ok(field)
}

/// Parses and validates a configuration; `seed` overrides `oracle.seed`.
pub fn resolve(text: &str, seed: Option<u64>) -> Result<Resolved, ConfigError> {
    let mut config = parse_config(text)?;
    if let Some(s) = seed {
        config.oracle.seed = s;
    }
    let innovation = make_builtin(&config.innovation.name, &config.innovation.params).map_err(|e| match e {
        Error::UnknownLaw(name) => ConfigError::at(text, "innovation", "name", format!("unknown law `{name}`")),
        other => ConfigError::from_error(text, "innovation", other),
    })?;
    config.innovation.params.insert("radius_h".into(), innovation.radius_h());
    config.innovation.params.insert("bound_c".into(), innovation.bound_c());
    let windows = config.window.list();
    config.window.n = OneOrMany::Many(windows.clone());
    let field = build_field(text, &config.field, &windows)?;
    let grid = &config.grid;
    if grid.x.is_none() && !(grid.x_step > 0.0 && grid.x_stop >= grid.x_start) {
        return Err(ConfigError::at(text, "grid", "x_step", "needs x_step > 0 and x_stop >= x_start"));
    }
    let xs = grid.xs();
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(ConfigError::at(text, "grid", "x", "thresholds must be finite"));
    }
    config.grid.x = Some(xs.clone());
    if let Some(a) = config.grid.alpha.iter().find(|a| !(**a > 1e-12 && **a < 1.0)) {
        return Err(ConfigError::at(text, "grid", "alpha", format!("{a} is outside (1e-12, 1)")));
    }
    let opts = TiltOptions {
        t_max: config.tilt.t_max,
        series_order: config.tilt.series_order,
    };
    opts.validate().map_err(|e| ConfigError::from_error(text, "tilt", e))?;
    let variant = match config.tilt.variant.as_str() {
        "theorem" => Variant::TheoremForm,
        "saddlepoint" => Variant::SaddlepointForm,
        other => return Err(ConfigError::at(text, "tilt", "variant", format!("unknown variant `{other}`"))),
    };
    const METHODS: [&str; 6] = ["auto", "exact_enum", "irwin_hall", "plain_mc", "tilted_is", "none"];
    if !METHODS.contains(&config.oracle.method.as_str()) {
        return Err(ConfigError::at(
            text,
            "oracle",
            "method",
            format!("unknown method `{}`; expected one of {}", config.oracle.method, METHODS.join(", ")),
        ));
    }
    if config.oracle.n_samples < mc::MIN_SAMPLES {
        return Err(ConfigError::at(text, "oracle", "n_samples", format!("must be at least {}", mc::MIN_SAMPLES)));
    }
    if !(config.regress.bandwidth > 0.0) {
        return Err(ConfigError::at(text, "regress", "bandwidth", "must be positive"));
    }
    if config.regress.z.is_empty() {
        config.regress.z = (1..10).map(|k| vec![k as f64 / 10.0; config.field.dim]).collect();
    }
    if config.regress.z.iter().any(|z| z.len() != config.field.dim) {
        return Err(ConfigError::at(text, "regress", "z", format!("points must have {} coordinates", config.field.dim)));
    }
    if !(1..=MAX_ORDER).contains(&config.cumulants.order) {
        return Err(ConfigError::at(text, "cumulants", "order", format!("must lie in 1..={MAX_ORDER}")));
    }
    Ok(Resolved {
        config,
        innovation,
        field,
        windows,
        xs,
        opts,
        variant,
    })
}

// ---------------------------------------------------------------------------
// tables

#[derive(Debug, Clone)]
pub enum Cell {
    F(f64),
    U(u64),
    S(String),
    B(bool),
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => fmt_f(*v),
            Cell::U(v) => v.to_string(),
            Cell::S(s) => s.replace([',', '\n', '"'], " "),
            Cell::B(b) => b.to_string(),
        }
    }
}

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    fn status_errors(&self) -> usize {
        let Some(idx) = self.header.iter().position(|h| *h == "status") else {
            return 0;
        };
        self.rows
            .iter()
            .filter(|r| matches!(&r[idx], Cell::S(s) if s != "ok"))
            .count()
    }

    fn column(&self, name: &str) -> Vec<f64> {
        let idx = self.header.iter().position(|h| *h == name).expect("known column");
        self.rows
            .iter()
            .map(|r| match &r[idx] {
                Cell::F(v) => *v,
                Cell::U(v) => *v as f64,
                _ => f64::NAN,
            })
            .collect()
    }
}

fn status(errors: &[String]) -> Cell {
    if errors.is_empty() {
        Cell::S("ok".into())
    } else {
        Cell::S(format!("error: {}", errors.join("; ")))
    }
}

fn nan_or<T>(r: &Result<T, Error>, f: impl Fn(&T) -> f64) -> f64 {
    r.as_ref().map(f).unwrap_or(f64::NAN)
}

fn note<T>(r: &Result<T, Error>, label: &str, errors: &mut Vec<String>) {
    if let Err(e) = r {
        errors.push(if label.is_empty() { e.to_string() } else { format!("{label}: {e}") });
    }
}

/// Per-row seed derived from the run seed by SplitMix64 mixing.
fn row_seed(seed: u64, row: usize) -> u64 {
    let mut z = seed.wrapping_add((row as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// subcommands

pub struct RunOutput {
    pub table: Table,
    pub report: Value,
    pub extra: Vec<(String, String)>,
}

fn models(r: &Resolved) -> Result<Vec<PartialSumModel>, Error> {
    r.windows.iter().map(|&n| r.field.window_weights(&r.innovation, n)).collect()
}

fn grid_pairs(r: &Resolved) -> Vec<(usize, f64)> {
    (0..r.windows.len())
        .flat_map(|i| r.xs.iter().map(move |&x| (i, x)))
        .collect()
}

fn tail_cmd(r: &Resolved, ms: &[PartialSumModel]) -> RunOutput {
    let rows: Vec<Vec<Cell>> = grid_pairs(r)
        .into_par_iter()
        .map(|(i, x)| {
            let m = &ms[i];
            let mut errors = Vec::new();
            let up = if x >= 0.0 {
                tilt::tail_upper(m, x, r.variant, &r.opts)
            } else {
                Err(Error::param("x", "upper-tail grid points must be nonnegative"))
            };
            let lo = tilt::tail_lower(m, x.abs(), r.variant, &r.opts);
            note(&up, "", &mut errors);
            note(&lo, "lower", &mut errors);
            let sf = normal::sf(x);
            vec![
                Cell::U(r.windows[i] as u64),
                Cell::F(x),
                Cell::F(nan_or(&up, |e| e.t)),
                Cell::F(nan_or(&up, |e| e.z)),
                Cell::F(nan_or(&up, |e| e.value)),
                Cell::F(nan_or(&up, |e| e.log_value)),
                Cell::F(nan_or(&lo, |e| e.value)),
                Cell::F(sf),
                Cell::F(nan_or(&up, |e| e.value / sf)),
                Cell::F(nan_or(&up, |e| e.correction_factor)),
                Cell::F(nan_or(&up, |e| e.lambda_t)),
                Cell::F((x.abs() + 1.0) / m.scale()),
                Cell::S(tilt::regime(m, x, &r.opts).as_str().into()),
                Cell::S(r.variant.as_str().into()),
                status(&errors),
            ]
        })
        .collect();
    let table = Table {
        header: vec![
            "n", "x", "t", "z", "approx", "log_approx", "lower_approx", "normal_sf", "ratio",
            "correction_factor", "lambda_t", "error_scale", "regime", "variant", "status",
        ],
        rows,
    };
    let ratios = table.column("ratio");
    let report = json!({
        "max_abs_log_ratio": ratios.iter().filter(|v| v.is_finite()).map(|v| v.ln().abs()).fold(0.0, f64::max),
    });
    RunOutput { table, report, extra: vec![] }
}

/// Oracle estimate of `P(S_n > s)` following `oracle.method`.
fn oracle_upper(r: &Resolved, m: &PartialSumModel, s: f64, seed: u64) -> Result<OracleEstimate, Error> {
    let spec = &r.config.oracle;
    let inn = m.innovation();
    let groups = m.weight_groups();
    let irwin_hall_ok = matches!(inn.law(), Law::CenteredUniform { .. }) && groups.len() == 1 && groups[0].1 <= mc::MAX_IRWIN_HALL;
    let irwin_hall = |m: &PartialSumModel| {
        let (b, count) = m.weight_groups()[0];
        let Law::CenteredUniform { half_width } = *m.innovation().law() else {
            return Err(Error::Unsupported("irwin_hall needs centered_uniform innovations".into()));
        };
        if m.weight_groups().len() != 1 {
            return Err(Error::Unsupported("irwin_hall needs equal weights".into()));
        }
        mc::irwin_hall_tail(count, s / (b * half_width))
    };
    match spec.method.as_str() {
        "exact_enum" => mc::exact_tail_enum(m, s),
        "irwin_hall" => irwin_hall(m),
        "plain_mc" => mc::plain_mc(m, s, spec.n_samples, seed),
        "tilted_is" => mc::tilted_is(m, s, spec.n_samples, seed, &r.opts),
        "none" => Err(Error::Unsupported("oracle disabled".into())),
        _ => {
            if inn.finite_support().is_some() {
                if let Ok(est) = mc::exact_tail_enum(m, s) {
                    return Ok(est);
                }
            }
            if irwin_hall_ok {
                return irwin_hall(m);
            }
            if s <= 0.0 {
                mc::plain_mc(m, s, spec.n_samples, seed)
            } else {
                mc::tilted_is(m, s, spec.n_samples, seed, &r.opts)
            }
        }
    }
}

fn negated(m: &PartialSumModel) -> Result<PartialSumModel, Error> {
    let sites: Vec<(Vec<i64>, f64)> = m.sites().filter(|s| s.1 != 0.0).map(|(j, b)| (j, -b)).collect();
    PartialSumModel::from_sites(m.innovation().clone(), m.dim(), &sites, m.window())
}

fn threshold_for(r: &Resolved, m: &PartialSumModel, x: f64) -> f64 {
    let s = x * m.b_n().sqrt();
    if r.config.oracle.mid_lattice {
        mc::mid_lattice(m, s)
    } else {
        s
    }
}

fn verify_cmd(r: &Resolved, ms: &[PartialSumModel]) -> RunOutput {
    let lattice = r.innovation.lattice().is_some();
    let rows: Vec<Vec<Cell>> = grid_pairs(r)
        .into_par_iter()
        .enumerate()
        .map(|(row, (i, x))| {
            let m = &ms[i];
            let mut errors = Vec::new();
            let s = threshold_for(r, m, x);
            let x_eff = s / m.b_n().sqrt();
            let approx = tilt::tail_upper(m, x_eff.max(0.0), r.variant, &r.opts);
            let oracle = oracle_upper(r, m, s, row_seed(r.config.oracle.seed, row));
            note(&approx, "approx", &mut errors);
            note(&oracle, "oracle", &mut errors);
            let error_scale = (x_eff.abs() + 1.0) / m.scale();
            let rel_se = nan_or(&oracle, |o| if o.std_err == 0.0 { 0.0 } else { o.rel_std_err() });
            let tolerance = 1.5 * error_scale + 3.0 * rel_se + if lattice { 0.10 } else { 0.0 };
            let ratio = nan_or(&approx, |a| a.value) / nan_or(&oracle, |o| o.p_hat);
            vec![
                Cell::U(r.windows[i] as u64),
                Cell::F(x),
                Cell::F(x_eff),
                Cell::F(s),
                Cell::F(nan_or(&approx, |a| a.value)),
                Cell::F(nan_or(&oracle, |o| o.p_hat)),
                Cell::F(nan_or(&oracle, |o| o.std_err)),
                Cell::F(ratio),
                Cell::F(error_scale),
                Cell::F(tolerance),
                Cell::B((ratio - 1.0).abs() <= tolerance),
                Cell::S(oracle.as_ref().map(|o| o.method.as_str()).unwrap_or("none").into()),
                Cell::S(tilt::regime(m, x_eff, &r.opts).as_str().into()),
                status(&errors),
            ]
        })
        .collect();
    let table = Table {
        header: vec![
            "n", "x", "x_eff", "threshold", "approx", "oracle", "std_err", "ratio", "error_scale", "tolerance",
            "within", "method", "regime", "status",
        ],
        rows,
    };
    let ratios = table.column("ratio");
    let within = table.rows.iter().filter(|r| matches!(r[10], Cell::B(true))).count();
    let report = json!({
        "max_abs_ratio_minus_one": ratios.iter().filter(|v| v.is_finite()).map(|v| (v - 1.0).abs()).fold(0.0, f64::max),
        "rows_within_tolerance": within,
    });
    RunOutput { table, report, extra: vec![] }
}

fn cdf_diff_cmd(r: &Resolved, ms: &[PartialSumModel]) -> RunOutput {
    let use_oracle = r.config.oracle.method != "none";
    let negs: Vec<Option<PartialSumModel>> = ms.iter().map(|m| negated(m).ok()).collect();
    let rows: Vec<Vec<Cell>> = grid_pairs(r)
        .into_par_iter()
        .enumerate()
        .map(|(row, (i, x))| {
            let m = &ms[i];
            let mut errors = Vec::new();
            let s = threshold_for(r, m, x);
            let xe = s / m.b_n().sqrt();
            // F_n(x) = P(S_n ≤ x√B_n)
            let approx = if xe >= 0.0 {
                tilt::tail_upper(m, xe, r.variant, &r.opts).map(|e| 1.0 - e.value)
            } else {
                tilt::tail_lower(m, -xe, r.variant, &r.opts).map(|e| e.value)
            };
            note(&approx, "approx", &mut errors);
            let phi = normal::cdf(xe);
            let bound = (-0.5 * xe * xe).exp() / m.scale();
            let diff = nan_or(&approx, |a| a - phi);
            let (ocdf, ose) = if use_oracle {
                let seed = row_seed(r.config.oracle.seed, row);
                let est = if xe >= 0.0 {
                    oracle_upper(r, m, s, seed).map(|o| (1.0 - o.p_hat, o.std_err))
                } else {
                    match &negs[i] {
                        Some(neg) => oracle_upper(r, neg, -s, seed).map(|o| (o.p_hat, o.std_err)),
                        None => Err(Error::Degenerate("cannot negate weights".into())),
                    }
                };
                note(&est, "oracle", &mut errors);
                (nan_or(&est, |e| e.0), nan_or(&est, |e| e.1))
            } else {
                (f64::NAN, f64::NAN)
            };
            vec![
                Cell::U(r.windows[i] as u64),
                Cell::F(x),
                Cell::F(xe),
                Cell::F(nan_or(&approx, |a| *a)),
                Cell::F(phi),
                Cell::F(diff),
                Cell::F(bound),
                Cell::F(diff / bound),
                Cell::F(ocdf),
                Cell::F(ose),
                Cell::F((ocdf - phi) / bound),
                Cell::F((xe.abs() + 1.0) / m.scale()),
                Cell::S(tilt::regime(m, xe, &r.opts).as_str().into()),
                status(&errors),
            ]
        })
        .collect();
    let table = Table {
        header: vec![
            "n", "x", "x_eff", "approx_cdf", "normal_cdf", "diff", "bound_scale", "scaled_diff", "oracle_cdf",
            "oracle_std_err", "oracle_scaled_diff", "error_scale", "regime", "status",
        ],
        rows,
    };
    let mut per_n = BTreeMap::new();
    let scaled = table.column("oracle_scaled_diff");
    let approx_scaled = table.column("scaled_diff");
    for (k, (i, _)) in grid_pairs(r).into_iter().enumerate() {
        let entry = per_n.entry(r.windows[i].to_string()).or_insert((0.0f64, 0.0f64));
        if scaled[k].is_finite() {
            entry.0 = entry.0.max(scaled[k].abs());
        }
        if approx_scaled[k].is_finite() {
            entry.1 = entry.1.max(approx_scaled[k].abs());
        }
    }
    let per_n: BTreeMap<String, Value> = per_n
        .into_iter()
        .map(|(k, (o, a))| (k, json!({"max_oracle_scaled_diff": o, "max_approx_scaled_diff": a})))
        .collect();
    RunOutput {
        table,
        report: json!({ "per_window": per_n }),
        extra: vec![],
    }
}

fn risk_cmd(r: &Resolved, ms: &[PartialSumModel], with_es: bool) -> RunOutput {
    let pairs: Vec<(usize, f64)> = (0..ms.len())
        .flat_map(|i| r.config.grid.alpha.iter().map(move |&a| (i, a)))
        .collect();
    let rows: Vec<Vec<Cell>> = pairs
        .into_par_iter()
        .map(|(i, alpha)| {
            let m = &ms[i];
            let res = if with_es {
                risk::expected_shortfall(m, alpha, &r.opts)
            } else {
                risk::quantile(m, alpha, &r.opts)
            };
            let mut errors = Vec::new();
            note(&res, "", &mut errors);
            vec![
                Cell::U(r.windows[i] as u64),
                Cell::F(alpha),
                Cell::F(nan_or(&res, |v| v.x_alpha)),
                Cell::F(nan_or(&res, |v| v.q)),
                Cell::F(nan_or(&res, |v| v.es.unwrap_or(f64::NAN))),
                Cell::F(nan_or(&res, |v| v.quadrature_error)),
                Cell::F(nan_or(&res, |v| v.error_scale)),
                Cell::S(res.as_ref().map(|v| v.regime.as_str()).unwrap_or("out_of_range").into()),
                status(&errors),
            ]
        })
        .collect();
    let table = Table {
        header: vec!["n", "alpha", "x_alpha", "Q", "es", "quadrature_error", "error_scale", "regime", "status"],
        rows,
    };
    RunOutput {
        table,
        report: json!({}),
        extra: vec![],
    }
}

fn truncation_cmd(r: &Resolved, ms: &[PartialSumModel]) -> RunOutput {
    let mut triples = Vec::new();
    for (i, _) in ms.iter().enumerate() {
        for &m in &r.config.truncation.m {
            for &x in &r.xs {
                triples.push((i, m, x));
            }
        }
    }
    let rows: Vec<Vec<Cell>> = triples
        .into_par_iter()
        .map(|(i, mcut, x)| {
            let full = &ms[i];
            let mut errors = Vec::new();
            let res = r
                .field
                .truncated_weights(&r.innovation, r.windows[i], mcut)
                .and_then(|t| risk::truncation_ratio(full, &t, x, &r.opts));
            note(&res, "", &mut errors);
            vec![
                Cell::U(r.windows[i] as u64),
                Cell::U(mcut as u64),
                Cell::F(x),
                Cell::F(nan_or(&res, |c| c.ratio)),
                Cell::F(nan_or(&res, |c| c.dominant)),
                Cell::F(nan_or(&res, |c| c.error_scale)),
                Cell::S(tilt::regime(full, x, &r.opts).as_str().into()),
                status(&errors),
            ]
        })
        .collect();
    RunOutput {
        table: Table {
            header: vec!["n", "m", "x", "ratio", "dominant", "error_scale", "regime", "status"],
            rows,
        },
        report: json!({}),
        extra: vec![],
    }
}

fn join_point(z: &[f64]) -> String {
    z.iter().map(|v| fmt_f(*v)).collect::<Vec<_>>().join(" ")
}

fn regress_cmd(r: &Resolved) -> Result<RunOutput, Error> {
    let spec = &r.config.regress;
    let n = r.windows[0];
    let design = RegressionDesign::new(r.field.clone(), r.innovation.clone(), n, spec.kernel, spec.bandwidth)?;
    let x = spec.x;
    let rows: Vec<Vec<Cell>> = spec
        .z
        .par_iter()
        .map(|z| {
            let res = regress::regression_tail(&design, z, x, &r.opts);
            let mut errors = Vec::new();
            note(&res, "", &mut errors);
            let normal2 = 2.0 * normal::sf(x);
            vec![
                Cell::S(join_point(z)),
                Cell::F(x),
                Cell::F(nan_or(&res, |t| t.b_n)),
                Cell::F(nan_or(&res, |t| t.h_n)),
                Cell::F(nan_or(&res, |t| t.m_n)),
                Cell::F(nan_or(&res, |t| t.upper.value)),
                Cell::F(nan_or(&res, |t| t.lower.value)),
                Cell::F(nan_or(&res, |t| t.two_sided)),
                Cell::F(normal2),
                Cell::B(res.as_ref().map(|t| t.low_variance).unwrap_or(true)),
                Cell::F(nan_or(&res, |t| t.upper.error_scale)),
                Cell::S(res.as_ref().map(|t| t.upper.regime.as_str()).unwrap_or("out_of_range").into()),
                status(&errors),
            ]
        })
        .collect();
    let mut extra = Vec::new();
    if spec.simulate {
        let g = RegressionFunction::Sinusoid { amplitude: spec.amplitude };
        let sim = regress::simulate(&design, g, &spec.z, r.config.oracle.seed)?;
        let mut csv = String::from("z,g,mean,estimate,noise,sd\n");
        for p in sim {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                join_point(&p.z),
                fmt_f(p.g),
                fmt_f(p.mean),
                fmt_f(p.estimate),
                fmt_f(p.noise),
                fmt_f(p.sd)
            );
        }
        extra.push(("simulation.csv".to_string(), csv));
    }
    Ok(RunOutput {
        table: Table {
            header: vec![
                "z", "x", "b_n", "h_n", "m_n", "upper", "lower", "two_sided", "normal_two_sided", "low_variance",
                "error_scale", "regime", "status",
            ],
            rows,
        },
        report: json!({ "window": n, "kernel": spec.kernel.as_str(), "bandwidth": spec.bandwidth }),
        extra,
    })
}

fn cumulants_cmd(r: &Resolved, ms: &[PartialSumModel]) -> Result<RunOutput, Error> {
    let order = r.config.cumulants.order;
    let m = &ms[0];
    let inv = if order >= 2 { Some(inversion_coefficients(m, order)?) } else { None };
    let lam = lambda_coefficients(m, order)?;
    let inn = &r.innovation;
    let rows = (1..=order)
        .map(|k| {
            vec![
                Cell::U(k as u64),
                Cell::F(if k <= MAX_CUMULANT_ORDER { inn.cumulant(k).unwrap_or(f64::NAN) } else { f64::NAN }),
                Cell::F(inn.raw_moment(k).unwrap_or(f64::NAN)),
                Cell::F(m.aggregate_cumulant(k).unwrap_or(f64::NAN)),
                Cell::F(inv.as_ref().map_or(f64::NAN, |s| s.coeff(k))),
                Cell::F(lam.coeff(k - 1)),
            ]
        })
        .collect();
    let cramer = verify_cramer(inn, 128)?;
    let moment = verify_moment_condition(inn, 8)?;
    Ok(RunOutput {
        table: Table {
            header: vec!["k", "innovation_cumulant", "raw_moment", "aggregate_cumulant", "inversion_coeff", "lambda_coeff"],
            rows,
        },
        report: json!({
            "window": r.windows[0],
            "b_n": m.b_n(),
            "h_n": m.h_n(),
            "m_n": m.m_n(),
            "cramer": cramer,
            "moment_condition_order_8": moment,
        }),
        extra: vec![],
    })
}

fn scaling_cmd(r: &Resolved) -> Result<RunOutput, Error> {
    let s2 = r.innovation.variance();
    let rows: Vec<Vec<Cell>> = r
        .windows
        .par_iter()
        .map(|&n| {
            let ss = r.field.sum_sq_weights(n);
            vec![
                Cell::U(n as u64),
                Cell::F(ss),
                Cell::F(s2 * ss),
                Cell::F((n as f64).ln()),
                Cell::F((s2 * ss).ln()),
            ]
        })
        .collect();
    let slope = crate::field::scaling_exponent(&r.field, &r.windows)?;
    let d = r.field.dim() as f64;
    let target = match r.field.family() {
        Family::LongMemory { alpha, .. } => 3.0 * d - 2.0 * alpha,
        // a_k ~ c k^{β−1}, so α = 1 − β
        Family::Farima { beta, .. } => 3.0 - 2.0 * (1.0 - beta),
        _ => d,
    };
    Ok(RunOutput {
        table: Table {
            header: vec!["n", "sum_sq_weights", "b_n", "log_n", "log_b_n"],
            rows,
        },
        report: json!({ "slope": slope, "target": target, "abs_error": (slope - target).abs() }),
        extra: vec![],
    })
}

/// Runs a validated configuration and returns the artifacts.
pub fn execute(command: Command, r: &Resolved) -> Result<RunOutput, Error> {
    let ms = match command {
        Command::Regress | Command::Scaling => Vec::new(),
        _ => models(r)?,
    };
    let mut out = match command {
        Command::Tail => tail_cmd(r, &ms),
        Command::CdfDiff => cdf_diff_cmd(r, &ms),
        Command::Quantile => risk_cmd(r, &ms, false),
        Command::Es => risk_cmd(r, &ms, true),
        Command::CompareTruncation => truncation_cmd(r, &ms),
        Command::Regress => regress_cmd(r)?,
        Command::Verify => verify_cmd(r, &ms),
        Command::Cumulants => cumulants_cmd(r, &ms)?,
        Command::Scaling => scaling_cmd(r)?,
    };
    if r.config.output.weights {
        let m = match ms.first() {
            Some(m) => m.clone(),
            None => r.field.window_weights(&r.innovation, r.windows[0])?,
        };
        let mut buf = Vec::new();
        m.write_weights_csv(&mut buf).map_err(|e| Error::Numerical(e.to_string()))?;
        out.extra.push(("weights.csv".into(), String::from_utf8(buf).expect("ascii")));
    }
    let windows: Vec<Value> = ms
        .iter()
        .map(|m| {
            json!({
                "n": m.window(), "b_n": m.b_n(), "m_n": m.m_n(), "h_n": m.h_n(), "c_n": m.c_n(),
                "scale": m.scale(), "truncation": m.truncation(), "support_size": m.support_size(),
            })
        })
        .collect();
    let summary = json!({
        "subcommand": command.as_str(),
        "rows": out.table.rows.len(),
        "error_rows": out.table.status_errors(),
        "models": windows,
        "summary": out.report,
    });
    out.report = summary;
    Ok(out)
}

fn write_outputs(dir: &Path, r: &Resolved, out: &RunOutput) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.csv"), out.table.to_csv())?;
    let config = serde_json::to_string_pretty(&r.config).expect("serializable config");
    fs::write(dir.join("resolved-config.json"), config + "\n")?;
    let report = serde_json::to_string_pretty(&out.report).expect("serializable report");
    fs::write(dir.join("report.json"), report + "\n")?;
    for (name, body) in &out.extra {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}

/// Parses arguments, runs, and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let text = match fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: cannot read config: {e}", cli.config.display());
            return EXIT_CONFIG;
        }
    };
    let resolved = match resolve(&text, cli.seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}", e.render(&cli.config));
            return EXIT_CONFIG;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start worker pool: {e}");
            return EXIT_RUNTIME;
        }
    };
    let out = match pool.install(|| execute(cli.command, &resolved)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{}: {e}", cli.command.as_str());
            return EXIT_RUNTIME;
        }
    };
    if let Err(e) = write_outputs(&cli.out, &resolved, &out) {
        eprintln!("{}: {e}", cli.out.display());
        return EXIT_RUNTIME;
    }
    0
}
