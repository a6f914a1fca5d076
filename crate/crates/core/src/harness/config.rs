//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comment to end of line
//! experiment = qdelta3d
//! deltas = 1e-2, 1e-4, 1e-6      # comma-separated list
//! output = "runs/q"              # quotes are optional
//! ```
//!
//! Keys are case-sensitive, unknown keys are rejected and every key may appear
//! at most once.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::flow1d::RateMode;
use crate::models::RoughFieldSpec;
use crate::wave::ForceMode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid config keys [{}]: {}", keys(.0), messages(.0))]
    Invalid(Vec<KeyError>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyError {
    pub key: String,
    pub message: String,
}

fn keys(errs: &[KeyError]) -> String {
    errs.iter().map(|e| e.key.as_str()).collect::<Vec<_>>().join(", ")
}

fn messages(errs: &[KeyError]) -> String {
    errs.iter()
        .map(|e| format!("{}: {}", e.key, e.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl ConfigError {
    /// Offending keys, for structured reporting.
    pub fn keys(&self) -> Vec<String> {
        match self {
            Self::Invalid(errs) => errs.iter().map(|e| e.key.clone()).collect(),
            _ => Vec::new(),
        }
    }
}

/// Parsed but untyped entries, each a list of one or more items.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, Vec<String>>,
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

pub fn parse_config(text: &str) -> Result<RawConfig, ConfigError> {
    let mut entries = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |message: String| ConfigError::Syntax {
            line: line_no,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| syntax(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(syntax(format!("invalid key `{key}`")));
        }
        let mut items = Vec::new();
        for item in value.split(',') {
            let item = item.trim();
            let item = match item.strip_prefix('"') {
                Some(rest) => rest
                    .strip_suffix('"')
                    .ok_or_else(|| syntax(format!("unterminated string in `{key}`")))?,
                None => item,
            };
            if item.is_empty() {
                return Err(syntax(format!("empty value in `{key}`")));
            }
            items.push(item.to_string());
        }
        if entries.insert(key.to_string(), items).is_some() {
            return Err(syntax(format!("duplicate key `{key}`")));
        }
    }
    Ok(RawConfig { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Qdelta3d,
    Rdelta1d,
    Dispersion,
    MaximalScan,
    ConeVerify,
    FieldCheck,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Qdelta3d => "qdelta3d",
            Self::Rdelta1d => "rdelta1d",
            Self::Dispersion => "dispersion",
            Self::MaximalScan => "maximal_scan",
            Self::ConeVerify => "cone_verify",
            Self::FieldCheck => "field_check",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Self::Qdelta3d,
            Self::Rdelta1d,
            Self::Dispersion,
            Self::MaximalScan,
            Self::ConeVerify,
            Self::FieldCheck,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| {
            format!("unknown experiment `{s}` (qdelta3d, rdelta1d, dispersion, maximal_scan, cone_verify, field_check)")
        })
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Source data for the 3-D experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldChoice {
    Zero,
    Smooth,
    Rough,
    Ball,
    Gaussian,
    Grid,
}

impl FromStr for FieldChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(Self::Zero),
            "smooth" => Ok(Self::Smooth),
            "rough" => Ok(Self::Rough),
            "ball" => Ok(Self::Ball),
            "gaussian" => Ok(Self::Gaussian),
            "grid" => Ok(Self::Grid),
            other => Err(format!("unknown field `{other}` (zero, smooth, rough, ball, gaussian, grid)")),
        }
    }
}

/// How the perturbed member of each pair is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// Same force, initial point shifted by `δ`.
    Shift,
    /// Same initial point, force averaged over spheres of radius `δ`.
    Mollified,
}

impl FromStr for Pairing {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shift" => Ok(Self::Shift),
            "mollified" => Ok(Self::Mollified),
            other => Err(format!("unknown pairing `{other}` (shift, mollified)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorChoice {
    Spherical,
    Shell,
    Pair,
}

impl FromStr for OperatorChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spherical" => Ok(Self::Spherical),
            "shell" => Ok(Self::Shell),
            "pair" => Ok(Self::Pair),
            other => Err(format!("unknown operator `{other}` (spherical, shell, pair)")),
        }
    }
}

/// Fully resolved configuration; every default is filled in and echoed in reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub output: String,
    pub t_final: f64,
    pub dt: f64,
    pub n_samples: usize,
    pub quad_order: usize,
    /// Per-axis `[lo, hi]` of the position box.
    pub domain_x: [f64; 2],
    /// Per-axis `[lo, hi]` of the velocity box.
    pub domain_v: [f64; 2],
    pub deltas: Vec<f64>,
    pub k_grid: Vec<f64>,
    pub field: FieldChoice,
    pub grid_paths: Vec<String>,
    pub force_mode: ForceMode,
    /// `0` for `ν ≡ 1`, otherwise the scale of a Lorentzian `ν`.
    pub nu_scale: f64,
    pub pairing: Pairing,
    pub rough: RoughFieldSpec,
    pub gamma: f64,
    pub n_speeds: usize,
    pub sawtooth_amplitude: f64,
    pub rate_constant: f64,
    pub rate_mode: RateMode,
    pub dump_points: usize,
    pub occupation_eta: f64,
    pub s_grid: Vec<f64>,
    pub ball_radius: f64,
    pub gaussian_width: f64,
    pub operator: OperatorChoice,
    pub p: f64,
    pub stride: usize,
    pub widths: Vec<f64>,
    pub grid_half: f64,
    pub grid_spacing: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub radius_ratio: f64,
    pub refine: bool,
    pub shell_eps: Vec<f64>,
    pub eta_fractions: Vec<f64>,
    pub radial_nodes: usize,
    pub pair_radius: f64,
    pub pair_delta: f64,
    pub n_trajectories: usize,
    pub volume_samples: usize,
    pub cone_tol: f64,
}

const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "seed",
    "output",
    "t_final",
    "dt",
    "n_samples",
    "quad_order",
    "domain_x",
    "domain_v",
    "deltas",
    "k_grid",
    "field",
    "grid_paths",
    "force_mode",
    "nu_scale",
    "pairing",
    "rough_half_width",
    "rough_density",
    "rough_cap",
    "rough_amp_min",
    "rough_amp_max",
    "rough_tail",
    "rough_seed",
    "gamma",
    "n_speeds",
    "sawtooth_amplitude",
    "rate_constant",
    "rate_mode",
    "dump_points",
    "occupation_eta",
    "s_grid",
    "ball_radius",
    "gaussian_width",
    "operator",
    "p",
    "stride",
    "widths",
    "grid_half",
    "grid_spacing",
    "r_min",
    "r_max",
    "radius_ratio",
    "refine",
    "shell_eps",
    "eta_fractions",
    "radial_nodes",
    "pair_radius",
    "pair_delta",
    "n_trajectories",
    "volume_samples",
    "cone_tol",
];

struct Reader<'a> {
    raw: &'a RawConfig,
    errors: Vec<KeyError>,
}

impl Reader<'_> {
    fn fail(&mut self, key: &str, message: String) {
        self.errors.push(KeyError {
            key: key.to_string(),
            message,
        });
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Vec<T>
    where
        T::Err: fmt::Display,
    {
        let Some(items) = self.raw.entries.get(key) else {
            return default;
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item.parse::<T>() {
                Ok(v) => out.push(v),
                Err(e) => {
                    self.fail(key, format!("cannot parse `{item}`: {e}"));
                    return default;
                }
            }
        }
        out
    }

    fn one<T: FromStr + Clone>(&mut self, key: &str, default: T) -> T
    where
        T::Err: fmt::Display,
    {
        if let Some(items) = self.raw.entries.get(key) {
            if items.len() != 1 {
                self.fail(key, format!("expected a single value, got {}", items.len()));
                return default;
            }
        }
        self.list(key, vec![default.clone()]).pop().unwrap_or(default)
    }

    fn range(&mut self, key: &str, default: [f64; 2]) -> [f64; 2] {
        let v = self.list(key, default.to_vec());
        if v.len() != 2 {
            self.fail(key, format!("expected `lo, hi`, got {} values", v.len()));
            return default;
        }
        if !(v[0] < v[1]) {
            self.fail(key, format!("lower bound {} must be below upper bound {}", v[0], v[1]));
        }
        [v[0], v[1]]
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(&parse_config(text)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let mut r = Reader {
            raw,
            errors: Vec::new(),
        };
        for key in raw.entries.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                r.fail(key, "unknown key".to_string());
            }
        }
        let experiment = match raw.entries.get("experiment") {
            None => {
                r.fail("experiment", "missing required key".to_string());
                ExperimentKind::Qdelta3d
            }
            Some(_) => r.one("experiment", ExperimentKind::Qdelta3d),
        };
        let one_d = experiment == ExperimentKind::Rdelta1d;
        let rough_default = RoughFieldSpec::default();
        let cfg = Self {
            experiment,
            seed: r.one("seed", 1),
            output: r.one("output", format!("roughflow-{}", experiment.name())),
            t_final: r.one("t_final", 1.0),
            dt: r.one("dt", if one_d { 2.5e-4 } else { 1e-3 }),
            n_samples: r.one("n_samples", 1000),
            quad_order: r.one(
                "quad_order",
                if experiment == ExperimentKind::Dispersion { 600 } else { 30 },
            ),
            domain_x: r.range("domain_x", [-1.0, 1.0]),
            domain_v: r.range("domain_v", if one_d { [-0.5, 1.5] } else { [-1.0, 1.0] }),
            deltas: r.list(
                "deltas",
                (2..=if one_d { 10 } else { 8 }).map(|e| 10f64.powi(-e)).collect(),
            ),
            k_grid: r.list("k_grid", (1..=6).map(|e| 2f64.powi(e)).collect()),
            field: r.one(
                "field",
                match experiment {
                    ExperimentKind::Dispersion => FieldChoice::Ball,
                    ExperimentKind::MaximalScan => FieldChoice::Gaussian,
                    ExperimentKind::FieldCheck => FieldChoice::Grid,
                    _ => FieldChoice::Smooth,
                },
            ),
            grid_paths: r.list("grid_paths", Vec::new()),
            force_mode: r.one("force_mode", ForceMode::Electric),
            nu_scale: r.one("nu_scale", 0.0),
            pairing: r.one("pairing", Pairing::Shift),
            rough: RoughFieldSpec {
                half_width: r.one("rough_half_width", rough_default.half_width),
                density: r.one("rough_density", rough_default.density),
                cap: r.one("rough_cap", rough_default.cap),
                amp_min: r.one("rough_amp_min", rough_default.amp_min),
                amp_max: r.one("rough_amp_max", rough_default.amp_max),
                tail: r.one("rough_tail", rough_default.tail),
                seed: r.one("rough_seed", rough_default.seed),
            },
            gamma: r.one("gamma", 2.5),
            n_speeds: r.one("n_speeds", 64),
            sawtooth_amplitude: r.one("sawtooth_amplitude", 2.0),
            rate_constant: r.one("rate_constant", 1.0),
            rate_mode: r.one("rate_mode", RateMode::Cumulative),
            dump_points: r.one("dump_points", 0),
            occupation_eta: r.one("occupation_eta", 0.02),
            s_grid: r.list("s_grid", vec![4.0, 8.0, 16.0, 32.0]),
            ball_radius: r.one("ball_radius", 1.0),
            gaussian_width: r.one("gaussian_width", 0.8),
            operator: r.one("operator", OperatorChoice::Spherical),
            p: r.one("p", 2.0),
            stride: r.one("stride", 2),
            widths: r.list("widths", vec![0.8, 0.4, 0.2]),
            grid_half: r.one("grid_half", 4.0),
            grid_spacing: r.one("grid_spacing", 0.25),
            r_min: r.one("r_min", 0.25),
            r_max: r.one("r_max", 3.0),
            radius_ratio: r.one("radius_ratio", 1.1),
            refine: r.one("refine", false),
            shell_eps: r.list("shell_eps", vec![0.25, 0.5, 1.0, 2.0]),
            eta_fractions: r.list("eta_fractions", vec![0.25, 0.5, 1.0]),
            radial_nodes: r.one("radial_nodes", 8),
            pair_radius: r.one("pair_radius", 1.0),
            pair_delta: r.one("pair_delta", 0.1),
            n_trajectories: r.one("n_trajectories", 10),
            volume_samples: r.one("volume_samples", 10_000),
            cone_tol: r.one("cone_tol", 1e-12),
        };
        cfg.validate(&mut r.errors);
        if r.errors.is_empty() {
            Ok(cfg)
        } else {
            r.errors.sort_by(|a, b| a.key.cmp(&b.key));
            r.errors.dedup_by(|a, b| a.key == b.key && a.message == b.message);
            Err(ConfigError::Invalid(r.errors))
        }
    }

    fn validate(&self, errors: &mut Vec<KeyError>) {
        let mut fail = |key: &str, message: &str| {
            errors.push(KeyError {
                key: key.to_string(),
                message: message.to_string(),
            })
        };
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.dt) {
            fail("dt", "must be positive");
        }
        if !positive(self.t_final) {
            fail("t_final", "must be positive");
        }
        if self.n_samples == 0 {
            fail("n_samples", "must be at least 1");
        }
        if !(2..=crate::sphere::MAX_ORDER).contains(&self.quad_order) {
            fail("quad_order", "unsupported sphere rule order");
        }
        if self.deltas.is_empty() || self.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            fail("deltas", "need at least one value, each in (0, 1)");
        }
        if self.k_grid.is_empty() || self.k_grid.iter().any(|k| !(*k > 0.0)) {
            fail("k_grid", "need at least one positive value");
        }
        if self.s_grid.is_empty()
            || self.s_grid.iter().any(|s| !positive(*s))
            || self.s_grid.windows(2).any(|w| w[1] <= w[0])
        {
            fail("s_grid", "need increasing positive values");
        }
        if self.widths.is_empty() || self.widths.iter().any(|w| !positive(*w)) {
            fail("widths", "need positive values");
        }
        if self.shell_eps.is_empty() || self.shell_eps.iter().any(|w| !positive(*w)) {
            fail("shell_eps", "need positive values");
        }
        if self.eta_fractions.is_empty() || self.eta_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            fail("eta_fractions", "need values in (0, 1]");
        }
        if !(self.p >= 1.0) {
            fail("p", "must be at least 1");
        }
        if self.stride == 0 {
            fail("stride", "must be at least 1");
        }
        if !(self.radius_ratio > 1.0) {
            fail("radius_ratio", "must exceed 1");
        }
        if !(positive(self.r_min) && self.r_max >= self.r_min) {
            fail("r_min", "need 0 < r_min <= r_max");
        }
        if !positive(self.grid_spacing) || !positive(self.grid_half) {
            fail("grid_spacing", "grid_half and grid_spacing must be positive");
        }
        if self.nu_scale < 0.0 {
            fail("nu_scale", "must be non-negative");
        }
        if !(self.gamma > 2.0) {
            fail("gamma", "must exceed 2");
        }
        if self.n_speeds == 0 {
            fail("n_speeds", "must be at least 1");
        }
        if !positive(self.occupation_eta) {
            fail("occupation_eta", "must be positive");
        }
        if self.radial_nodes == 0 {
            fail("radial_nodes", "must be at least 1");
        }
        if self.n_trajectories == 0 {
            fail("n_trajectories", "must be at least 1");
        }
        if !positive(self.cone_tol) {
            fail("cone_tol", "must be positive");
        }
        let needs_grid = self.experiment == ExperimentKind::FieldCheck
            || (matches!(self.experiment, ExperimentKind::Dispersion | ExperimentKind::MaximalScan)
                && self.field == FieldChoice::Grid);
        if needs_grid && self.grid_paths.is_empty() {
            fail("grid_paths", "this experiment needs at least one grid file");
        }
        let field_ok = match self.experiment {
            ExperimentKind::Qdelta3d | ExperimentKind::ConeVerify => {
                matches!(self.field, FieldChoice::Zero | FieldChoice::Smooth | FieldChoice::Rough)
            }
            ExperimentKind::Dispersion | ExperimentKind::MaximalScan => {
                matches!(self.field, FieldChoice::Ball | FieldChoice::Gaussian | FieldChoice::Grid)
            }
            ExperimentKind::FieldCheck => self.field == FieldChoice::Grid,
            ExperimentKind::Rdelta1d => true,
        };
        if !field_ok {
            fail("field", "not available for this experiment");
        }
    }
}
