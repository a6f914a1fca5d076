//! Configuration, experiment orchestration and report files.
//!
//! A run writes `<experiment>.csv`, `summary.json` and, for `rdelta1d` with
//! `dump_points > 0`, `intervals.jsonl` into the configured output directory.

mod config;
mod experiments;
mod report;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::field::GridError;

pub use config::{
    parse_config, ConfigError, ExperimentConfig, ExperimentKind, FieldChoice, KeyError, OperatorChoice,
    Pairing, RawConfig,
};
pub use experiments::{
    build_force, cone_study, dispersion_run, force_1d, grid_stats, maximal_fields, maximal_laws,
    maximal_operator, maximal_probes, occupation_scan, phase_box, qdelta_study, static_gradient_error,
    study_1d_config, ConeProbe, ConeStudy, GridStats, MaximalLaws, OccupationRow, QDeltaStudy,
    GRADIENT_STEP,
};
pub use report::{format_sig, Cell, Check, Report, Summary, Table, SIGNIFICANT_DIGITS};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("grid file {path}: {source}")]
    Grid {
        path: String,
        #[source]
        source: GridError,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// 2 for configuration and input-file problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Grid {
                source: GridError::NonFinite(_),
                ..
            } => 3,
            Self::Grid { .. } => 2,
            Self::Numerical(_) => 3,
            Self::Output { .. } => 1,
        }
    }
}

/// Runs one experiment in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    experiments::dispatch(cfg)
}

/// Runs one experiment and writes its files under `dir` (the configured output if `None`).
pub fn run_to_dir(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<(Report, Vec<PathBuf>), HarnessError> {
    let report = run_experiment(cfg)?;
    let dir = dir.map_or_else(|| PathBuf::from(&cfg.output), Path::to_path_buf);
    let paths = report.write(&dir).map_err(|source| HarnessError::Output {
        path: dir.display().to_string(),
        source,
    })?;
    Ok((report, paths))
}
