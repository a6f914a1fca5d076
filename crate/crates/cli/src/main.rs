use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use roughflow_core::fit::{fit_scaling, FitModel};
use roughflow_core::harness::{grid_stats, run_to_dir, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "roughflow", version, about = "Kinetic-flow stability experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output` in the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Least-squares scaling fit of two CSV columns.
    Fit {
        csv: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Psi)]
        mode: Mode,
        /// Abscissa column (default `delta`, else the first column).
        #[arg(long)]
        x: Option<String>,
        /// Ordinate column (default `psi_estimate`, `R` or `norm`, else the second column).
        #[arg(long)]
        y: Option<String>,
        #[arg(long, value_enum)]
        x_transform: Option<Transform>,
    },
    /// Load grid fields and report their dimensions and norms.
    FieldCheck {
        #[arg(required = true)]
        grids: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Psi,
    Power,
    Linear,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Transform {
    /// `x ↦ −ln x`
    Neglog,
    Log,
    None,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Self {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn config_error(message: String) -> Failure {
    Failure { code: 2, message }
}

fn run(config: &Path, output: Option<&Path>) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(config).map_err(HarnessError::from)?;
    let (report, paths) = run_to_dir(&cfg, output)?;
    for c in &report.summary.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for w in &report.summary.warnings {
        eprintln!("warning: {w}");
    }
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn fit(path: &Path, mode: Mode, x: Option<String>, y: Option<String>, transform: Option<Transform>) -> Result<(), Failure> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| config_error(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let x_col = match &x {
        Some(name) => find(name).ok_or_else(|| config_error(format!("no column `{name}`")))?,
        None => find("delta").unwrap_or(0),
    };
    let y_col = match &y {
        Some(name) => find(name).ok_or_else(|| config_error(format!("no column `{name}`")))?,
        None => ["psi_estimate", "R", "norm"]
            .iter()
            .find_map(|n| find(n))
            .unwrap_or(1),
    };
    let transform = transform.unwrap_or(if header[x_col] == "delta" {
        Transform::Neglog
    } else {
        Transform::None
    });
    let mut points: Vec<(f64, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| config_error(e.to_string()))?;
        let (Some(xs), Some(ys)) = (record.get(x_col), record.get(y_col)) else {
            continue;
        };
        let (Ok(xv), Ok(yv)) = (xs.parse::<f64>(), ys.parse::<f64>()) else {
            continue;
        };
        let xv = match transform {
            Transform::Neglog => -xv.ln(),
            Transform::Log => xv.ln(),
            Transform::None => xv,
        };
        // Tables with several rows per abscissa (one per K) keep the first.
        if !points.iter().any(|p| p.0 == xv) {
            points.push((xv, yv));
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let model = match mode {
        Mode::Psi => FitModel::Psi,
        Mode::Power => FitModel::Power,
        Mode::Linear => FitModel::Linear,
    };
    let fit = fit_scaling(&points, model).map_err(|e| Failure {
        code: 3,
        message: format!("fit failed: {e}"),
    })?;
    println!("{}", serde_json::to_string_pretty(&fit).expect("fit serializes"));
    Ok(())
}

fn field_check(grids: &[PathBuf]) -> Result<(), Failure> {
    let stats = grids
        .iter()
        .map(|p| grid_stats(&p.display().to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, output } => run(&config, output.as_deref()),
        Command::Fit {
            csv,
            mode,
            x,
            y,
            x_transform,
        } => fit(&csv, mode, x, y, x_transform),
        Command::FieldCheck { grids } => field_check(&grids),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
