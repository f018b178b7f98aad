//! Experiment harness around the `kernel-npg` core: TOML configs, the
//! experiment drivers, deterministic CSV/JSON output, and SVG plots.

pub mod config;
pub mod experiments;
pub mod output;
pub mod plot;
pub mod svg;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind, Resolved};
pub use experiments::Outcome;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: u64, msg: String },
}

impl HarnessError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for bad input, 3 for numerical failure, 1 for IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Parse { .. } => 2,
            Self::Numerical(_) => 3,
            Self::Io { .. } => 1,
        }
    }
}

/// Runs the experiment named by `r.kind`. The resolved config is always
/// part of the output.
pub fn run(cfg: &ExperimentConfig, r: &Resolved) -> Result<Outcome, HarnessError> {
    let num = |e: experiments::NumericalError| HarnessError::Numerical(e.to_string());
    let mut out = match r.kind {
        ExperimentKind::EvalRate => experiments::eval_rate(r).map_err(num)?,
        ExperimentKind::NpgTrain => experiments::train(r),
        ExperimentKind::ScheduleSweep => experiments::schedule_sweep(r),
        ExperimentKind::Diagnostics => experiments::diagnostics(r).map_err(num)?,
    };
    let mut resolved = cfg.clone();
    resolved.seeds = r.seeds.clone();
    resolved.out_dir = r.out_dir.clone();
    out.artifacts.add("config.resolved.toml", resolved.to_toml().into_bytes());
    Ok(out)
}

/// Writes the artifacts plus a separate timing file.
pub fn write_outcome(out: &Outcome, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files = out.artifacts.write_to(dir).map_err(|e| HarnessError::io(dir, e))?;
    let timing = serde_json::json!({ "wall_time_seconds": out.wall_time });
    let path = dir.join("timing.json");
    std::fs::write(&path, format!("{timing:#}\n")).map_err(|e| HarnessError::io(&path, e))?;
    files.push(path);
    Ok(files)
}
