//! Experiment configuration, the four command runners and result files.

mod commands;
mod config;
pub mod stats;
mod sweep;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};

pub use commands::{couple, meanfield, solve_reference, train, CoupleSummary, DiagnosticsReport};
pub use config::{
    CoupleSpec, DataSpec, ExperimentConfig, MeanFieldSpec, Metric, Solver, SweepSpec, TrainSpec,
};
pub use sweep::{evaluate_point, experiment_id, run_sweep, ResultRow, SlopeRow, SweepSummary, RESULTS_CSV_HEADER};

/// Files that carry wall-clock measurements and so differ between runs.
pub const TIMING_FILES: [&str; 2] = ["timings.json", "journal.csv"];

/// What a command produced.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub out: PathBuf,
    pub files: Vec<PathBuf>,
    /// Non-fatal conditions for the caller to report.
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    config_hash: String,
    seed: u64,
}

pub(crate) struct Run {
    dir: PathBuf,
    clock: Instant,
    phases: BTreeMap<String, f64>,
    outcome: Outcome,
}

impl Run {
    pub(crate) fn start(cfg: &ExperimentConfig, command: &str) -> Result<Run> {
        let dir = cfg.out.clone();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut run = Run {
            dir: dir.clone(),
            clock: Instant::now(),
            phases: BTreeMap::new(),
            outcome: Outcome {
                out: dir,
                ..Outcome::default()
            },
        };
        let manifest = Manifest {
            tool: "deepmf",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: cfg.hash(),
            seed: cfg.seed,
        };
        run.json("manifest.json", &manifest)?;
        Ok(run)
    }

    pub(crate) fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub(crate) fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        write_json(&path, value)?;
        self.outcome.files.push(path);
        Ok(())
    }

    pub(crate) fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        self.outcome.files.push(path);
        Ok(())
    }

    pub(crate) fn record(&mut self, path: PathBuf) {
        self.outcome.files.push(path);
    }

    pub(crate) fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let v = f()?;
        *self.phases.entry(phase.to_string()).or_default() += t0.elapsed().as_secs_f64();
        Ok(v)
    }

    pub(crate) fn warn(&mut self, msg: impl Into<String>) {
        self.outcome.warnings.push(msg.into());
    }

    pub(crate) fn finish(mut self, extra: Option<BTreeMap<String, f64>>) -> Result<Outcome> {
        let mut t = self.phases.clone();
        if let Some(extra) = extra {
            t.extend(extra);
        }
        t.insert("total".into(), self.clock.elapsed().as_secs_f64());
        self.json("timings.json", &t)?;
        Ok(self.outcome)
    }
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
