//! Run reports: every subcommand writes exactly one structured text file
//! with the configuration echo, seed, per-stage timings and metric
//! summaries.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use tomo_core::io::RunConfig;

#[derive(Debug)]
pub struct RunReport {
    pub subcommand: String,
    pub seed: u64,
    pub config_echo: String,
    /// Stage label and elapsed milliseconds.
    pub timings: Vec<(String, u128)>,
    pub metrics: Vec<(String, String)>,
    pub outputs: Vec<PathBuf>,
}

impl RunReport {
    pub fn new(subcommand: &str, config: &RunConfig) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            seed: config.seed,
            config_echo: format!("{config:?}"),
            timings: Vec::new(),
            metrics: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Run a stage, recording its wall-clock time under `label`.
    pub fn time<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings
            .push((label.to_string(), start.elapsed().as_millis()));
        out
    }

    pub fn metric(&mut self, key: &str, value: impl std::fmt::Display) {
        self.metrics.push((key.to_string(), value.to_string()));
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "subcommand: {}", self.subcommand);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "config: {}", self.config_echo);
        for (label, ms) in &self.timings {
            let _ = writeln!(s, "timing_ms.{label}: {ms}");
        }
        for (key, value) in &self.metrics {
            let _ = writeln!(s, "metric.{key}: {value}");
        }
        for path in &self.outputs {
            let _ = writeln!(s, "output: {}", path.display());
        }
        s
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.render())
    }
}
