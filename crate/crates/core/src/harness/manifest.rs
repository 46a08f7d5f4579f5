use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::Check;
use crate::error::Result;

/// Crate version the binary was built from.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Git commit at build time, or `unknown` outside a checkout.
pub const COMMIT: &str = env!("OPTLAB_COMMIT");

/// Everything needed to rerun an experiment and judge its outcome.
///
/// Written next to the CSVs as `manifest.json`. Only the timings vary
/// between reruns with the same seed.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub version: String,
    pub commit: String,
    /// Resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub files: Vec<String>,
    pub timings_ms: BTreeMap<String, f64>,
    /// Set when a sub-run diverged or stopped early.
    pub partial: bool,
    pub failures: Vec<String>,
    pub checks: Vec<Check>,
    /// Free-form remarks, e.g. differences from values quoted in the literature.
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(experiment: impl Into<String>, seed: u64, config: serde_json::Value) -> Self {
        Self {
            experiment: experiment.into(),
            seed,
            version: VERSION.into(),
            commit: COMMIT.into(),
            config,
            files: Vec::new(),
            timings_ms: BTreeMap::new(),
            partial: false,
            failures: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Runs `f`, recording its wall time under `label`.
    pub fn timed<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings_ms.insert(label.to_string(), start.elapsed().as_secs_f64() * 1e3);
        out
    }

    /// Writes `contents` to `dir/name` and lists the file.
    pub fn emit(&mut self, dir: &Path, name: &str, contents: &str) -> Result<()> {
        std::fs::write(dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn fail(&mut self, what: impl Into<String>) {
        self.partial = true;
        self.failures.push(what.into());
    }

    pub fn passed(&self) -> bool {
        !self.partial && self.checks.iter().all(|c| c.pass)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
