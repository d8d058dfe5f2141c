//! Reproducibility record written next to every command's outputs.

use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::engine::EngineConfig;

use super::{CliError, Command};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    /// Subcommand name.
    pub command: String,
    /// Fully resolved arguments, seed included, sufficient for replay.
    pub invocation: Command,
    pub config: Option<EngineConfig>,
    /// Initial pad seed as hex.
    pub seed: Option<String>,
    /// `hardware` or `simulated`.
    pub mode: Option<String>,
    /// Cycles (or symbols) run.
    pub trials: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub started: String,
    pub finished: Option<String>,
    pub platform: String,
    /// `ok`, or the error that ended the run.
    pub status: String,
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn platform() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{} ({} cpus, counter step {}, {} {})",
        std::env::consts::ARCH,
        std::env::consts::OS,
        cpus,
        crate::timing::counter_step(),
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
    )
}

impl RunManifest {
    pub fn start(invocation: Command) -> Self {
        Self {
            version: MANIFEST_VERSION,
            command: invocation.name().to_string(),
            invocation,
            config: None,
            seed: None,
            mode: None,
            trials: None,
            outputs: Vec::new(),
            warnings: Vec::new(),
            started: timestamp(Utc::now()),
            finished: None,
            platform: platform(),
            status: "running".into(),
        }
    }

    pub fn set_config(&mut self, cfg: &EngineConfig, seed: u64) {
        self.mode = Some(
            if cfg.mode.is_hardware() {
                "hardware"
            } else {
                "simulated"
            }
            .into(),
        );
        self.seed = Some(format!("{seed:#018x}"));
        if let Some(w) = cfg.convergence_warning() {
            self.warnings.push(w);
        }
        self.config = Some(cfg.clone());
    }

    pub fn finish(&mut self, result: &Result<(), CliError>) {
        self.finished = Some(timestamp(Utc::now()));
        self.status = match result {
            Ok(()) => "ok".into(),
            Err(e) => e.to_string(),
        };
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let manifest: Self = serde_json::from_str(&text)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(CliError::Usage(format!(
                "manifest version {} is not supported",
                manifest.version
            )));
        }
        Ok(manifest)
    }
}
