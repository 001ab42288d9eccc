//! Configuration loading, flag overrides, run manifests and exit-code classification.

use anyhow::{Context, Result};
use clap::Args;
use mrsde_core::{ExperimentConfig, ScheduleKind, Shape, StateVec};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};

pub const EXIT_CHECKS: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

/// Errors that map to a specific exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Checks { failed: usize, total: usize },
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "{msg}"),
            Failure::Checks { failed, total } => write!(f, "{failed} of {total} checks failed"),
        }
    }
}

impl std::error::Error for Failure {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Failure::Usage(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Usage(_) => EXIT_USAGE,
                Failure::Checks { .. } => EXIT_CHECKS,
            };
        }
        if let Some(e) = cause.downcast_ref::<mrsde_core::Error>() {
            use mrsde_core::Error as E;
            return match e {
                E::InvalidConfig(_) | E::ConfigParse { .. } | E::InvalidArgument(_) | E::NoiseOutOfRange { .. } => {
                    EXIT_USAGE
                }
                _ => EXIT_RUNTIME,
            };
        }
    }
    EXIT_RUNTIME
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Experiment config (JSON), or a run manifest written by an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `train.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of reverse steps T.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Stationary variance lambda^2 in [0, 1] state units.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub lambda_sq: Option<f64>,
    /// constant, linear or cosine.
    #[arg(long, global = true)]
    pub schedule: Option<ScheduleKind>,
}

impl Common {
    /// Loads the config (or defaults), applies flag overrides and validates the result.
    pub fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => read_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(steps) = self.steps {
            cfg.sde.steps = steps;
        }
        if let Some(lambda_sq) = self.lambda_sq {
            cfg.sde.lambda_sq = lambda_sq;
        }
        if let Some(kind) = self.schedule {
            cfg.schedule.kind = kind;
        }
        cfg.validate().map_err(|e| usage(format!("invalid configuration: {e}")))?;
        Ok(cfg)
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    // a run manifest carries its config under `config`
    if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(&text) {
        if let (Some(config), Some(_)) = (map.get("config"), map.get("command")) {
            let inner = serde_json::to_string_pretty(config)?;
            return ExperimentConfig::from_json(&inner).map_err(|e| usage(format!("{}: {e}", path.display())));
        }
    }
    ExperimentConfig::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    args: Vec<String>,
    seed: u64,
    config_sha256: String,
    config: serde_json::Value,
    outputs: Vec<String>,
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let digest = Sha256::digest(cfg.to_json()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// `DIR/run.json` for directory outputs, `name.run.json` next to file outputs.
pub fn manifest_path(out: &Path) -> PathBuf {
    if out.extension().is_some() {
        out.with_extension("run.json")
    } else {
        out.join("run.json")
    }
}

pub fn write_manifest(command: &str, cfg: &ExperimentConfig, seed: u64, out: &Path, outputs: &[PathBuf]) -> Result<PathBuf> {
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args: std::env::args().collect(),
        seed,
        config_sha256: config_hash(cfg)?,
        config: serde_json::from_str(&cfg.to_json()?)?,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let path = manifest_path(out);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing run manifest {}", path.display()))?;
    Ok(path)
}

pub fn read_state(path: &Path) -> Result<StateVec> {
    mrsde_core::io::read_state(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes a state as PGM (with the configured maxval) or CSV, by extension.
pub fn write_state(path: &Path, state: &StateVec, maxval: u16) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let res = match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => mrsde_core::io::write_pgm(path, state, maxval),
        _ => mrsde_core::io::write_state(path, state),
    };
    res.with_context(|| format!("writing {}", path.display()))
}

/// File extension that suits a state shape.
pub fn extension_for(shape: Shape) -> &'static str {
    match shape {
        Shape::Signal(_) => "csv",
        Shape::Image { .. } => "pgm",
    }
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}
