//! Experiment configuration: one JSON document with the sections
//! `sde`, `schedule`, `model`, `train`, `data` and `io`. Every key is optional.

use crate::degrade::Degradation;
use crate::error::{Error, Result};
use crate::model::{Architecture, TrainParams};
use crate::objectives::{LossNorm, Objective};
use crate::reverse::SolverMode;
use crate::schedule::{ScheduleKind, ScheduleSpec};
use crate::sde::SdeConfig;
use crate::state::Shape;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sde: SdeSection,
    pub schedule: ScheduleSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub io: IoSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSection {
    #[serde(rename = "T")]
    pub steps: usize,
    pub lambda_sq: f64,
}

impl Default for SdeSection {
    fn default() -> Self {
        Self {
            steps: 100,
            lambda_sq: SdeConfig::default_lambda_sq(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: ScheduleKind,
    pub s_offset: f64,
    pub delta: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Cosine,
            s_offset: ScheduleSpec::DEFAULT_S_OFFSET,
            delta: ScheduleSpec::DEFAULT_DELTA,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Defaults to a length-32 patch for signals and 8x8 for images.
    pub patch: Option<Shape>,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    /// Defaults to `1 / lambda`.
    pub input_scale: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            patch: None,
            embed_dim: 16,
            hidden: vec![256, 256],
            input_scale: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub objective: Objective,
    pub seed: u64,
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lr_halve_every: Option<u64>,
    pub gamma: f64,
    pub norm: LossNorm,
    pub eval_every: usize,
    pub eval_mode: SolverMode,
    pub eval_seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let p = TrainParams::default();
        Self {
            objective: Objective::MaxLikelihood,
            seed: 0,
            iterations: p.iterations,
            batch_size: p.batch_size,
            lr: p.lr,
            beta1: p.beta1,
            beta2: p.beta2,
            lr_halve_every: p.lr_halve_every,
            gamma: p.gamma,
            norm: p.norm,
            eval_every: p.eval_every,
            eval_mode: p.eval_mode,
            eval_seed: p.eval_seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// One of `noise`, `blur`, `mask`, `spikes`.
    pub task: String,
    pub shape: Shape,
    pub train_count: usize,
    pub eval_count: usize,
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            task: "spikes".into(),
            shape: Shape::Signal(64),
            train_count: 64,
            eval_count: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub out_dir: PathBuf,
    /// Trajectory snapshot interval in steps.
    pub snapshot_every: usize,
    /// 255 or 65535.
    pub pgm_maxval: u16,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs"),
            snapshot_every: 10,
            pgm_maxval: 65535,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            let snippet = text
                .lines()
                .nth(e.line().saturating_sub(1))
                .unwrap_or_default()
                .trim_end()
                .to_string();
            let message = e.to_string();
            let message = match message.rfind(" at line ") {
                Some(pos) => message[..pos].to_string(),
                None => message,
            };
            Error::ConfigParse {
                line: e.line(),
                column: e.column(),
                snippet,
                message,
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sde.lambda_sq > 0.0 && self.sde.lambda_sq.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sde.lambda_sq must be positive, got {}",
                self.sde.lambda_sq
            )));
        }
        self.schedule_spec().validate()?;
        self.architecture()?;
        self.train_params().validate()?;
        self.degradation()?;
        if self.data.shape.is_empty() {
            return Err(Error::InvalidConfig("data.shape must not be empty".into()));
        }
        if self.io.pgm_maxval != 255 && self.io.pgm_maxval != 65535 {
            return Err(Error::InvalidConfig(format!(
                "io.pgm_maxval must be 255 or 65535, got {}",
                self.io.pgm_maxval
            )));
        }
        if self.io.snapshot_every == 0 {
            return Err(Error::InvalidConfig("io.snapshot_every must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule_spec(&self) -> ScheduleSpec {
        ScheduleSpec {
            kind: self.schedule.kind,
            steps: self.sde.steps,
            s_offset: self.schedule.s_offset,
            delta: self.schedule.delta,
        }
    }

    pub fn sde_config(&self) -> Result<SdeConfig> {
        SdeConfig::new(self.sde.lambda_sq, self.schedule_spec())
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let patch = self.model.patch.unwrap_or(match self.data.shape {
            Shape::Signal(_) => Shape::Signal(32),
            Shape::Image { .. } => Shape::Image { height: 8, width: 8 },
        });
        let scale = self.model.input_scale.unwrap_or(1.0 / self.sde.lambda_sq.sqrt());
        Architecture::new(patch, self.model.embed_dim, self.model.hidden.clone())?.with_input_scale(scale)
    }

    pub fn train_params(&self) -> TrainParams {
        let t = &self.train;
        TrainParams {
            iterations: t.iterations,
            batch_size: t.batch_size,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            lr_halve_every: t.lr_halve_every,
            gamma: t.gamma,
            norm: t.norm,
            eval_every: t.eval_every,
            eval_mode: t.eval_mode,
            eval_seed: t.eval_seed,
        }
    }

    pub fn degradation(&self) -> Result<Degradation> {
        Degradation::for_task(&self.data.task).map_err(|_| {
            Error::InvalidConfig(format!(
                "data.task must be one of noise, blur, mask, spikes; got `{}`",
                self.data.task
            ))
        })
    }
}
