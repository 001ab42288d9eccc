//! Mean-reversion speed schedules and the time increment that pins the
//! terminal decay `exp(-theta_bar_T)` to `delta`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Constant,
    Linear,
    Cosine,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "linear" => Ok(Self::Linear),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::InvalidArgument(format!("unknown schedule `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub steps: usize,
    /// Offset `s` of the cosine profile.
    pub s_offset: f64,
    /// Terminal decay `exp(-theta_bar_T)`.
    pub delta: f64,
}

impl ScheduleSpec {
    pub const DEFAULT_S_OFFSET: f64 = 0.008;
    pub const DEFAULT_DELTA: f64 = 0.005;

    pub fn new(kind: ScheduleKind, steps: usize) -> Self {
        Self {
            kind,
            steps,
            s_offset: Self::DEFAULT_S_OFFSET,
            delta: Self::DEFAULT_DELTA,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::InvalidConfig(format!(
                "schedule needs at least 2 steps, got {}",
                self.steps
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.s_offset > 0.0 && self.s_offset.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "cosine offset must be positive, got {}",
                self.s_offset
            )));
        }
        Ok(())
    }
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self::new(ScheduleKind::Cosine, 100)
    }
}

/// Per-step `theta_i` for `i = 0..=T` (before `dt` scaling).
///
/// * constant: `1` everywhere
/// * linear: ramp from `0` at `i = 0` to `1` at `i = T`
/// * cosine: `1 - f(i)/f(0)` with `f(i) = cos^2(((i/T + s)/(1 + s)) * pi/2)`
pub fn build_theta(spec: &ScheduleSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let steps = spec.steps as f64;
    let theta = match spec.kind {
        ScheduleKind::Constant => vec![1.0; spec.steps + 1],
        ScheduleKind::Linear => (0..=spec.steps).map(|i| i as f64 / steps).collect(),
        ScheduleKind::Cosine => {
            let s = spec.s_offset;
            let f = |i: usize| {
                let c = (((i as f64 / steps) + s) / (1.0 + s) * FRAC_PI_2).cos();
                c * c
            };
            let f0 = f(0);
            let mut theta: Vec<f64> = (0..=spec.steps).map(|i| 1.0 - f(i) / f0).collect();
            // cos(pi/2) is not exactly zero in floating point
            theta[spec.steps] = 1.0;
            theta
        }
    };
    Ok(theta)
}

/// `dt = -ln(delta) / sum_{i=1..T} theta_i`; `theta[0]` is not part of any forward step.
pub fn normalize_dt(theta: &[f64], delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if theta.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidConfig("theta must be finite and non-negative".into()));
    }
    let total: f64 = theta.iter().skip(1).sum();
    if total <= 0.0 {
        return Err(Error::InvalidConfig("theta schedule sums to zero".into()));
    }
    Ok(-delta.ln() / total)
}

/// Diffusion coefficients tied to the stationary variance: `sigma_i^2 = 2 lambda^2 theta_i`.
pub fn sigma_sq_from_theta(theta: &[f64], lambda_sq: f64) -> Result<Vec<f64>> {
    if !(lambda_sq > 0.0 && lambda_sq.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "lambda_sq must be positive, got {lambda_sq}"
        )));
    }
    Ok(theta.iter().map(|t| 2.0 * lambda_sq * t).collect())
}
