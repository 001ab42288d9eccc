//! Reverse-time restoration: Euler-Maruyama steps of the mean-reverting SDE, the
//! probability-flow ODE, the maximum-likelihood reverse state, and the
//! restoration loop that drives them.

use crate::error::{Error, Result};
use crate::sde::{exact_score, score_from_noise, SdeConfig};
use crate::state::StateVec;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Anything that predicts the noise `eps` contained in `x_i` given the condition `mu`.
pub trait NoisePredictor: Sync {
    fn predict_noise(&self, x_i: &StateVec, mu: &StateVec, i: usize, steps: usize)
        -> Result<StateVec>;
}

#[derive(Clone, Copy)]
pub enum ScoreSource<'a> {
    /// Conditional score computed from the known ground truth.
    Exact(&'a StateVec),
    Learned(&'a dyn NoisePredictor),
}

impl ScoreSource<'_> {
    pub fn score(&self, x_i: &StateVec, mu: &StateVec, i: usize, cfg: &SdeConfig) -> Result<StateVec> {
        match self {
            ScoreSource::Exact(x0) => exact_score(x_i, x0, mu, i, cfg),
            ScoreSource::Learned(model) => {
                let eps_hat = model.predict_noise(x_i, mu, i, cfg.steps())?;
                x_i.ensure_same_shape(&eps_hat)?;
                score_from_noise(&eps_hat, i, cfg)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMode {
    Sde,
    Ode,
}

impl std::str::FromStr for SolverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sde" => Ok(Self::Sde),
            "ode" => Ok(Self::Ode),
            other => Err(Error::InvalidArgument(format!("unknown solver mode `{other}`"))),
        }
    }
}

/// How the last step `1 -> 0` is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalStep {
    /// Posterior mean of `x_0` using the `x_0` estimate implied by the score.
    PosteriorMean,
    /// The solver's step with the Wiener increment dropped.
    DriftOnly,
    /// Same as every other step.
    Stochastic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestoreOptions {
    pub mode: SolverMode,
    /// `None` picks `PosteriorMean` for learned scores and `DriftOnly` for exact ones.
    pub final_step: Option<FinalStep>,
    /// Any state entry beyond this magnitude aborts the run.
    pub divergence_bound: f64,
}

impl RestoreOptions {
    pub fn new(mode: SolverMode) -> Self {
        Self {
            mode,
            final_step: None,
            divergence_bound: 10.0,
        }
    }

    pub fn with_final_step(mut self, final_step: FinalStep) -> Self {
        self.final_step = Some(final_step);
        self
    }

    fn final_step_for(&self, source: &ScoreSource<'_>) -> FinalStep {
        self.final_step.unwrap_or(match source {
            ScoreSource::Exact(_) => FinalStep::DriftOnly,
            ScoreSource::Learned(_) => FinalStep::PosteriorMean,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub score_norm: f64,
    pub drift_norm: f64,
    pub noise_norm: f64,
}

/// States `x_start, ..., x_0` in reverse order plus one log entry per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<StateVec>,
    pub step_logs: Vec<StepLog>,
}

impl Trajectory {
    pub fn last(&self) -> &StateVec {
        self.states.last().expect("trajectory holds at least its start state")
    }
}

/// Which drift the reverse loop integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Dynamics {
    /// `theta (mu - x) - sigma^2 * score` (full reverse SDE); the ODE halves the score term.
    MeanReverting,
    /// `mu = x_0` rewritten through the score.
    Denoising,
}

pub(crate) fn drift(
    dynamics: Dynamics,
    mode: SolverMode,
    x_i: &StateVec,
    i: usize,
    mu: &StateVec,
    score: &StateVec,
    cfg: &SdeConfig,
) -> Result<StateVec> {
    x_i.ensure_same_shape(score)?;
    let theta = cfg.theta(i);
    let sigma_sq = cfg.sigma_sq(i);
    match dynamics {
        Dynamics::MeanReverting => {
            x_i.ensure_same_shape(mu)?;
            let weight = match mode {
                SolverMode::Sde => 1.0,
                SolverMode::Ode => 0.5,
            };
            let pulled = x_i.zip_map(mu, |x, m| theta * (m - x))?;
            pulled.zip_map(score, |p, s| p - weight * sigma_sq * s)
        }
        Dynamics::Denoising => {
            let decay = (-2.0 * cfg.theta_bar(i)).exp();
            let coeff = match mode {
                SolverMode::Sde => -0.5 * sigma_sq * (1.0 + decay),
                SolverMode::Ode => -0.5 * sigma_sq * decay,
            };
            score.map(|s| coeff * s)
        }
    }
}

/// Deterministic part of a backward step: `x_i - drift * dt` and the increment norm.
pub(crate) fn drift_update(
    dynamics: Dynamics,
    mode: SolverMode,
    x_i: &StateVec,
    i: usize,
    mu: &StateVec,
    score: &StateVec,
    cfg: &SdeConfig,
) -> Result<(StateVec, f64)> {
    cfg.check_reverse_step(i)?;
    let dt = cfg.dt();
    let increment = drift(dynamics, mode, x_i, i, mu, score, cfg)?.map(|d| d * dt)?;
    let next = x_i.zip_map(&increment, |x, d| x - d)?;
    Ok((next, increment.l2_norm()))
}

/// Adds the reverse-time Wiener increment `sigma_i sqrt(dt) xi`.
pub(crate) fn add_reverse_noise<R: Rng + ?Sized>(
    x: &StateVec,
    i: usize,
    cfg: &SdeConfig,
    rng: &mut R,
) -> Result<(StateVec, f64)> {
    let scale = (cfg.sigma_sq(i) * cfg.dt()).sqrt();
    let noise = StateVec::standard_normal(x.shape(), rng).map(|z| scale * z)?;
    Ok((x.zip_map(&noise, |a, n| a + n)?, noise.l2_norm()))
}

/// One backward step; returns the new state and its log entry.
#[allow(clippy::too_many_arguments)]
pub(crate) fn step<R: Rng + ?Sized>(
    dynamics: Dynamics,
    mode: SolverMode,
    with_noise: bool,
    x_i: &StateVec,
    i: usize,
    mu: &StateVec,
    score: &StateVec,
    cfg: &SdeConfig,
    rng: &mut R,
) -> Result<(StateVec, StepLog)> {
    let (mut next, drift_norm) = drift_update(dynamics, mode, x_i, i, mu, score, cfg)?;
    let mut noise_norm = 0.0;
    if with_noise && mode == SolverMode::Sde {
        (next, noise_norm) = add_reverse_noise(&next, i, cfg, rng)?;
    }
    let log = StepLog {
        step: i,
        score_norm: score.l2_norm(),
        drift_norm,
        noise_norm,
    };
    Ok((next, log))
}

/// `x_{i-1} = x_i - [theta_i (mu - x_i) - sigma_i^2 score] dt + sigma_i sqrt(dt) xi`.
pub fn reverse_sde_step<R: Rng + ?Sized>(
    x_i: &StateVec,
    i: usize,
    mu: &StateVec,
    score: &StateVec,
    cfg: &SdeConfig,
    rng: &mut R,
) -> Result<StateVec> {
    step(Dynamics::MeanReverting, SolverMode::Sde, true, x_i, i, mu, score, cfg, rng).map(|(x, _)| x)
}

/// `x_{i-1} = x_i - [theta_i (mu - x_i) - sigma_i^2 score / 2] dt`.
pub fn reverse_ode_step(
    x_i: &StateVec,
    i: usize,
    mu: &StateVec,
    score: &StateVec,
    cfg: &SdeConfig,
) -> Result<StateVec> {
    drift_update(Dynamics::MeanReverting, SolverMode::Ode, x_i, i, mu, score, cfg).map(|(x, _)| x)
}

/// The reverse SDE step with the martingale term dropped.
pub fn reverse_drift_step(
    x_i: &StateVec,
    i: usize,
    mu: &StateVec,
    score: &StateVec,
    cfg: &SdeConfig,
) -> Result<StateVec> {
    drift_update(Dynamics::MeanReverting, SolverMode::Sde, x_i, i, mu, score, cfg).map(|(x, _)| x)
}

/// Coefficients `(a, b)` of `x*_{i-1} = a (x_i - mu) + b (x_0 - mu) + mu`.
pub fn optimal_reverse_coefficients(i: usize, cfg: &SdeConfig) -> Result<(f64, f64)> {
    cfg.check_reverse_step(i)?;
    let bar_prev = cfg.theta_bar(i - 1);
    let bar = cfg.theta_bar(i);
    let local = cfg.step_decay(i);
    let one_minus = |x: f64| -(-2.0 * x).exp_m1();
    let denom = one_minus(bar);
    if denom <= 0.0 {
        return Err(Error::DegenerateVariance { step: i });
    }
    let a = one_minus(bar_prev) / denom * (-local).exp();
    let b = one_minus(local) / denom * (-bar_prev).exp();
    Ok((a, b))
}

/// Mode of `p(x_{i-1} | x_i, x_0)`, the maximum-likelihood reverse state.
pub fn optimal_reverse_state(
    x_i: &StateVec,
    i: usize,
    x0: &StateVec,
    mu: &StateVec,
    cfg: &SdeConfig,
) -> Result<StateVec> {
    let (a, b) = optimal_reverse_coefficients(i, cfg)?;
    x_i.ensure_same_shape(x0)?;
    x_i.ensure_same_shape(mu)?;
    let data = x_i
        .as_slice()
        .iter()
        .zip(x0.as_slice())
        .zip(mu.as_slice())
        .map(|((&x, &x0), &m)| a * (x - m) + b * (x0 - m) + m)
        .collect();
    StateVec::new(data, x_i.shape())
}

/// Estimate of `x_0` implied by a score at step `i`: inverts `m_i = mu + (x_0 - mu) e^{-theta_bar_i}`.
pub fn implied_x0(
    x_i: &StateVec,
    i: usize,
    mu: &StateVec,
    score: &StateVec,
    cfg: &SdeConfig,
) -> Result<StateVec> {
    cfg.check_reverse_step(i)?;
    let v = cfg.variance(i);
    let growth = cfg.theta_bar(i).exp();
    let mean = x_i.zip_map(score, |x, s| x + v * s)?;
    mean.zip_map(mu, |m, mu| mu + (m - mu) * growth)
}

/// Terminal state for restoration: `mu + sqrt(v_T) xi`.
pub fn initial_state<R: Rng + ?Sized>(mu: &StateVec, cfg: &SdeConfig, rng: &mut R) -> Result<StateVec> {
    let std = cfg.variance(cfg.steps()).sqrt();
    let noise = StateVec::standard_normal(mu.shape(), rng);
    mu.zip_map(&noise, |m, z| m + std * z)
}

pub fn restore<R: Rng + ?Sized>(
    x_t: &StateVec,
    mu: &StateVec,
    source: ScoreSource<'_>,
    mode: SolverMode,
    cfg: &SdeConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    restore_with(x_t, mu, source, &RestoreOptions::new(mode), cfg, rng)
}

/// Runs all `T` reverse steps from `x_T`.
pub fn restore_with<R: Rng + ?Sized>(
    x_t: &StateVec,
    mu: &StateVec,
    source: ScoreSource<'_>,
    opts: &RestoreOptions,
    cfg: &SdeConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    run_reverse(
        Dynamics::MeanReverting,
        x_t,
        cfg.steps(),
        mu,
        mu,
        source,
        opts,
        cfg,
        rng,
    )
}

/// Shared reverse loop. `mean_ref` is the SDE mean used by the dynamics and
/// exact scores; `condition` is what a learned model sees.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_reverse<R: Rng + ?Sized>(
    dynamics: Dynamics,
    x_start: &StateVec,
    start: usize,
    mean_ref: &StateVec,
    condition: &StateVec,
    source: ScoreSource<'_>,
    opts: &RestoreOptions,
    cfg: &SdeConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    cfg.check_step(start)?;
    x_start.ensure_same_shape(mean_ref)?;
    x_start.ensure_same_shape(condition)?;
    if let ScoreSource::Exact(x0) = source {
        x_start.ensure_same_shape(x0)?;
    }
    let final_step = opts.final_step_for(&source);
    let mut states = Vec::with_capacity(start + 1);
    let mut step_logs = Vec::with_capacity(start);
    states.push(x_start.clone());
    let mut x = x_start.clone();
    for i in (1..=start).rev() {
        let score = match source {
            ScoreSource::Exact(_) => source.score(&x, mean_ref, i, cfg),
            ScoreSource::Learned(_) => source.score(&x, condition, i, cfg),
        }
        .map_err(|e| abort(i, e))?;
        let (next, log) = if i == 1 && final_step == FinalStep::PosteriorMean {
            let next = match dynamics {
                Dynamics::MeanReverting => implied_x0(&x, i, mean_ref, &score, cfg)
                    .and_then(|x0_hat| optimal_reverse_state(&x, i, &x0_hat, mean_ref, cfg)),
                // with mu = x_0 the marginal mean is x_0 itself
                Dynamics::Denoising => {
                    let v = cfg.variance(i);
                    x.zip_map(&score, |x, s| x + v * s)
                        .and_then(|x0_hat| optimal_reverse_state(&x, i, &x0_hat, &x0_hat, cfg))
                }
            }
            .map_err(|e| abort(i, e))?;
            let drift_norm = next.zip_map(&x, |a, b| a - b).map(|d| d.l2_norm()).unwrap_or(f64::NAN);
            let log = StepLog {
                step: i,
                score_norm: score.l2_norm(),
                drift_norm,
                noise_norm: 0.0,
            };
            (next, log)
        } else {
            let with_noise = !(i == 1 && final_step == FinalStep::DriftOnly);
            step(dynamics, opts.mode, with_noise, &x, i, mean_ref, &score, cfg, rng)
                .map_err(|e| abort(i, e))?
        };
        if next.max_abs() > opts.divergence_bound {
            return Err(Error::Diverged {
                step: i,
                reason: format!(
                    "state magnitude {:.3e} exceeds {}",
                    next.max_abs(),
                    opts.divergence_bound
                ),
            });
        }
        states.push(next.clone());
        step_logs.push(log);
        x = next;
    }
    Ok(Trajectory { states, step_logs })
}

fn abort(step: usize, err: Error) -> Error {
    match err {
        Error::NonFinite { .. } => Error::Diverged {
            step,
            reason: "non-finite state".into(),
        },
        other => other,
    }
}
