//! The forward mean-reverting SDE `dx = theta_t (mu - x) dt + sigma_t dw` with
//! `sigma_t^2 = 2 lambda^2 theta_t`, its Gaussian transition kernel, forward
//! sampling, and exact conditional scores.

use crate::error::{Error, Result};
use crate::schedule::{build_theta, normalize_dt, sigma_sq_from_theta, ScheduleSpec};
use crate::state::StateVec;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Discretized SDE coefficients on the grid `i = 0..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct SdeConfig {
    lambda_sq: f64,
    schedule: ScheduleSpec,
    dt: f64,
    theta: Vec<f64>,
    sigma_sq: Vec<f64>,
    theta_bar: Vec<f64>,
}

impl SdeConfig {
    pub fn new(lambda_sq: f64, schedule: ScheduleSpec) -> Result<Self> {
        let theta = build_theta(&schedule)?;
        let dt = normalize_dt(&theta, schedule.delta)?;
        let sigma_sq = sigma_sq_from_theta(&theta, lambda_sq)?;
        let mut theta_bar = Vec::with_capacity(theta.len());
        theta_bar.push(0.0);
        for i in 1..theta.len() {
            theta_bar.push(theta_bar[i - 1] + theta[i] * dt);
        }
        Ok(Self {
            lambda_sq,
            schedule,
            dt,
            theta,
            sigma_sq,
            theta_bar,
        })
    }

    /// `lambda = 10/255` as a noise standard deviation in `[0, 1]` units.
    pub fn default_lambda_sq() -> f64 {
        (10.0f64 / 255.0).powi(2)
    }

    pub fn steps(&self) -> usize {
        self.schedule.steps
    }

    pub fn lambda_sq(&self) -> f64 {
        self.lambda_sq
    }

    pub fn schedule(&self) -> &ScheduleSpec {
        &self.schedule
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.theta[i]
    }

    pub fn sigma_sq(&self, i: usize) -> f64 {
        self.sigma_sq[i]
    }

    pub fn theta_bar(&self, i: usize) -> f64 {
        self.theta_bar[i]
    }

    pub fn thetas(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_bars(&self) -> &[f64] {
        &self.theta_bar
    }

    /// Integrated mean-reversion over step `i`, `theta'_i = theta_i * dt`.
    pub fn step_decay(&self, i: usize) -> f64 {
        self.theta[i] * self.dt
    }

    /// `v_{s:t} = lambda^2 (1 - exp(-2 (theta_bar_t - theta_bar_s)))`.
    pub fn kernel_variance(&self, s: usize, t: usize) -> f64 {
        let elapsed = self.theta_bar[t] - self.theta_bar[s];
        self.lambda_sq * -(-2.0 * elapsed).exp_m1()
    }

    /// Marginal variance `v_i` given `x_0`.
    pub fn variance(&self, i: usize) -> f64 {
        self.kernel_variance(0, i)
    }

    pub fn check_step(&self, i: usize) -> Result<()> {
        if i > self.steps() {
            return Err(Error::StepOutOfRange {
                step: i,
                max: self.steps(),
            });
        }
        Ok(())
    }

    /// Valid reverse step index `1..=T`.
    pub(crate) fn check_reverse_step(&self, i: usize) -> Result<()> {
        self.check_step(i)?;
        if i == 0 {
            return Err(Error::DegenerateVariance { step: 0 });
        }
        Ok(())
    }
}

/// Gaussian kernel parameters with isotropic variance.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionStats {
    pub mean: StateVec,
    pub variance: f64,
}

/// A high-quality state and its degraded counterpart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub x0: StateVec,
    pub mu: StateVec,
    pub degradation_tag: String,
}

impl PairedSample {
    pub fn new(x0: StateVec, mu: StateVec, degradation_tag: impl Into<String>) -> Result<Self> {
        x0.ensure_same_shape(&mu)?;
        Ok(Self {
            x0,
            mu,
            degradation_tag: degradation_tag.into(),
        })
    }
}

/// Kernel of `x_t | x_s`: mean `mu + (x_s - mu) e^{-theta_bar_{s:t}}`, variance `v_{s:t}`.
pub fn transition_stats(
    x_s: &StateVec,
    s: usize,
    t: usize,
    mu: &StateVec,
    cfg: &SdeConfig,
) -> Result<TransitionStats> {
    cfg.check_step(s)?;
    cfg.check_step(t)?;
    if s > t {
        return Err(Error::StepOrder { s, t });
    }
    let elapsed = cfg.theta_bar(t) - cfg.theta_bar(s);
    let (decay, pull) = ((-elapsed).exp(), -(-elapsed).exp_m1());
    let mean = x_s.zip_map(mu, |x, m| x * decay + m * pull)?;
    Ok(TransitionStats {
        mean,
        variance: cfg.kernel_variance(s, t),
    })
}

pub fn marginal_stats(
    x0: &StateVec,
    mu: &StateVec,
    i: usize,
    cfg: &SdeConfig,
) -> Result<TransitionStats> {
    transition_stats(x0, 0, i, mu, cfg)
}

/// Draws `x_i = m_i + sqrt(v_i) eps` and returns `(x_i, eps)`.
pub fn sample_forward<R: Rng + ?Sized>(
    x0: &StateVec,
    mu: &StateVec,
    i: usize,
    cfg: &SdeConfig,
    rng: &mut R,
) -> Result<(StateVec, StateVec)> {
    cfg.check_reverse_step(i)?;
    let stats = marginal_stats(x0, mu, i, cfg)?;
    let eps = StateVec::standard_normal(x0.shape(), rng);
    let std = stats.variance.sqrt();
    let x_i = stats.mean.zip_map(&eps, |m, e| m + std * e)?;
    Ok((x_i, eps))
}

/// `grad log p_i(x | x_0) = -(x_i - m_i) / v_i`.
pub fn exact_score(
    x_i: &StateVec,
    x0: &StateVec,
    mu: &StateVec,
    i: usize,
    cfg: &SdeConfig,
) -> Result<StateVec> {
    cfg.check_reverse_step(i)?;
    x_i.ensure_same_shape(x0)?;
    let stats = marginal_stats(x0, mu, i, cfg)?;
    let v = stats.variance;
    if v <= 0.0 {
        return Err(Error::DegenerateVariance { step: i });
    }
    x_i.zip_map(&stats.mean, |x, m| -(x - m) / v)
}

/// Score implied by a noise prediction: `-eps_hat / sqrt(v_i)`.
pub fn score_from_noise(eps_hat: &StateVec, i: usize, cfg: &SdeConfig) -> Result<StateVec> {
    cfg.check_reverse_step(i)?;
    let v = cfg.variance(i);
    if v <= 0.0 {
        return Err(Error::DegenerateVariance { step: i });
    }
    let std = v.sqrt();
    eps_hat.map(|e| -e / std)
}
