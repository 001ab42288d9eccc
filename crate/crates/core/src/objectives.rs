//! Training objectives for the noise network and the DDPM reverse mean.
//!
//! Both losses reduce over entries with a mean, so magnitudes do not depend
//! on resolution. The norm defaults to L1.

use crate::error::{Error, Result};
use crate::reverse::{optimal_reverse_state, reverse_drift_step};
use crate::sde::{score_from_noise, SdeConfig};
use crate::state::StateVec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    NoiseMatching,
    MaxLikelihood,
}

impl Objective {
    pub fn tag(&self) -> &'static str {
        match self {
            Objective::NoiseMatching => "noise_matching",
            Objective::MaxLikelihood => "max_likelihood",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nm" | "noise" | "noise_matching" => Ok(Self::NoiseMatching),
            "ml" | "max_likelihood" => Ok(Self::MaxLikelihood),
            other => Err(Error::InvalidArgument(format!("unknown objective `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossNorm {
    #[default]
    L1,
    L2,
}

impl LossNorm {
    fn reduce(&self, diff: &[f64]) -> f64 {
        let n = diff.len() as f64;
        match self {
            LossNorm::L1 => diff.iter().map(|d| d.abs()).sum::<f64>() / n,
            LossNorm::L2 => diff.iter().map(|d| d * d).sum::<f64>() / n,
        }
    }

    /// d(reduce)/d(diff_k); the L1 subgradient at zero is zero.
    fn grad(&self, diff: &[f64]) -> Vec<f64> {
        let n = diff.len() as f64;
        match self {
            LossNorm::L1 => diff
                .iter()
                .map(|d| if *d == 0.0 { 0.0 } else { d.signum() / n })
                .collect(),
            LossNorm::L2 => diff.iter().map(|d| 2.0 * d / n).collect(),
        }
    }
}

/// One weighted loss evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub step: usize,
    pub objective: Objective,
    pub gamma: f64,
    pub loss: f64,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("loss weight must be positive, got {gamma}")));
    }
    Ok(())
}

/// `gamma_i * mean |eps_hat - eps|`.
pub fn noise_matching_loss(eps_hat: &StateVec, eps: &StateVec, gamma: f64) -> Result<f64> {
    noise_matching_loss_with(eps_hat, eps, gamma, LossNorm::L1)
}

pub fn noise_matching_loss_with(
    eps_hat: &StateVec,
    eps: &StateVec,
    gamma: f64,
    norm: LossNorm,
) -> Result<f64> {
    check_gamma(gamma)?;
    let diff = eps_hat.zip_map(eps, |a, b| a - b)?;
    Ok(gamma * norm.reduce(diff.as_slice()))
}

/// Gradient of the noise-matching loss with respect to `eps_hat`.
pub fn noise_matching_grad(
    eps_hat: &StateVec,
    eps: &StateVec,
    gamma: f64,
    norm: LossNorm,
) -> Result<StateVec> {
    check_gamma(gamma)?;
    let diff = eps_hat.zip_map(eps, |a, b| a - b)?;
    let g = norm.grad(diff.as_slice()).into_iter().map(|g| gamma * g).collect();
    StateVec::new(g, eps_hat.shape())
}

/// Drift-only reversed state minus the maximum-likelihood target `x*_{i-1}`.
fn ml_residual(
    x_i: &StateVec,
    i: usize,
    eps_hat: &StateVec,
    x0: &StateVec,
    mu: &StateVec,
    cfg: &SdeConfig,
) -> Result<StateVec> {
    let score = score_from_noise(eps_hat, i, cfg)?;
    let reversed = reverse_drift_step(x_i, i, mu, &score, cfg)?;
    let target = optimal_reverse_state(x_i, i, x0, mu, cfg)?;
    reversed.zip_map(&target, |r, t| r - t)
}

/// `gamma_i * mean |x_i - (dx_i)_{eps_hat} - x*_{i-1}|` with the drift-only reverse step.
pub fn ml_loss(
    x_i: &StateVec,
    i: usize,
    eps_hat: &StateVec,
    x0: &StateVec,
    mu: &StateVec,
    cfg: &SdeConfig,
    gamma: f64,
) -> Result<f64> {
    ml_loss_with(x_i, i, eps_hat, x0, mu, cfg, gamma, LossNorm::L1)
}

#[allow(clippy::too_many_arguments)]
pub fn ml_loss_with(
    x_i: &StateVec,
    i: usize,
    eps_hat: &StateVec,
    x0: &StateVec,
    mu: &StateVec,
    cfg: &SdeConfig,
    gamma: f64,
    norm: LossNorm,
) -> Result<f64> {
    check_gamma(gamma)?;
    let residual = ml_residual(x_i, i, eps_hat, x0, mu, cfg)?;
    Ok(gamma * norm.reduce(residual.as_slice()))
}

/// Gradient of the maximum-likelihood loss with respect to `eps_hat`.
///
/// The reversed state depends on `eps_hat` through `-sigma_i^2 dt / sqrt(v_i) * eps_hat`.
#[allow(clippy::too_many_arguments)]
pub fn ml_loss_grad(
    x_i: &StateVec,
    i: usize,
    eps_hat: &StateVec,
    x0: &StateVec,
    mu: &StateVec,
    cfg: &SdeConfig,
    gamma: f64,
    norm: LossNorm,
) -> Result<StateVec> {
    check_gamma(gamma)?;
    let residual = ml_residual(x_i, i, eps_hat, x0, mu, cfg)?;
    let slope = -cfg.sigma_sq(i) * cfg.dt() / cfg.variance(i).sqrt();
    let g = norm
        .grad(residual.as_slice())
        .into_iter()
        .map(|g| gamma * slope * g)
        .collect();
    StateVec::new(g, eps_hat.shape())
}

/// The noise prediction whose drift-only reverse step lands exactly on `x*_{i-1}`.
pub fn ml_target_noise(
    x_i: &StateVec,
    i: usize,
    x0: &StateVec,
    mu: &StateVec,
    cfg: &SdeConfig,
) -> Result<StateVec> {
    let zero = StateVec::zeros(x_i.shape());
    // the residual is affine in eps_hat with slope `slope`
    let r0 = ml_residual(x_i, i, &zero, x0, mu, cfg)?;
    let slope = -cfg.sigma_sq(i) * cfg.dt() / cfg.variance(i).sqrt();
    if slope == 0.0 {
        return Err(Error::DegenerateVariance { step: i });
    }
    r0.map(|r| -r / slope)
}

/// DDPM posterior mean `[sqrt(a_t)(1 - abar_{t-1}) x_t + sqrt(abar_{t-1}) beta_t x_0] / (1 - abar_t)`
/// with `alphas = [a_1, ..., a_t]`.
pub fn ddpm_reverse_mean(x_t: &StateVec, x0: &StateVec, alphas: &[f64]) -> Result<StateVec> {
    x_t.ensure_same_shape(x0)?;
    let Some((&alpha_t, earlier)) = alphas.split_last() else {
        return Err(Error::InvalidArgument("alphas must hold at least one entry".into()));
    };
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::InvalidArgument(format!("alpha {a} outside (0, 1)")));
    }
    let alpha_bar_prev: f64 = earlier.iter().product();
    let alpha_bar = alpha_bar_prev * alpha_t;
    let beta = 1.0 - alpha_t;
    let denom = 1.0 - alpha_bar;
    if denom <= 0.0 {
        return Err(Error::DegenerateVariance { step: alphas.len() });
    }
    let cx = alpha_t.sqrt() * (1.0 - alpha_bar_prev) / denom;
    let c0 = alpha_bar_prev.sqrt() * beta / denom;
    x_t.zip_map(x0, |xt, x0| cx * xt + c0 * x0)
}
