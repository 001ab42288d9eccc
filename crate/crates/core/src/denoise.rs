//! Gaussian denoising as the `mu = x_0` special case: the noisy observation is
//! treated as an intermediate state and reversed from the step whose marginal
//! variance matches the noise level.

use crate::error::{Error, Result};
use crate::reverse::{run_reverse, step, Dynamics, RestoreOptions, ScoreSource, SolverMode, Trajectory};
use crate::sde::SdeConfig;
use crate::state::StateVec;
use rand::Rng;

/// Reverse Euler-Maruyama step of `dx = -1/2 sigma^2 (1 + e^{-2 theta_bar}) score dt + sigma dw`.
pub fn denoising_sde_step<R: Rng + ?Sized>(
    x_i: &StateVec,
    i: usize,
    score: &StateVec,
    cfg: &SdeConfig,
    rng: &mut R,
) -> Result<StateVec> {
    step(Dynamics::Denoising, SolverMode::Sde, true, x_i, i, x_i, score, cfg, rng).map(|(x, _)| x)
}

/// Reverse Euler step of `dx = -1/2 sigma^2 e^{-2 theta_bar} score dt`.
pub fn denoising_ode_step(
    x_i: &StateVec,
    i: usize,
    score: &StateVec,
    cfg: &SdeConfig,
) -> Result<StateVec> {
    crate::reverse::drift_update(Dynamics::Denoising, SolverMode::Ode, x_i, i, x_i, score, cfg)
        .map(|(x, _)| x)
}

/// Grid index whose marginal variance `v_i` is closest to `sigma_real^2`.
/// Ties go to the larger index.
pub fn t_star(sigma_real: f64, cfg: &SdeConfig) -> Result<usize> {
    let sigma_sq = sigma_real * sigma_real;
    if !sigma_real.is_finite() || sigma_real < 0.0 || sigma_sq >= cfg.lambda_sq() {
        return Err(Error::NoiseOutOfRange {
            sigma_sq,
            lambda_sq: cfg.lambda_sq(),
        });
    }
    let mut best = 0;
    let mut best_gap = f64::INFINITY;
    for i in 0..=cfg.steps() {
        let gap = (cfg.variance(i) - sigma_sq).abs();
        if gap <= best_gap {
            best = i;
            best_gap = gap;
        }
    }
    Ok(best)
}

/// Reverses a noisy observation from step `start` down to 0.
///
/// With `ScoreSource::Exact(x0)` the scores are the conditional scores around
/// `x0`; a learned model receives `noisy` as its condition.
pub fn denoise<R: Rng + ?Sized>(
    noisy: &StateVec,
    start: usize,
    source: ScoreSource<'_>,
    opts: &RestoreOptions,
    cfg: &SdeConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    let mean_ref = match source {
        ScoreSource::Exact(x0) => x0,
        ScoreSource::Learned(_) => noisy,
    };
    run_reverse(Dynamics::Denoising, noisy, start, mean_ref, noisy, source, opts, cfg, rng)
}
