//! Mean-reverting SDE restoration: forward process, closed-form kernels,
//! reverse-time samplers, training objectives and a small noise network.

pub mod config;
pub mod degrade;
pub mod denoise;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod reverse;
pub mod schedule;
pub mod sde;
pub mod state;
pub mod validate;

pub use config::ExperimentConfig;
pub use degrade::{
    add_gaussian_noise, clean_sample, derive_seed, gaussian_blur, generate_pair, generate_pairs, mask_region,
    structured_spikes, Degradation, MaskSpec,
};
pub use denoise::{denoise, denoising_ode_step, denoising_sde_step, t_star};
pub use error::{Error, Result};
pub use metrics::{mse, psnr, ssim, SsimParams};
pub use model::{evaluate, train, Architecture, CurvePoint, OptimizerState, ScoreModel, TrainParams, TrainReport};
pub use objectives::{
    ddpm_reverse_mean, ml_loss, ml_loss_grad, ml_loss_with, noise_matching_grad, noise_matching_loss,
    noise_matching_loss_with, LossNorm, LossRecord, Objective,
};
pub use reverse::{
    implied_x0, initial_state, optimal_reverse_coefficients, optimal_reverse_state, restore, restore_with,
    reverse_drift_step, reverse_ode_step, reverse_sde_step, FinalStep, NoisePredictor, RestoreOptions, ScoreSource,
    SolverMode, StepLog, Trajectory,
};
pub use schedule::{build_theta, normalize_dt, sigma_sq_from_theta, ScheduleKind, ScheduleSpec};
pub use sde::{
    exact_score, marginal_stats, sample_forward, score_from_noise, transition_stats, PairedSample, SdeConfig,
    TransitionStats,
};
pub use state::{Shape, StateVec};
