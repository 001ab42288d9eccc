use super::{OptimizerState, ScoreModel};
use crate::degrade::derive_seed;
use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::objectives::{
    ml_loss_grad, ml_loss_with, noise_matching_grad, noise_matching_loss_with, LossNorm, LossRecord, Objective,
};
use crate::reverse::{initial_state, restore_with, NoisePredictor, RestoreOptions, ScoreSource, SolverMode};
use crate::sde::{sample_forward, PairedSample, SdeConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lr_halve_every: Option<u64>,
    pub gamma: f64,
    pub norm: LossNorm,
    /// Evaluate every this many iterations; `0` only evaluates after the last one.
    pub eval_every: usize,
    pub eval_mode: SolverMode,
    /// Seeds the terminal noise of every evaluation, so all evaluations share it.
    pub eval_seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            iterations: 1000,
            batch_size: 8,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.99,
            lr_halve_every: None,
            gamma: 1.0,
            norm: LossNorm::L1,
            eval_every: 100,
            eval_mode: SolverMode::Sde,
            eval_seed: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("loss weight must be positive, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// One row of the training curve: the batch-mean loss and, on evaluation iterations, the held-out PSNR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub objective: Objective,
    pub loss: f64,
    pub psnr_eval: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub model: ScoreModel,
    pub optimizer: OptimizerState,
    pub records: Vec<LossRecord>,
    pub curve: Vec<CurvePoint>,
}

impl TrainReport {
    pub fn eval_psnrs(&self) -> Vec<f64> {
        self.curve.iter().filter_map(|p| p.psnr_eval).collect()
    }
}

/// PSNR credited to a restoration that diverged or is worse than 0 dB.
pub const EVAL_PSNR_FLOOR: f64 = 0.0;

/// Mean PSNR of learned restorations over `pairs`, each clamped below at [`EVAL_PSNR_FLOOR`].
///
/// The terminal noise of pair `k` is drawn from a generator seeded with
/// `derive_seed(seed, k)`, so repeated evaluations see the same noise.
pub fn evaluate(
    model: &dyn NoisePredictor,
    pairs: &[PairedSample],
    cfg: &SdeConfig,
    mode: SolverMode,
    seed: u64,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let opts = RestoreOptions::new(mode);
    let mut total = 0.0;
    for (k, pair) in pairs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
        let x_t = initial_state(&pair.mu, cfg, &mut rng)?;
        total += match restore_with(&x_t, &pair.mu, ScoreSource::Learned(model), &opts, cfg, &mut rng) {
            Ok(traj) => psnr(traj.last(), &pair.x0, 1.0)?.max(EVAL_PSNR_FLOOR),
            Err(Error::Diverged { .. }) => EVAL_PSNR_FLOOR,
            Err(e) => return Err(e),
        };
    }
    Ok(total / pairs.len() as f64)
}

/// Trains `model` on `dataset`; `eval_set` may be empty to skip evaluation.
///
/// Every batch entry draws a pair index, a step `i` uniform on `1..=T` and
/// forward noise from `rng`, in that order.
pub fn train<R: Rng + ?Sized>(
    mut model: ScoreModel,
    dataset: &[PairedSample],
    eval_set: &[PairedSample],
    objective: Objective,
    cfg: &SdeConfig,
    params: &TrainParams,
    rng: &mut R,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    params.validate()?;
    let n_params = model.params().len();
    let mut optimizer = OptimizerState::new(n_params, params.lr, params.beta1, params.beta2);
    optimizer.halve_every = params.lr_halve_every;
    let mut records = Vec::with_capacity(params.iterations * params.batch_size);
    let mut curve = Vec::with_capacity(params.iterations);
    let mut grad = vec![0.0; n_params];

    for iteration in 0..params.iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut batch_loss = 0.0;
        for _ in 0..params.batch_size {
            let pair = &dataset[rng.random_range(0..dataset.len())];
            let i = rng.random_range(1..=cfg.steps());
            let (x_i, eps) = sample_forward(&pair.x0, &pair.mu, i, cfg, rng)?;
            let (eps_hat, cache) = model.forward_state(&x_i, &pair.mu, i, cfg.steps())?;
            let (loss, upstream) = match objective {
                Objective::NoiseMatching => (
                    noise_matching_loss_with(&eps_hat, &eps, params.gamma, params.norm),
                    noise_matching_grad(&eps_hat, &eps, params.gamma, params.norm),
                ),
                Objective::MaxLikelihood => (
                    ml_loss_with(&x_i, i, &eps_hat, &pair.x0, &pair.mu, cfg, params.gamma, params.norm),
                    ml_loss_grad(&x_i, i, &eps_hat, &pair.x0, &pair.mu, cfg, params.gamma, params.norm),
                ),
            };
            let (loss, upstream) = match (loss, upstream) {
                (Ok(l), Ok(u)) if l.is_finite() => (l, u),
                (Err(Error::NonFinite { .. }), _) | (_, Err(Error::NonFinite { .. })) | (Ok(_), Ok(_)) => {
                    return Err(Error::TrainingDiverged { iteration });
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            model.accumulate_state_grad(&cache, &upstream, &mut grad)?;
            batch_loss += loss;
            records.push(LossRecord {
                iteration,
                step: i,
                objective,
                gamma: params.gamma,
                loss,
            });
        }
        let scale = 1.0 / params.batch_size as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        optimizer
            .adam_step(model.params_mut(), &grad)
            .map_err(|e| match e {
                Error::NonFiniteGradient => Error::TrainingDiverged { iteration },
                other => other,
            })?;
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::TrainingDiverged { iteration });
        }

        let last = iteration + 1 == params.iterations;
        let due = params.eval_every > 0 && (iteration + 1) % params.eval_every == 0;
        let psnr_eval = if !eval_set.is_empty() && (due || last) {
            Some(evaluate(&model, eval_set, cfg, params.eval_mode, params.eval_seed)?)
        } else {
            None
        };
        curve.push(CurvePoint {
            iteration,
            objective,
            loss: batch_loss * scale,
            psnr_eval,
        });
    }

    Ok(TrainReport {
        model,
        optimizer,
        records,
        curve,
    })
}
