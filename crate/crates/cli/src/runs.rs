//! `simulate`, `restore` and `denoise`.

use crate::setup::{csv_writer, extension_for, read_state, usage, write_manifest, write_state, Common};
use anyhow::{Context, Result};
use clap::Args;
use mrsde_core::model::load_checkpoint;
use mrsde_core::{
    denoise, initial_state, psnr, restore_with, t_star, transition_stats, ExperimentConfig, RestoreOptions,
    ScoreModel, ScoreSource, SolverMode, StateVec, Trajectory,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Clean state `x_0` (`.pgm` or `.csv`).
    #[arg(long)]
    pub input: PathBuf,
    /// Mean state `mu`; defaults to the config's degradation applied to the input.
    #[arg(long)]
    pub mu: Option<PathBuf>,
    /// Output directory for snapshots and `stats.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Snapshot interval in steps; overrides `io.snapshot_every`.
    #[arg(long)]
    pub every: Option<usize>,
}

fn mean_of(v: &StateVec) -> f64 {
    v.as_slice().iter().sum::<f64>() / v.len() as f64
}

pub fn simulate(common: &Common, args: &SimulateArgs) -> Result<()> {
    let cfg = common.load()?;
    let sde = cfg.sde_config()?;
    let seed = cfg.train.seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = read_state(&args.input)?;
    let mu = match &args.mu {
        Some(path) => read_state(path)?,
        None => cfg.degradation()?.apply(&x0, &mut rng)?,
    };
    x0.ensure_same_shape(&mu).context("input and mu must share a shape")?;
    let every = args.every.unwrap_or(cfg.io.snapshot_every);
    if every == 0 {
        return Err(usage("--every must be positive"));
    }
    let ext = extension_for(x0.shape());
    let mut outputs = Vec::new();
    let snapshot = |i: usize, state: &StateVec, outputs: &mut Vec<PathBuf>| -> Result<()> {
        let path = args.out.join(format!("step_{i:04}.{ext}"));
        write_state(&path, state, cfg.io.pgm_maxval)?;
        outputs.push(path);
        Ok(())
    };

    let stats_path = args.out.join("stats.csv");
    let mut w = csv_writer(&stats_path)?;
    w.write_record(["step", "theta_bar", "mean_theory", "var_theory", "mean_empirical", "var_empirical"])?;
    let mut x = x0.clone();
    snapshot(0, &x, &mut outputs)?;
    for i in 0..=sde.steps() {
        if i > 0 {
            // exact one-step transition keeps the path on the forward marginals
            let step = transition_stats(&x, i - 1, i, &mu, &sde)?;
            let std = step.variance.sqrt();
            let noise = StateVec::standard_normal(x.shape(), &mut rng);
            x = step.mean.zip_map(&noise, |m, z| m + std * z)?;
            if i % every == 0 || i == sde.steps() {
                snapshot(i, &x, &mut outputs)?;
            }
        }
        let marginal = transition_stats(&x0, 0, i, &mu, &sde)?;
        let resid: Vec<f64> = x.as_slice().iter().zip(marginal.mean.as_slice()).map(|(a, m)| a - m).collect();
        let var_emp = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
        w.write_record([
            i.to_string(),
            sde.theta_bar(i).to_string(),
            mean_of(&marginal.mean).to_string(),
            marginal.variance.to_string(),
            mean_of(&x).to_string(),
            var_emp.to_string(),
        ])?;
    }
    w.flush()?;
    outputs.push(stats_path);
    println!("wrote {} files to {}", outputs.len(), args.out.display());
    write_manifest("simulate", &cfg, seed, &args.out, &outputs)?;
    Ok(())
}

/// Where the score comes from: a trained checkpoint or the ground truth.
#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Trained model checkpoint.
    #[arg(long, conflicts_with = "exact")]
    pub checkpoint: Option<PathBuf>,
    /// Ground-truth state; selects the exact conditional score.
    #[arg(long)]
    pub exact: Option<PathBuf>,
    /// Ground truth used only to report PSNR.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

struct LoadedScore {
    model: Option<ScoreModel>,
    truth: Option<StateVec>,
    reference: Option<StateVec>,
}

impl LoadedScore {
    fn load(args: &ScoreArgs) -> Result<Self> {
        let model = match &args.checkpoint {
            Some(p) => Some(load_checkpoint(p).with_context(|| format!("loading checkpoint {}", p.display()))?),
            None => None,
        };
        let truth = args.exact.as_deref().map(read_state).transpose()?;
        if model.is_none() && truth.is_none() {
            return Err(usage("pass --checkpoint or --exact"));
        }
        let reference = match &args.reference {
            Some(p) => Some(read_state(p)?),
            None => truth.clone(),
        };
        Ok(Self { model, truth, reference })
    }

    fn source(&self) -> ScoreSource<'_> {
        match (&self.model, &self.truth) {
            (Some(m), _) => ScoreSource::Learned(m),
            (None, Some(t)) => ScoreSource::Exact(t),
            (None, None) => unreachable!("checked in load"),
        }
    }
}

fn write_log(path: &Path, traj: &Trajectory, reference: Option<&StateVec>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "score_norm", "drift_norm", "noise_norm", "psnr"])?;
    for (log, state) in traj.step_logs.iter().zip(&traj.states[1..]) {
        let p = match reference {
            Some(r) => psnr(state, r, 1.0)?.to_string(),
            None => String::new(),
        };
        w.write_record([
            log.step.to_string(),
            log.score_norm.to_string(),
            log.drift_norm.to_string(),
            log.noise_norm.to_string(),
            p,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn finish(
    command: &str,
    cfg: &ExperimentConfig,
    out: &Path,
    log: Option<&Path>,
    traj: &Trajectory,
    reference: Option<&StateVec>,
) -> Result<()> {
    write_state(out, traj.last(), cfg.io.pgm_maxval)?;
    let mut outputs = vec![out.to_path_buf()];
    if let Some(log) = log {
        write_log(log, traj, reference)?;
        outputs.push(log.to_path_buf());
    }
    if let Some(r) = reference {
        println!("psnr {:.3} dB over {} steps", psnr(traj.last(), r, 1.0)?, traj.step_logs.len());
    }
    write_manifest(command, cfg, cfg.train.seed, out, &outputs)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct RestoreArgs {
    /// Low-quality state `mu`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub score: ScoreArgs,
    #[arg(long, default_value = "sde")]
    pub mode: SolverMode,
    /// Per-step CSV (norms and PSNR against the reference).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

pub fn restore(common: &Common, args: &RestoreArgs) -> Result<()> {
    let cfg = common.load()?;
    let sde = cfg.sde_config()?;
    let score = LoadedScore::load(&args.score)?;
    let mu = read_state(&args.input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let x_t = initial_state(&mu, &sde, &mut rng)?;
    let traj = restore_with(&x_t, &mu, score.source(), &RestoreOptions::new(args.mode), &sde, &mut rng)?;
    finish("restore", &cfg, &args.out, args.log.as_deref(), &traj, score.reference.as_ref())
}

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    /// Noisy state.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Noise standard deviation in 8-bit units (e.g. 25 for 25/255).
    #[arg(long)]
    pub sigma: f64,
    /// `auto` picks t* from sigma; otherwise an explicit step index.
    #[arg(long, default_value = "auto")]
    pub start: String,
    #[command(flatten)]
    pub score: ScoreArgs,
    #[arg(long, default_value = "ode")]
    pub mode: SolverMode,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

pub fn denoise_cmd(common: &Common, args: &DenoiseArgs) -> Result<()> {
    let cfg = common.load()?;
    let sde = cfg.sde_config()?;
    let score = LoadedScore::load(&args.score)?;
    let noisy = read_state(&args.input)?;
    let start = match args.start.as_str() {
        "auto" => t_star(args.sigma / 255.0, &sde).map_err(|e| usage(e.to_string()))?,
        s => s.parse().map_err(|_| usage(format!("--start must be `auto` or a step index, got `{s}`")))?,
    };
    if start > sde.steps() {
        return Err(usage(format!("--start {start} exceeds T = {}", sde.steps())));
    }
    println!("starting from step {start} of {}", sde.steps());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let traj = denoise(&noisy, start, score.source(), &RestoreOptions::new(args.mode), &sde, &mut rng)?;
    finish("denoise", &cfg, &args.out, args.log.as_deref(), &traj, score.reference.as_ref())
}
