//! `train` and `validate`.

use crate::data::{generated_split, load_pairs};
use crate::setup::{csv_writer, usage, write_manifest, Common, Failure};
use anyhow::{Context, Result};
use clap::Args;
use mrsde_core::model::save_checkpoint;
use mrsde_core::validate::{run_checks, CheckGroup};
use mrsde_core::{train, Objective, PairedSample, ScoreModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Output directory for `loss.csv`, `model.ckpt` and `run.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// `ml` (maximum likelihood) or `nm` (noise matching).
    #[arg(long)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Training split written by `make-data`; defaults to pairs generated from the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Held-out split for the PSNR curve.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
}

fn pairs_only(named: Vec<(String, PairedSample)>) -> Vec<PairedSample> {
    named.into_iter().map(|(_, p)| p).collect()
}

pub fn train_cmd(common: &Common, args: &TrainArgs) -> Result<()> {
    let mut cfg = common.load()?;
    let t = &mut cfg.train;
    t.objective = args.objective.unwrap_or(t.objective);
    t.iterations = args.iterations.unwrap_or(t.iterations);
    t.batch_size = args.batch_size.unwrap_or(t.batch_size);
    t.lr = args.lr.unwrap_or(t.lr);
    t.eval_every = args.eval_every.unwrap_or(t.eval_every);
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let sde = cfg.sde_config()?;
    let train_set = pairs_only(match &args.data {
        Some(dir) => load_pairs(dir)?,
        None => generated_split(&cfg, "train")?,
    });
    let eval_set = pairs_only(match &args.eval_data {
        Some(dir) => load_pairs(dir)?,
        None => generated_split(&cfg, "eval")?,
    });
    let seed = cfg.train.seed;
    let model = ScoreModel::init(cfg.architecture()?, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let report = train(model, &train_set, &eval_set, cfg.train.objective, &sde, &cfg.train_params(), &mut rng)
        .context("training aborted")?;

    let loss_path = args.out.join("loss.csv");
    let mut w = csv_writer(&loss_path)?;
    w.write_record(["iteration", "objective", "loss", "psnr_eval"])?;
    for p in &report.curve {
        w.write_record([
            p.iteration.to_string(),
            p.objective.tag().to_string(),
            p.loss.to_string(),
            p.psnr_eval.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    let ckpt = args.out.join("model.ckpt");
    save_checkpoint(&ckpt, &report.model).with_context(|| format!("writing {}", ckpt.display()))?;
    if let Some(last) = report.curve.iter().rev().find_map(|p| p.psnr_eval) {
        println!("final eval psnr {last:.3} dB after {} iterations", cfg.train.iterations);
    }
    write_manifest("train", &cfg, seed, &args.out, &[loss_path, ckpt])?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Comma-separated check groups to run (default: all).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<CheckGroup>,
}

pub fn validate(common: &Common, args: &ValidateArgs) -> Result<()> {
    let cfg = common.load()?;
    let results = run_checks(&cfg, &args.only, cfg.train.seed)?;
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    println!("{:<10} {:<width$} {:<6} detail", "group", "check", "result");
    for r in &results {
        println!(
            "{:<10} {:<width$} {:<6} {}",
            r.group.name(),
            r.name,
            if r.passed { "pass" } else { "FAIL" },
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} checks passed", results.len() - failed, results.len());
    if failed > 0 {
        return Err(Failure::Checks { failed, total: results.len() }.into());
    }
    Ok(())
}
