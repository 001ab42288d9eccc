//! `make-data` and `eval`.

use crate::setup::{csv_writer, usage, write_manifest, Common};
use anyhow::{Context, Result};
use clap::Args;
use mrsde_core::io::{load_dataset, write_dataset, ManifestEntry};
use mrsde_core::model::load_checkpoint;
use mrsde_core::{
    derive_seed, initial_state, mse, psnr, restore, ssim, ExperimentConfig, PairedSample, ScoreSource, Shape,
    SolverMode, SsimParams,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// Master seed of a dataset split: `master` for training, `master + 1` for evaluation.
pub fn split_seed(master: u64, split: &str) -> u64 {
    match split {
        "eval" => master.wrapping_add(1),
        _ => master,
    }
}

pub fn split_entries(cfg: &ExperimentConfig, split: &str, count: usize) -> Result<Vec<ManifestEntry>> {
    let params = cfg.degradation()?;
    let master = split_seed(cfg.data.seed, split);
    Ok((0..count)
        .map(|k| ManifestEntry {
            id: format!("{split}_{k:04}"),
            degradation_tag: params.tag().to_string(),
            params: params.clone(),
            seed: derive_seed(master, k as u64),
            shape: cfg.data.shape,
        })
        .collect())
}

/// Pairs of a split generated in memory from the config.
pub fn generated_split(cfg: &ExperimentConfig, split: &str) -> Result<Vec<(String, PairedSample)>> {
    let count = if split == "eval" { cfg.data.eval_count } else { cfg.data.train_count };
    split_entries(cfg, split, count)?
        .into_iter()
        .map(|e| Ok((e.id.clone(), e.replay()?)))
        .collect()
}

pub fn load_pairs(dir: &Path) -> Result<Vec<(String, PairedSample)>> {
    let pairs = load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    if pairs.is_empty() {
        return Err(usage(format!("dataset {} is empty", dir.display())));
    }
    Ok(pairs.into_iter().map(|(e, p)| (e.id, p)).collect())
}

#[derive(Args, Debug)]
pub struct MakeDataArgs {
    /// Output directory; receives `train/` and `eval/` splits.
    #[arg(long)]
    pub out: PathBuf,
    /// Degradation task: noise, blur, mask or spikes.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub eval_count: Option<usize>,
}

pub fn make_data(common: &Common, args: &MakeDataArgs) -> Result<()> {
    let mut cfg = common.load()?;
    if let Some(task) = &args.task {
        cfg.data.task = task.clone();
    }
    if let Some(seed) = common.seed {
        cfg.data.seed = seed;
    }
    cfg.data.train_count = args.train_count.unwrap_or(cfg.data.train_count);
    cfg.data.eval_count = args.eval_count.unwrap_or(cfg.data.eval_count);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let mut outputs = Vec::new();
    for (split, count) in [("train", cfg.data.train_count), ("eval", cfg.data.eval_count)] {
        let dir = args.out.join(split);
        write_dataset(&dir, &split_entries(&cfg, split, count)?).with_context(|| format!("writing {}", dir.display()))?;
        println!("wrote {count} {split} pairs to {}", dir.display());
        outputs.push(dir);
    }
    write_manifest("make-data", &cfg, cfg.data.seed, &args.out, &outputs)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Dataset directory written by `make-data`; defaults to the config's generated eval split.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Metrics CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated methods: identity, exact, learned.
    #[arg(long, value_delimiter = ',', default_value = "identity,exact")]
    pub methods: Vec<String>,
    /// Trained model for the `learned` method.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "sde")]
    pub mode: SolverMode,
    /// Worker threads for per-pair work.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub id: String,
    pub task: String,
    pub method: String,
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
}

/// SSIM with the window shrunk to fit small states.
fn ssim_fitted(a: &mrsde_core::StateVec, b: &mrsde_core::StateVec) -> Result<f64> {
    let limit = match a.shape() {
        Shape::Signal(n) => n,
        Shape::Image { height, width } => height.min(width),
    };
    let mut window = SsimParams::default().window.min(limit);
    if window % 2 == 0 {
        window -= 1;
    }
    Ok(ssim(a, b, &SsimParams { window, ..SsimParams::default() })?)
}

pub fn eval(common: &Common, args: &EvalArgs) -> Result<()> {
    let cfg = common.load()?;
    let sde = cfg.sde_config()?;
    let pairs = match &args.data {
        Some(dir) => load_pairs(dir)?,
        None => generated_split(&cfg, "eval")?,
    };
    let model = match &args.checkpoint {
        Some(path) => Some(load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?),
        None => None,
    };
    for method in &args.methods {
        match method.as_str() {
            "identity" | "exact" => {}
            "learned" if model.is_some() => {}
            "learned" => return Err(usage("method `learned` needs --checkpoint")),
            other => return Err(usage(format!("unknown method `{other}`"))),
        }
    }
    if args.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let seed = cfg.train.seed;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build()?;
    let rows: Vec<MetricRow> = pool.install(|| {
        pairs
            .par_iter()
            .enumerate()
            .map(|(k, (id, pair))| -> Result<Vec<MetricRow>> {
                let mut out = Vec::new();
                for method in &args.methods {
                    let estimate = match method.as_str() {
                        "identity" => pair.mu.clone(),
                        _ => {
                            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
                            let x_t = initial_state(&pair.mu, &sde, &mut rng)?;
                            let source = match (method.as_str(), &model) {
                                ("learned", Some(m)) => ScoreSource::Learned(m),
                                _ => ScoreSource::Exact(&pair.x0),
                            };
                            restore(&x_t, &pair.mu, source, args.mode, &sde, &mut rng)
                                .with_context(|| format!("restoring {id} with {method}"))?
                                .last()
                                .clone()
                        }
                    };
                    out.push(MetricRow {
                        id: id.clone(),
                        task: pair.degradation_tag.clone(),
                        method: method.clone(),
                        psnr: psnr(&estimate, &pair.x0, 1.0)?,
                        ssim: ssim_fitted(&estimate, &pair.x0)?,
                        mse: mse(&estimate, &pair.x0)?,
                    });
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()
            .map(|v| v.into_iter().flatten().collect())
    })?;

    let mut w = csv_writer(&args.out)?;
    w.write_record(["id", "task", "method", "psnr", "ssim", "mse"])?;
    for r in &rows {
        w.write_record([
            r.id.clone(),
            r.task.clone(),
            r.method.clone(),
            r.psnr.to_string(),
            r.ssim.to_string(),
            r.mse.to_string(),
        ])?;
    }
    w.flush()?;
    for method in &args.methods {
        let picked: Vec<&MetricRow> = rows.iter().filter(|r| &r.method == method).collect();
        let n = picked.len() as f64;
        let mean = |f: fn(&MetricRow) -> f64| picked.iter().map(|r| f(r)).sum::<f64>() / n;
        println!(
            "{method:<9} psnr {:>8.3} dB  ssim {:.4}  mse {:.3e}",
            mean(|r| r.psnr.min(200.0)),
            mean(|r| r.ssim),
            mean(|r| r.mse)
        );
    }
    write_manifest("eval", &cfg, seed, &args.out, std::slice::from_ref(&args.out))?;
    Ok(())
}
