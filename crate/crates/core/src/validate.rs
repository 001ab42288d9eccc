//! Self-check suite behind `mrsde validate`: each closed form is compared
//! against an independent numerical oracle.

use crate::config::ExperimentConfig;
use crate::denoise::t_star;
use crate::error::{Error, Result};
use crate::model::ScoreModel;
use crate::objectives::{
    ddpm_reverse_mean, ml_loss_grad, ml_loss_with, noise_matching_grad, noise_matching_loss_with, LossNorm,
};
use crate::reverse::optimal_reverse_state;
use crate::schedule::{ScheduleKind, ScheduleSpec};
use crate::sde::{sample_forward, transition_stats, SdeConfig};
use crate::state::{Shape, StateVec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckGroup {
    Schedule,
    Kernel,
    Quadrature,
    Moments,
    Posterior,
    Ddpm,
    Gradients,
    Denoise,
}

impl CheckGroup {
    pub const ALL: [CheckGroup; 8] = [
        CheckGroup::Schedule,
        CheckGroup::Kernel,
        CheckGroup::Quadrature,
        CheckGroup::Moments,
        CheckGroup::Posterior,
        CheckGroup::Ddpm,
        CheckGroup::Gradients,
        CheckGroup::Denoise,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CheckGroup::Schedule => "schedule",
            CheckGroup::Kernel => "kernel",
            CheckGroup::Quadrature => "quadrature",
            CheckGroup::Moments => "moments",
            CheckGroup::Posterior => "posterior",
            CheckGroup::Ddpm => "ddpm",
            CheckGroup::Gradients => "gradients",
            CheckGroup::Denoise => "denoise",
        }
    }
}

impl std::str::FromStr for CheckGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckGroup::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown check group `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub group: CheckGroup,
    pub name: String,
    pub passed: bool,
    /// Worst observed error against the tolerance.
    pub detail: String,
}

fn check(group: CheckGroup, name: &str, worst: f64, tol: f64) -> CheckResult {
    CheckResult {
        group,
        name: name.to_string(),
        passed: worst.is_finite() && worst < tol,
        detail: format!("worst {worst:.3e} < {tol:.0e}"),
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn scalar(v: f64) -> StateVec {
    StateVec::scalar(v).expect("finite scalar")
}

/// Runs the selected groups (all when `only` is empty) against the configured SDE.
pub fn run_checks(cfg: &ExperimentConfig, only: &[CheckGroup], seed: u64) -> Result<Vec<CheckResult>> {
    let sde = cfg.sde_config()?;
    let groups: Vec<CheckGroup> = if only.is_empty() { CheckGroup::ALL.to_vec() } else { only.to_vec() };
    let mut results = Vec::new();
    for group in groups {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ group as u64);
        results.extend(match group {
            CheckGroup::Schedule => schedule_checks(&sde),
            CheckGroup::Kernel => kernel_checks(&sde, &mut rng)?,
            CheckGroup::Quadrature => quadrature_checks(&sde, &mut rng)?,
            CheckGroup::Moments => moment_checks(&sde, &mut rng)?,
            CheckGroup::Posterior => posterior_checks(&sde, &mut rng)?,
            CheckGroup::Ddpm => ddpm_checks(&mut rng)?,
            CheckGroup::Gradients => gradient_checks(cfg, &sde, &mut rng)?,
            CheckGroup::Denoise => denoise_checks(&sde)?,
        });
    }
    Ok(results)
}

fn schedule_checks(sde: &SdeConfig) -> Vec<CheckResult> {
    let g = CheckGroup::Schedule;
    let t = sde.steps();
    let delta = sde.schedule().delta;
    let terminal = rel_err((-sde.theta_bar(t)).exp(), delta);
    let ratio = (1..=t)
        .filter(|&i| sde.theta(i) > 0.0)
        .map(|i| rel_err(sde.sigma_sq(i) / sde.theta(i), 2.0 * sde.lambda_sq()))
        .fold(0.0, f64::max);
    let descents = sde.theta_bars().windows(2).filter(|w| w[1] < w[0]).count();
    let negative = sde.thetas().iter().filter(|v| **v < 0.0).count();
    vec![
        check(g, "terminal decay exp(-theta_bar_T) = delta", terminal, 1e-10),
        check(g, "sigma^2 / theta = 2 lambda^2", ratio, 1e-14),
        check(g, "theta_bar non-decreasing, theta >= 0", (descents + negative) as f64, 0.5),
    ]
}

fn random_steps<R: Rng>(t: usize, rng: &mut R) -> (usize, usize, usize) {
    let mut v = [rng.random_range(0..=t), rng.random_range(0..=t), rng.random_range(0..=t)];
    v.sort_unstable();
    (v[0], v[1], v[2])
}

fn kernel_checks<R: Rng>(sde: &SdeConfig, rng: &mut R) -> Result<Vec<CheckResult>> {
    let g = CheckGroup::Kernel;
    let lambda_sq = sde.lambda_sq();
    let (mut ck, mut bound) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let (s, u, t) = random_steps(sde.steps(), rng);
        let x = scalar(rng.random_range(-1.0..1.0));
        let mu = scalar(rng.random_range(-1.0..1.0));
        let direct = transition_stats(&x, s, t, &mu, sde)?;
        let first = transition_stats(&x, s, u, &mu, sde)?;
        let second = transition_stats(&first.mean, u, t, &mu, sde)?;
        // variance of a linear-Gaussian composition: decay^2 * v_{s:u} + v_{u:t}
        let decay = (-(sde.theta_bar(t) - sde.theta_bar(u))).exp();
        let composed = decay * decay * first.variance + second.variance;
        let scale = direct.mean.as_slice()[0].abs().max(1e-3);
        ck = ck.max((second.mean.as_slice()[0] - direct.mean.as_slice()[0]).abs() / scale);
        if direct.variance > 0.0 {
            ck = ck.max(rel_err(composed, direct.variance));
        }
        if direct.variance < 0.0 || direct.variance > lambda_sq {
            bound = bound.max(1.0);
        }
    }
    Ok(vec![
        check(g, "Chapman-Kolmogorov composition", ck, 1e-10),
        check(g, "0 <= v_{s:t} <= lambda^2", bound, 0.5),
    ])
}

/// Trapezoidal quadrature of `int_s^t sigma_z^2 exp(-2 theta_bar_{z:t}) dz`,
/// with `theta` constant on each step interval and `n` subintervals in total.
pub fn quadrature_variance(sde: &SdeConfig, s: usize, t: usize, n: usize) -> f64 {
    if s == t {
        return 0.0;
    }
    let per = (n / (t - s)).max(1);
    let dt = sde.dt();
    let bar_t = sde.theta_bar(t);
    let mut total = 0.0;
    for j in s + 1..=t {
        let theta = sde.theta(j);
        let sigma_sq = 2.0 * sde.lambda_sq() * theta;
        let h = dt / per as f64;
        let integrand = |k: usize| {
            let bar_z = sde.theta_bar(j - 1) + theta * h * k as f64;
            sigma_sq * (-2.0 * (bar_t - bar_z)).exp()
        };
        let inner: f64 = (1..per).map(integrand).sum();
        total += h * (0.5 * integrand(0) + inner + 0.5 * integrand(per));
    }
    total
}

fn quadrature_checks<R: Rng>(sde: &SdeConfig, rng: &mut R) -> Result<Vec<CheckResult>> {
    let g = CheckGroup::Quadrature;
    let mut out = Vec::new();
    for kind in [ScheduleKind::Constant, ScheduleKind::Linear, ScheduleKind::Cosine] {
        let spec = ScheduleSpec {
            kind,
            ..*sde.schedule()
        };
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let lambda_sq = rng.random_range(1e-4..0.1);
            let cfg = SdeConfig::new(lambda_sq, spec)?;
            let (s, _, t) = random_steps(cfg.steps(), rng);
            let (s, t) = if s == t { (s.saturating_sub(1), t.max(1)) } else { (s, t) };
            let (s, t) = if s == t { (0, cfg.steps()) } else { (s, t) };
            worst = worst.max(rel_err(cfg.kernel_variance(s, t), quadrature_variance(&cfg, s, t, 10_000)));
        }
        out.push(check(g, &format!("v_{{s:t}} vs trapezoid ({kind:?})"), worst, 1e-6));
    }
    Ok(out)
}

fn moment_checks<R: Rng>(sde: &SdeConfig, rng: &mut R) -> Result<Vec<CheckResult>> {
    let g = CheckGroup::Moments;
    let n = 100_000;
    let x0 = scalar(0.8);
    let mu = scalar(0.2);
    let mut worst = 0.0f64;
    let t = sde.steps();
    for i in [t / 10, t / 2, t].into_iter().map(|i| i.max(1)) {
        let stats = transition_stats(&x0, 0, i, &mu, sde)?;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_forward(&x0, &mu, i, sde, rng).map(|(x, _)| x.as_slice()[0]))
            .collect::<Result<_>>()?;
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let m = stats.mean.as_slice()[0];
        let se_mean = (stats.variance / n as f64).sqrt();
        let se_var = stats.variance * (2.0 / (n - 1) as f64).sqrt();
        worst = worst.max((mean - m).abs() / se_mean).max((var - stats.variance).abs() / se_var);
    }
    Ok(vec![check(g, "Monte Carlo mean/variance in standard errors", worst, 4.0)])
}

/// Negative log of `p(x_i | y) p(y | x_0)` as a function of `y = x_{i-1}`.
fn bayes_nll(y: f64, x_i: f64, i: usize, x0: f64, mu: f64, sde: &SdeConfig) -> f64 {
    let local = sde.step_decay(i);
    let forward_mean = mu + (y - mu) * (-local).exp();
    let forward_var = sde.kernel_variance(i - 1, i);
    let prior_mean = mu + (x0 - mu) * (-sde.theta_bar(i - 1)).exp();
    let prior_var = sde.variance(i - 1);
    (x_i - forward_mean).powi(2) / (2.0 * forward_var) + (y - prior_mean).powi(2) / (2.0 * prior_var)
}

/// Golden-section minimum of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

fn posterior_checks<R: Rng>(sde: &SdeConfig, rng: &mut R) -> Result<Vec<CheckResult>> {
    let g = CheckGroup::Posterior;
    let (mut argmin, mut first) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let i = rng.random_range(2..=sde.steps());
        let (x_i, x0, mu) = (rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let got = optimal_reverse_state(&scalar(x_i), i, &scalar(x0), &scalar(mu), sde)?.as_slice()[0];
        let oracle = golden_section(|y| bayes_nll(y, x_i, i, x0, mu, sde), -5.0, 5.0, 1e-10);
        argmin = argmin.max((got - oracle).abs());
        let at_one = optimal_reverse_state(&scalar(x_i), 1, &scalar(x0), &scalar(mu), sde)?.as_slice()[0];
        first = first.max((at_one - x0).abs());
    }
    Ok(vec![
        check(g, "optimal reverse state vs Bayes NLL argmin", argmin, 1e-4),
        check(g, "i = 1 returns x_0", first, 1e-12),
    ])
}

fn ddpm_checks<R: Rng>(rng: &mut R) -> Result<Vec<CheckResult>> {
    let g = CheckGroup::Ddpm;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let t = rng.random_range(2..20);
        let alphas: Vec<f64> = (0..t).map(|_| rng.random_range(0.5..0.999)).collect();
        let (x_t, x0) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let got = ddpm_reverse_mean(&scalar(x_t), &scalar(x0), &alphas)?.as_slice()[0];
        // product of q(x_t | x_{t-1}) and q(x_{t-1} | x_0) as precisions
        let a = alphas[t - 1];
        let abar_prev: f64 = alphas[..t - 1].iter().product();
        let beta = 1.0 - a;
        let precision = a / beta + 1.0 / (1.0 - abar_prev);
        let oracle = (a.sqrt() * x_t / beta + abar_prev.sqrt() * x0 / (1.0 - abar_prev)) / precision;
        worst = worst.max((got - oracle).abs());
    }
    Ok(vec![check(g, "reverse mean vs Gaussian product posterior", worst, 1e-12)])
}

fn gradient_checks<R: Rng>(cfg: &ExperimentConfig, sde: &SdeConfig, rng: &mut R) -> Result<Vec<CheckResult>> {
    let g = CheckGroup::Gradients;
    let arch = cfg.architecture()?;
    let mut model = ScoreModel::init(arch.clone(), rng);
    for p in model.params_mut() {
        *p += rng.random_range(-0.05..0.05);
    }
    let shape = match arch.patch {
        Shape::Signal(n) => Shape::Signal(n + n / 2),
        Shape::Image { height, width } => Shape::Image {
            height: height + height / 2,
            width: width + width / 2,
        },
    };
    let x0 = StateVec::new((0..shape.len()).map(|_| rng.random::<f64>()).collect(), shape)?;
    let mu = StateVec::new((0..shape.len()).map(|_| rng.random::<f64>()).collect(), shape)?;
    let i = rng.random_range(1..=sde.steps());
    let (x_i, eps) = sample_forward(&x0, &mu, i, sde, rng)?;
    let weights = StateVec::new((0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect(), shape)?;
    let loss = |m: &ScoreModel| -> Result<f64> {
        let (out, _) = m.forward_state(&x_i, &mu, i, sde.steps())?;
        Ok(out.as_slice().iter().zip(weights.as_slice()).map(|(a, b)| a * b).sum())
    };
    let (_, cache) = model.forward_state(&x_i, &mu, i, sde.steps())?;
    let grad = model.backward_state(&cache, &weights)?;
    let h = 1e-5;
    let mut model_worst = 0.0f64;
    for _ in 0..64 {
        let k = rng.random_range(0..grad.len());
        let orig = model.params()[k];
        model.params_mut()[k] = orig + h;
        let plus = loss(&model)?;
        model.params_mut()[k] = orig - h;
        let minus = loss(&model)?;
        model.params_mut()[k] = orig;
        let fd = (plus - minus) / (2.0 * h);
        model_worst = model_worst.max((fd - grad[k]).abs() / fd.abs().max(1e-2));
    }

    // loss gradients in eps_hat, away from the L1 kinks
    let eps_hat = StateVec::new((0..shape.len()).map(|_| rng.random_range(-2.0..2.0)).collect(), shape)?;
    let mut loss_worst = 0.0f64;
    for norm in [LossNorm::L1, LossNorm::L2] {
        let nm = noise_matching_grad(&eps_hat, &eps, 1.0, norm)?;
        let ml = ml_loss_grad(&x_i, i, &eps_hat, &x0, &mu, sde, 1.0, norm)?;
        for k in 0..shape.len() {
            let bump = |d: f64| {
                let mut v = eps_hat.as_slice().to_vec();
                v[k] += d;
                StateVec::new(v, shape)
            };
            let (up, down) = (bump(h)?, bump(-h)?);
            let fd_nm = (noise_matching_loss_with(&up, &eps, 1.0, norm)? - noise_matching_loss_with(&down, &eps, 1.0, norm)?) / (2.0 * h);
            let fd_ml = (ml_loss_with(&x_i, i, &up, &x0, &mu, sde, 1.0, norm)?
                - ml_loss_with(&x_i, i, &down, &x0, &mu, sde, 1.0, norm)?)
                / (2.0 * h);
            loss_worst = loss_worst
                .max(rel_err(nm.as_slice()[k], fd_nm))
                .max(rel_err(ml.as_slice()[k], fd_ml));
        }
    }
    Ok(vec![
        check(g, "network gradient vs finite differences (64 params)", model_worst, 1e-4),
        check(g, "loss gradients vs finite differences", loss_worst, 1e-4),
    ])
}

fn denoise_checks(sde: &SdeConfig) -> Result<Vec<CheckResult>> {
    let g = CheckGroup::Denoise;
    let misses = (0..=sde.steps())
        .filter(|&i| t_star(sde.variance(i).sqrt(), sde).ok() != Some(i))
        .count();
    let lambda = sde.lambda_sq().sqrt();
    let mut prev = 0;
    let mut reversals = 0;
    for k in 0..1000 {
        let idx = t_star(lambda * k as f64 / 1000.0, sde)?;
        if idx < prev {
            reversals += 1;
        }
        prev = idx;
    }
    Ok(vec![
        check(g, "t_star(sqrt(v_i)) = i on the grid", misses as f64, 0.5),
        check(g, "t_star monotone in sigma", reversals as f64, 0.5),
    ])
}
