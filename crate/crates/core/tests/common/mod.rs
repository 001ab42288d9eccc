//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use mrsde_core::{SdeConfig, StateVec};
use std::io::Write;

/// Writes a line straight to stderr so it shows even when test output is captured.
pub fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

/// Prints the criterion line and returns whether it passed.
pub fn verdict(id: usize, name: &str, passed: bool, detail: &str) -> bool {
    report(&format!(
        "[acceptance] criterion {id:>2} {:<4} {name}: {detail}",
        if passed { "PASS" } else { "FAIL" }
    ));
    passed
}

pub fn scalar(v: f64) -> StateVec {
    StateVec::scalar(v).unwrap()
}

pub fn first(v: &StateVec) -> f64 {
    v.as_slice()[0]
}

/// Trapezoidal rule for `int_s^t sigma_z^2 exp(-2 int_z^t theta) dz` where
/// `theta` is constant on each interval `(j-1, j] * dt`. The `n` points are
/// spread evenly over the `t - s` intervals.
pub fn trapezoid_variance(thetas: &[f64], dt: f64, lambda_sq: f64, s: usize, t: usize, n: usize) -> f64 {
    if s == t {
        return 0.0;
    }
    let per = (n / (t - s)).max(2);
    // cumulative integral of theta from step j to t
    let mut tail = vec![0.0; t + 1];
    for j in (s..t).rev() {
        tail[j] = tail[j + 1] + thetas[j + 1] * dt;
    }
    let mut total = 0.0;
    for j in s + 1..=t {
        let th = thetas[j];
        let h = dt / per as f64;
        let f = |k: usize| {
            // remaining decay from the point (j-1)*dt + k*h up to t
            let rest = tail[j] + th * (dt - k as f64 * h);
            2.0 * lambda_sq * th * (-2.0 * rest).exp()
        };
        let mut acc = 0.5 * (f(0) + f(per));
        for k in 1..per {
            acc += f(k);
        }
        total += acc * h;
    }
    total
}

pub fn golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    while b - a > 1e-11 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// `-log p(x_i | y) - log p(y | x_0)` up to constants, from the Gaussian kernels.
pub fn reverse_nll(y: f64, x_i: f64, x0: f64, mu: f64, i: usize, cfg: &SdeConfig) -> f64 {
    let lam = cfg.lambda_sq();
    let step = cfg.theta(i) * cfg.dt();
    let bar_prev: f64 = (1..i).map(|j| cfg.theta(j) * cfg.dt()).sum();
    let m_fwd = mu + (y - mu) * (-step).exp();
    let v_fwd = lam * (1.0 - (-2.0 * step).exp());
    let m_prior = mu + (x0 - mu) * (-bar_prev).exp();
    let v_prior = lam * (1.0 - (-2.0 * bar_prev).exp());
    0.5 * (x_i - m_fwd).powi(2) / v_fwd + 0.5 * (y - m_prior).powi(2) / v_prior
}

/// Stationary point of `reverse_nll` from its linear first-order condition.
pub fn reverse_posterior_linear(x_i: f64, x0: f64, mu: f64, i: usize, cfg: &SdeConfig) -> f64 {
    let lam = cfg.lambda_sq();
    let step = cfg.theta(i) * cfg.dt();
    let bar_prev = cfg.theta_bar(i - 1);
    let e = (-step).exp();
    let v_fwd = lam * (1.0 - e * e);
    let v_prior = lam * (1.0 - (-2.0 * bar_prev).exp());
    let m_prior = mu + (x0 - mu) * (-bar_prev).exp();
    let lhs = e * e / v_fwd + 1.0 / v_prior;
    let rhs = (x_i - mu + mu * e) * e / v_fwd + m_prior / v_prior;
    rhs / lhs
}

/// DDPM posterior mean as the precision-weighted product of
/// `q(x_t | x_{t-1}) = N(sqrt(a_t) x_{t-1}, 1 - a_t)` and `q(x_{t-1} | x_0)`.
pub fn ddpm_product_mean(x_t: f64, x0: f64, alphas: &[f64]) -> f64 {
    let t = alphas.len();
    let a = alphas[t - 1];
    let abar_prev: f64 = alphas[..t - 1].iter().product();
    let prior_var = 1.0 - abar_prev;
    let lik_prec = a / (1.0 - a);
    if prior_var == 0.0 {
        return x0;
    }
    (x_t * a.sqrt() / (1.0 - a) + abar_prev.sqrt() * x0 / prior_var) / (lik_prec + 1.0 / prior_var)
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

pub fn sample_std(xs: &[f64]) -> f64 {
    mean_var(xs).1.sqrt()
}

pub fn mse(a: &StateVec, b: &StateVec) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

pub fn psnr(a: &StateVec, b: &StateVec) -> f64 {
    -10.0 * mse(a, b).log10()
}

/// Central finite difference with step `h`.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Direct 2-D convolution with a separable-product kernel and mirror boundary.
pub fn conv2d_direct(data: &[f64], rows: usize, cols: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mirror = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        while i < 0 || i >= n {
            i = if i < 0 { -i } else { 2 * (n - 1) - i };
        }
        i as usize
    };
    let mut out = vec![0.0; rows * cols];
    for y in 0..rows {
        for x in 0..cols {
            let mut acc = 0.0;
            for (dy, ky) in kernel.iter().enumerate() {
                for (dx, kx) in kernel.iter().enumerate() {
                    let yy = mirror(y as isize + dy as isize - r, rows);
                    let xx = mirror(x as isize + dx as isize - r, cols);
                    acc += ky * kx * data[yy * cols + xx];
                }
            }
            out[y * cols + x] = acc;
        }
    }
    out
}
