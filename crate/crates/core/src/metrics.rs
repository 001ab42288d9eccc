//! Distortion metrics: MSE, PSNR and SSIM.

use crate::error::{Error, Result};
use crate::state::{Shape, StateVec};

pub fn mse(a: &StateVec, b: &StateVec) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// `10 log10(peak^2 / MSE)`, `+inf` for identical inputs.
pub fn psnr(a: &StateVec, b: &StateVec, peak: f64) -> Result<f64> {
    let err = mse(a, b)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / err).log10())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub peak: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            peak: 1.0,
        }
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let centre = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size)
        .map(|k| {
            let d = k as f64 - centre;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Mean SSIM over every window position fully inside the state.
/// Images use an `n x n` Gaussian window, signals a length-`n` one.
pub fn ssim(a: &StateVec, b: &StateVec, params: &SsimParams) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let n = params.window;
    let (rows, cols) = a.shape().dims();
    let (win_rows, win_cols) = match a.shape() {
        Shape::Signal(_) => (1, n),
        Shape::Image { .. } => (n, n),
    };
    if rows < win_rows || cols < win_cols || n == 0 {
        return Err(Error::TooSmall {
            shape: a.shape(),
            window: n,
        });
    }
    let g = gaussian_window(n, params.sigma);
    let row_weights: Vec<f64> = if win_rows == 1 { vec![1.0] } else { g.clone() };
    let c1 = (params.k1 * params.peak).powi(2);
    let c2 = (params.k2 * params.peak).powi(2);

    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=rows - win_rows {
        for q0 in 0..=cols - win_cols {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (dr, wr) in row_weights.iter().enumerate() {
                for (dc, wc) in g.iter().enumerate() {
                    let w = wr * wc;
                    let x = a.get(r0 + dr, q0 + dc);
                    let y = b.get(r0 + dr, q0 + dc);
                    ma += w * x;
                    mb += w * y;
                    saa += w * x * x;
                    sbb += w * y * y;
                    sab += w * x * y;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}
