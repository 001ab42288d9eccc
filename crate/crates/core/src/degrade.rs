//! Synthetic degradation operators and clean toy data.
//!
//! Every operator is a deterministic function of its inputs and RNG stream,
//! so a pair can be regenerated from `(shape, degradation, seed)` alone.

use crate::error::{Error, Result};
use crate::sde::PairedSample;
use crate::state::{Shape, StateVec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// `mu = x0 + sigma * xi`, unclipped.
pub fn add_gaussian_noise<R: Rng + ?Sized>(x0: &StateVec, sigma: f64, rng: &mut R) -> Result<StateVec> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let noise = StateVec::standard_normal(x0.shape(), rng);
    x0.zip_map(&noise, |x, z| x + sigma * z)
}

/// Mirror index into `0..n` without repeating the edge sample.
pub fn reflect(index: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let k = index.rem_euclid(period);
    if k < n as isize {
        k as usize
    } else {
        (period - k) as usize
    }
}

pub fn gaussian_kernel(radius: usize, sigma: f64) -> Vec<f64> {
    let w: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn convolve_rows(data: &[f64], rows: usize, cols: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; data.len()];
    for row in 0..rows {
        for col in 0..cols {
            out[row * cols + col] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * data[row * cols + reflect(col as isize + k as isize - r, cols)])
                .sum();
        }
    }
    out
}

fn convolve_cols(data: &[f64], rows: usize, cols: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; data.len()];
    for row in 0..rows {
        for col in 0..cols {
            out[row * cols + col] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * data[reflect(row as isize + k as isize - r, rows) * cols + col])
                .sum();
        }
    }
    out
}

/// Separable normalized Gaussian blur with reflection at the borders.
pub fn gaussian_blur(x0: &StateVec, radius: usize, kernel_sigma: f64) -> Result<StateVec> {
    if radius < 1 {
        return Err(Error::InvalidArgument("blur radius must be >= 1".into()));
    }
    if kernel_sigma.is_nan() || kernel_sigma <= 0.0 {
        return Err(Error::InvalidArgument("blur sigma must be positive".into()));
    }
    let kernel = gaussian_kernel(radius, kernel_sigma);
    let (rows, cols) = x0.shape().dims();
    let mut data = convolve_rows(x0.as_slice(), rows, cols, &kernel);
    if rows > 1 {
        data = convolve_cols(&data, rows, cols, &kernel);
    }
    StateVec::new(data, x0.shape())
}

/// Axis-aligned rectangle; signals use `row = 0, height = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl MaskSpec {
    pub fn empty() -> Self {
        Self { row: 0, col: 0, height: 0, width: 0 }
    }

    pub fn full(shape: Shape) -> Self {
        let (height, width) = shape.dims();
        Self { row: 0, col: 0, height, width }
    }

    /// Random rectangle covering between a quarter and a half of each dimension.
    pub fn random<R: Rng + ?Sized>(shape: Shape, rng: &mut R) -> Self {
        let (rows, cols) = shape.dims();
        let span = |n: usize, rng: &mut R| -> (usize, usize) {
            let lo = (n / 4).max(1);
            let hi = (n / 2).max(lo);
            let len = rng.random_range(lo..=hi);
            let start = rng.random_range(0..=n - len);
            (start, len)
        };
        let (row, height) = if rows == 1 { (0, 1) } else { span(rows, rng) };
        let (col, width) = span(cols, rng);
        Self { row, col, height, width }
    }

    fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row && row < self.row + self.height && col >= self.col && col < self.col + self.width
    }
}

/// Sets every masked entry to `fill_value`.
pub fn mask_region(x0: &StateVec, mask: &MaskSpec, fill_value: f64) -> Result<StateVec> {
    let (rows, cols) = x0.shape().dims();
    if mask.row + mask.height > rows || mask.col + mask.width > cols {
        return Err(Error::MaskOutOfBounds(format!("{mask:?} in {}", x0.shape())));
    }
    let data = x0
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, &v)| if mask.contains(k / cols, k % cols) { fill_value } else { v })
        .collect();
    StateVec::new(data, x0.shape())
}

const STREAK_LEN: usize = 3;

/// Sparse positive spikes; on images each spike is a short vertical streak.
/// Each entry starts a spike independently with probability `density`.
pub fn structured_spikes<R: Rng + ?Sized>(
    x0: &StateVec,
    density: f64,
    amplitude: f64,
    rng: &mut R,
) -> Result<StateVec> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidArgument(format!("spike density must lie in [0, 1], got {density}")));
    }
    let (rows, cols) = x0.shape().dims();
    let streak = if rows == 1 { 1 } else { STREAK_LEN };
    let mut data = x0.as_slice().to_vec();
    for k in 0..data.len() {
        if rng.random::<f64>() < density {
            let height = amplitude * (0.5 + 0.5 * rng.random::<f64>());
            let (row, col) = (k / cols, k % cols);
            for r in row..(row + streak).min(rows) {
                data[r * cols + col] += height;
            }
        }
    }
    StateVec::new(data, x0.shape())
}

/// A degradation operator with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Degradation {
    Noise { sigma: f64 },
    Blur { radius: usize, sigma: f64 },
    /// `mask = None` draws a random rectangle from the pair's RNG stream.
    Mask { mask: Option<MaskSpec>, fill: f64 },
    Spikes { density: f64, amplitude: f64 },
}

impl Degradation {
    pub fn tag(&self) -> &'static str {
        match self {
            Degradation::Noise { .. } => "noise",
            Degradation::Blur { .. } => "blur",
            Degradation::Mask { .. } => "mask",
            Degradation::Spikes { .. } => "spikes",
        }
    }

    /// Default toy-scale parameters for a task name.
    pub fn for_task(task: &str) -> Result<Self> {
        Ok(match task {
            "noise" => Degradation::Noise { sigma: 25.0 / 255.0 },
            "blur" => Degradation::Blur { radius: 3, sigma: 2.0 },
            "mask" => Degradation::Mask { mask: None, fill: 0.5 },
            "spikes" => Degradation::Spikes { density: 0.08, amplitude: 0.5 },
            other => return Err(Error::InvalidArgument(format!("unknown task `{other}`"))),
        })
    }

    pub fn apply<R: Rng + ?Sized>(&self, x0: &StateVec, rng: &mut R) -> Result<StateVec> {
        match self {
            Degradation::Noise { sigma } => add_gaussian_noise(x0, *sigma, rng),
            Degradation::Blur { radius, sigma } => gaussian_blur(x0, *radius, *sigma),
            Degradation::Mask { mask, fill } => {
                let mask = mask.unwrap_or_else(|| MaskSpec::random(x0.shape(), rng));
                mask_region(x0, &mask, *fill)
            }
            Degradation::Spikes { density, amplitude } => structured_spikes(x0, *density, *amplitude, rng),
        }
    }
}

/// Smooth random signal in roughly `[0.15, 0.85]`.
pub fn smooth_signal<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<StateVec> {
    let comps: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.5..3.0),
                rng.random_range(0.0..TAU),
                rng.random_range(0.3..1.0),
            )
        })
        .collect();
    let norm: f64 = comps.iter().map(|c| c.2).sum();
    let offset = rng.random_range(-0.1..0.1);
    let data = (0..len)
        .map(|k| {
            let t = k as f64 / len as f64;
            let v: f64 = comps.iter().map(|(f, p, a)| a * (TAU * f * t + p).sin()).sum();
            0.5 + offset + 0.3 * v / norm
        })
        .collect();
    StateVec::signal(data)
}

/// Smooth gradient plus a few flat rectangles and discs, values in `[0.1, 0.9]`.
pub fn toy_image<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Result<StateVec> {
    let (gx, gy, base) = (
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
        rng.random_range(0.35..0.65),
    );
    let mut data: Vec<f64> = (0..height * width)
        .map(|k| {
            let (r, c) = ((k / width) as f64 / height as f64, (k % width) as f64 / width as f64);
            base + gx * (c - 0.5) + gy * (r - 0.5)
        })
        .collect();
    for _ in 0..rng.random_range(1..=3) {
        let value = rng.random_range(0.1..0.9);
        let (cr, cc) = (rng.random_range(0.0..height as f64), rng.random_range(0.0..width as f64));
        let radius = rng.random_range(0.15..0.35) * height.min(width) as f64;
        let disc = rng.random::<bool>();
        for (k, v) in data.iter_mut().enumerate() {
            let (dr, dc) = ((k / width) as f64 - cr, (k % width) as f64 - cc);
            let inside = if disc {
                dr * dr + dc * dc <= radius * radius
            } else {
                dr.abs() <= radius && dc.abs() <= radius
            };
            if inside {
                *v = value;
            }
        }
    }
    for v in data.iter_mut() {
        *v = v.clamp(0.1, 0.9);
    }
    StateVec::image(height, width, data)
}

/// Clean sample for a shape: smooth signal or toy image.
pub fn clean_sample<R: Rng + ?Sized>(shape: Shape, rng: &mut R) -> Result<StateVec> {
    match shape {
        Shape::Signal(n) => smooth_signal(n, rng),
        Shape::Image { height, width } => toy_image(height, width, rng),
    }
}

/// Regenerates a pair from its seed: the clean sample first, then the degradation.
pub fn generate_pair(shape: Shape, degradation: &Degradation, seed: u64) -> Result<PairedSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = clean_sample(shape, &mut rng)?;
    let mu = degradation.apply(&x0, &mut rng)?;
    PairedSample::new(x0, mu, degradation.tag())
}

/// Per-sample seed derived from a master seed (splitmix64).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn generate_pairs(shape: Shape, degradation: &Degradation, master_seed: u64, count: usize) -> Result<Vec<PairedSample>> {
    (0..count)
        .map(|k| generate_pair(shape, degradation, derive_seed(master_seed, k as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(seed: u64) -> StateVec {
        toy_image(16, 16, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let x = image(0);
        assert_eq!(add_gaussian_noise(&x, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap(), x);
    }

    #[test]
    fn noise_std_monte_carlo() {
        let x = StateVec::zeros(Shape::Image { height: 400, width: 250 });
        let sigma = 0.1;
        let mu = add_gaussian_noise(&x, sigma, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let n = mu.len() as f64;
        let var = mu.as_slice().iter().map(|v| v * v).sum::<f64>() / n;
        let std = var.sqrt();
        // standard error of the sample std is about sigma / sqrt(2n)
        assert!((std - sigma).abs() < 3.0 * sigma / (2.0 * n).sqrt(), "{std}");
    }

    #[test]
    fn blur_preserves_constants() {
        let x = StateVec::filled(Shape::Image { height: 9, width: 13 }, 0.37);
        let b = gaussian_blur(&x, 3, 1.2).unwrap();
        assert!(b.as_slice().iter().all(|v| (v - 0.37).abs() < 1e-15));
        assert!(gaussian_blur(&x, 0, 1.0).is_err());
    }

    #[test]
    fn blur_of_impulse_is_kernel() {
        let mut data = vec![0.0; 21 * 21];
        data[10 * 21 + 10] = 1.0;
        let x = StateVec::image(21, 21, data).unwrap();
        let b = gaussian_blur(&x, 2, 1.0).unwrap();
        let k = gaussian_kernel(2, 1.0);
        for dr in 0..5 {
            for dc in 0..5 {
                let got = b.get(8 + dr, 8 + dc);
                assert!((got - k[dr] * k[dc]).abs() < 1e-15);
            }
        }
        let total: f64 = b.as_slice().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(9, 5), 1);
        assert_eq!(reflect(3, 1), 0);
    }

    #[test]
    fn masks() {
        let x = image(3);
        assert_eq!(mask_region(&x, &MaskSpec::empty(), 0.5).unwrap(), x);
        let full = mask_region(&x, &MaskSpec::full(x.shape()), 0.5).unwrap();
        assert!(full.as_slice().iter().all(|v| *v == 0.5));
        let bad = MaskSpec { row: 10, col: 0, height: 8, width: 2 };
        assert!(matches!(mask_region(&x, &bad, 0.5), Err(Error::MaskOutOfBounds(_))));
    }

    #[test]
    fn zero_density_spikes_is_identity() {
        let x = image(4);
        assert_eq!(structured_spikes(&x, 0.0, 0.5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), x);
        assert!(structured_spikes(&x, 1.5, 0.5, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn spike_count_matches_density() {
        let n = 100_000;
        let x = StateVec::zeros(Shape::Signal(n));
        let density = 0.05;
        let y = structured_spikes(&x, density, 1.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let count = y.as_slice().iter().filter(|v| **v > 0.0).count() as f64;
        let expected = density * n as f64;
        let se = (n as f64 * density * (1.0 - density)).sqrt();
        assert!((count - expected).abs() < 4.0 * se, "{count}");
    }

    #[test]
    fn pairs_replay_exactly() {
        for task in ["noise", "blur", "mask", "spikes"] {
            let d = Degradation::for_task(task).unwrap();
            let shape = Shape::Image { height: 16, width: 16 };
            let a = generate_pair(shape, &d, 77).unwrap();
            let b = generate_pair(shape, &d, 77).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.x0.shape(), a.mu.shape());
            assert_eq!(a.degradation_tag, task);
        }
    }
}
