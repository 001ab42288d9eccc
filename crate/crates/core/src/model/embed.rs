use std::f64::consts::PI;

/// Sinusoidal features of `i / T`: `sin(w_k u), cos(w_k u)` with `w_k = pi * 2^k / 2`.
pub fn time_embedding(i: usize, steps: usize, dim: usize) -> Vec<f64> {
    let u = i as f64 / steps.max(1) as f64;
    (0..dim / 2)
        .flat_map(|k| {
            let w = PI * (1u64 << k) as f64 / 2.0;
            [(w * u).sin(), (w * u).cos()]
        })
        .collect()
}
