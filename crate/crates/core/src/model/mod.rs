//! A small fully connected noise network `eps(x_i, mu, i)` with hand-written
//! reverse-mode gradients.
//!
//! The network works on fixed-size patches; full states are covered by
//! non-overlapping tiles with reflection padding at the far edges. The state
//! enters as the scaled residual `(x_i - mu) * input_scale` next to `mu`
//! itself, which spans the same inputs as `(x_i, mu)`.

mod adam;
mod checkpoint;
mod embed;
mod train;

pub use adam::OptimizerState;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use embed::time_embedding;
pub use train::{evaluate, train, EVAL_PSNR_FLOOR, CurvePoint, TrainParams, TrainReport};

use crate::degrade::reflect;
use crate::error::{Error, Result};
use crate::reverse::NoisePredictor;
use crate::state::{Shape, StateVec};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub patch: Shape,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    /// Multiplies `x_i - mu`; `1 / lambda` puts the residual on the noise scale.
    pub input_scale: f64,
}

impl Architecture {
    pub fn new(patch: Shape, embed_dim: usize, hidden: Vec<usize>) -> Result<Self> {
        if patch.is_empty() {
            return Err(Error::InvalidConfig("patch must not be empty".into()));
        }
        if !embed_dim.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("time embedding size must be even, got {embed_dim}")));
        }
        if hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden layers must be non-empty".into()));
        }
        Ok(Self {
            patch,
            embed_dim,
            hidden,
            input_scale: 1.0,
        })
    }

    pub fn with_input_scale(mut self, input_scale: f64) -> Result<Self> {
        if !(input_scale > 0.0 && input_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("input scale must be positive, got {input_scale}")));
        }
        self.input_scale = input_scale;
        Ok(self)
    }

    /// Length-32 signal patches, 16 embedding features, two hidden layers of 256.
    pub fn signal_default() -> Self {
        Self::new(Shape::Signal(32), 16, vec![256, 256]).expect("valid default")
    }

    /// 8x8 image patches, otherwise as [`Architecture::signal_default`].
    pub fn image_default() -> Self {
        Self::new(Shape::Image { height: 8, width: 8 }, 16, vec![256, 256]).expect("valid default")
    }

    pub fn patch_len(&self) -> usize {
        self.patch.len()
    }

    pub fn input_dim(&self) -> usize {
        2 * self.patch_len() + self.embed_dim
    }

    pub fn output_dim(&self) -> usize {
        self.patch_len()
    }

    /// `(fan_in, fan_out)` of every dense layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim();
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim()));
        dims
    }

    /// Offsets of each layer's weights (row-major `out x in`) followed by its biases.
    pub fn layout(&self) -> Vec<LayerSlot> {
        let mut offset = 0;
        self.layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let slot = LayerSlot {
                    fan_in,
                    fan_out,
                    weights: offset,
                    biases: offset + fan_in * fan_out,
                };
                offset = slot.biases + fan_out;
                slot
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSlot {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub biases: usize,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// SiLU, `z * sigmoid(z)`: a smooth ramp.
fn activate(z: f64) -> f64 {
    z * sigmoid(z)
}

fn activate_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// Activations from one patch forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchCache {
    input: Vec<f64>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Outputs of each hidden layer.
    post: Vec<Vec<f64>>,
}

/// Placement of one tile within a state.
#[derive(Clone, Debug, PartialEq)]
struct Tile {
    row: usize,
    col: usize,
    cache: PatchCache,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateCache {
    shape: Shape,
    tiles: Vec<Tile>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreModel {
    arch: Architecture,
    params: Vec<f64>,
}

impl ScoreModel {
    /// Hidden weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`; the output layer and all biases start at zero.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut params = vec![0.0; arch.param_count()];
        let layout = arch.layout();
        for slot in &layout[..layout.len() - 1] {
            let bound = 1.0 / (slot.fan_in as f64).sqrt();
            for w in &mut params[slot.weights..slot.biases] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Self { arch, params }
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward_patch(&self, input: &[f64]) -> Result<(Vec<f64>, PatchCache)> {
        if input.len() != self.arch.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "patch input has {} entries, expected {}",
                input.len(),
                self.arch.input_dim()
            )));
        }
        let layout = self.arch.layout();
        let mut pre = Vec::with_capacity(layout.len() - 1);
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(layout.len() - 1);
        let mut output = Vec::new();
        for (l, slot) in layout.iter().enumerate() {
            let x = if l == 0 { input } else { &post[l - 1] };
            let z = self.dense(slot, x);
            if l + 1 == layout.len() {
                output = z;
            } else {
                post.push(z.iter().map(|&v| activate(v)).collect());
                pre.push(z);
            }
        }
        let cache = PatchCache {
            input: input.to_vec(),
            pre,
            post,
        };
        Ok((output, cache))
    }

    fn dense(&self, slot: &LayerSlot, x: &[f64]) -> Vec<f64> {
        let w = &self.params[slot.weights..slot.biases];
        let b = &self.params[slot.biases..slot.biases + slot.fan_out];
        (0..slot.fan_out)
            .map(|o| {
                let row = &w[o * slot.fan_in..(o + 1) * slot.fan_in];
                b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    fn check_cache(&self, cache: &PatchCache) -> Result<()> {
        let hidden = &self.arch.hidden;
        let ok = cache.input.len() == self.arch.input_dim()
            && cache.pre.len() == hidden.len()
            && cache.post.len() == hidden.len()
            && cache.pre.iter().zip(hidden).all(|(p, h)| p.len() == *h);
        if ok {
            Ok(())
        } else {
            Err(Error::MissingCache)
        }
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn accumulate_patch_grad(&self, cache: &PatchCache, upstream: &[f64], grad: &mut [f64]) -> Result<()> {
        self.check_cache(cache)?;
        if upstream.len() != self.arch.output_dim() || grad.len() != self.params.len() {
            return Err(Error::InvalidArgument("gradient buffer sizes do not match the model".into()));
        }
        let layout = self.arch.layout();
        let mut delta = upstream.to_vec();
        for l in (0..layout.len()).rev() {
            let slot = &layout[l];
            let x: &[f64] = if l == 0 { &cache.input } else { &cache.post[l - 1] };
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut grad[slot.weights + o * slot.fan_in..slot.weights + (o + 1) * slot.fan_in];
                for (g, xv) in row.iter_mut().zip(x) {
                    *g += d * xv;
                }
                grad[slot.biases + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[slot.weights..slot.biases];
            let mut back = vec![0.0; slot.fan_in];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (b, wv) in back.iter_mut().zip(&w[o * slot.fan_in..(o + 1) * slot.fan_in]) {
                    *b += d * wv;
                }
            }
            delta = back
                .into_iter()
                .zip(&cache.pre[l - 1])
                .map(|(b, z)| b * activate_grad(*z))
                .collect();
        }
        Ok(())
    }

    /// Exact parameter gradient of a scalar loss for one patch.
    pub fn backward(&self, cache: &PatchCache, upstream: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        self.accumulate_patch_grad(cache, upstream, &mut grad)?;
        Ok(grad)
    }

    fn tile_grid(&self, shape: Shape) -> Result<Vec<(usize, usize)>> {
        let compatible = matches!(
            (shape, self.arch.patch),
            (Shape::Signal(_), Shape::Signal(_)) | (Shape::Image { .. }, Shape::Image { .. })
        );
        if !compatible || shape.is_empty() {
            return Err(Error::ShapeMismatch {
                left: shape,
                right: self.arch.patch,
            });
        }
        let (rows, cols) = shape.dims();
        let (pr, pc) = self.arch.patch.dims();
        let mut grid = Vec::new();
        for r in (0..rows).step_by(pr) {
            for c in (0..cols).step_by(pc) {
                grid.push((r, c));
            }
        }
        Ok(grid)
    }

    /// Predicts the noise of a full state, tile by tile.
    pub fn forward_state(&self, x_i: &StateVec, mu: &StateVec, i: usize, steps: usize) -> Result<(StateVec, StateCache)> {
        x_i.ensure_same_shape(mu)?;
        let shape = x_i.shape();
        let (rows, cols) = shape.dims();
        let (pr, pc) = self.arch.patch.dims();
        let embedding = time_embedding(i, steps, self.arch.embed_dim);
        let mut out = vec![0.0; shape.len()];
        let mut tiles = Vec::new();
        let mut input = Vec::with_capacity(self.arch.input_dim());
        for (row, col) in self.tile_grid(shape)? {
            input.clear();
            let scale = self.arch.input_scale;
            for residual in [true, false] {
                for dr in 0..pr {
                    let r = reflect((row + dr) as isize, rows);
                    for dc in 0..pc {
                        let c = reflect((col + dc) as isize, cols);
                        let m = mu.get(r, c);
                        input.push(if residual { (x_i.get(r, c) - m) * scale } else { m });
                    }
                }
            }
            input.extend_from_slice(&embedding);
            let (pred, cache) = self.forward_patch(&input)?;
            for dr in 0..pr.min(rows - row) {
                for dc in 0..pc.min(cols - col) {
                    out[(row + dr) * cols + col + dc] = pred[dr * pc + dc];
                }
            }
            tiles.push(Tile { row, col, cache });
        }
        Ok((StateVec::new(out, shape)?, StateCache { shape, tiles }))
    }

    /// Parameter gradient of a scalar loss given `d loss / d eps_hat` for the full state.
    pub fn backward_state(&self, cache: &StateCache, upstream: &StateVec) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        self.accumulate_state_grad(cache, upstream, &mut grad)?;
        Ok(grad)
    }

    pub fn accumulate_state_grad(&self, cache: &StateCache, upstream: &StateVec, grad: &mut [f64]) -> Result<()> {
        if upstream.shape() != cache.shape {
            return Err(Error::ShapeMismatch {
                left: upstream.shape(),
                right: cache.shape,
            });
        }
        let (rows, cols) = cache.shape.dims();
        let (pr, pc) = self.arch.patch.dims();
        let mut local = vec![0.0; self.arch.output_dim()];
        for tile in &cache.tiles {
            local.iter_mut().for_each(|v| *v = 0.0);
            // padded positions were cropped, so they receive no gradient
            for dr in 0..pr.min(rows - tile.row) {
                for dc in 0..pc.min(cols - tile.col) {
                    local[dr * pc + dc] = upstream.get(tile.row + dr, tile.col + dc);
                }
            }
            self.accumulate_patch_grad(&tile.cache, &local, grad)?;
        }
        Ok(())
    }
}

impl NoisePredictor for ScoreModel {
    fn predict_noise(&self, x_i: &StateVec, mu: &StateVec, i: usize, steps: usize) -> Result<StateVec> {
        self.forward_state(x_i, mu, i, steps).map(|(eps, _)| eps)
    }
}
