//! Real-valued states: 1-D signals and grayscale images stored row-major.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Signal(usize),
    Image { height: usize, width: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Signal(n) => n,
            Shape::Image { height, width } => height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(rows, cols)`; a signal is a single row.
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            Shape::Signal(n) => (1, n),
            Shape::Image { height, width } => (height, width),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Signal(n) => write!(f, "({n},)"),
            Shape::Image { height, width } => write!(f, "({height}, {width})"),
        }
    }
}

/// A state `x(t)` of the SDE. Entries are always finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVec {
    data: Vec<f64>,
    shape: Shape,
}

impl StateVec {
    pub fn new(data: Vec<f64>, shape: Shape) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::LengthMismatch {
                len: data.len(),
                shape,
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { data, shape })
    }

    pub fn signal(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(data, Shape::Signal(n))
    }

    pub fn image(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(data, Shape::Image { height, width })
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::signal(vec![value])
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        assert!(value.is_finite());
        Self {
            data: vec![value; shape.len()],
            shape,
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    /// Independent standard normal entries.
    pub fn standard_normal<R: Rng + ?Sized>(shape: Shape, rng: &mut R) -> Self {
        let data = (0..shape.len())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self { data, shape }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (_, cols) = self.shape.dims();
        self.data[row * cols + col]
    }

    pub fn ensure_same_shape(&self, other: &StateVec) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape,
                right: other.shape,
            });
        }
        Ok(())
    }

    /// Elementwise map; fails if the result is not finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<StateVec> {
        Self::new(self.data.iter().map(|&v| f(v)).collect(), self.shape)
    }

    /// Elementwise combination of two equally shaped states.
    pub fn zip_map(&self, other: &StateVec, f: impl Fn(f64, f64) -> f64) -> Result<StateVec> {
        self.ensure_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(data, self.shape)
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}
