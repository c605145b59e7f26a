//! Dense latent tensors laid out as `channels × frames × height × width`.
//!
//! The width axis is the longitude axis of an equirectangular frame and is
//! treated as periodic by every shift and pad operation in the crate.

use ndarray::{s, Array4, ArrayView4, Axis};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Mismatch {
        expected: [usize; 4],
        actual: [usize; 4],
    },
    #[error("tensor axis `{axis}` must be non-empty")]
    Empty { axis: &'static str },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    data: Array4<f64>,
}

impl LatentTensor {
    pub fn new(data: Array4<f64>) -> Result<Self, ShapeError> {
        let names = ["channels", "frames", "height", "width"];
        for (axis, &len) in data.shape().iter().enumerate() {
            if len == 0 {
                return Err(ShapeError::Empty { axis: names[axis] });
            }
        }
        Ok(Self { data })
    }

    pub fn zeros(shape: [usize; 4]) -> Result<Self, ShapeError> {
        Self::new(Array4::zeros(shape))
    }

    pub fn from_elem(shape: [usize; 4], value: f64) -> Result<Self, ShapeError> {
        Self::new(Array4::from_elem(shape, value))
    }

    pub fn from_fn(
        shape: [usize; 4],
        f: impl FnMut((usize, usize, usize, usize)) -> f64,
    ) -> Result<Self, ShapeError> {
        Self::new(Array4::from_shape_fn(shape, f))
    }

    pub fn shape(&self) -> [usize; 4] {
        let s = self.data.shape();
        [s[0], s[1], s[2], s[3]]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array4<f64> {
        &mut self.data
    }

    pub fn view(&self) -> ArrayView4<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array4<f64> {
        self.data
    }

    pub fn ensure_same_shape(&self, other: &LatentTensor) -> Result<(), ShapeError> {
        if self.shape() != other.shape() {
            return Err(ShapeError::Mismatch {
                expected: self.shape(),
                actual: other.shape(),
            });
        }
        Ok(())
    }

    /// Frames `[start, end)` as an owned tensor.
    pub fn frame_range(&self, start: usize, end: usize) -> Result<Self, ShapeError> {
        if start >= end || end > self.frames() {
            return Err(ShapeError::Invalid(format!(
                "frame range {start}..{end} outside 0..{}",
                self.frames()
            )));
        }
        Self::new(self.data.slice(s![.., start..end, .., ..]).to_owned())
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &LatentTensor) -> Result<f64, ShapeError> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Bitwise equality of every element (distinguishes `0.0` and `-0.0`).
    pub fn bit_eq(&self, other: &LatentTensor) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Column `x` (all channels, frames and rows) as a flat vector.
    pub fn column(&self, x: usize) -> Vec<f64> {
        self.data.index_axis(Axis(3), x).iter().copied().collect()
    }
}
