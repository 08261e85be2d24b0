//! Image container: the attacked input and the perturbation carrier.

use crate::error::{CiaError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// H×W×3 image with values in [0,1], stored row-major as (y, x, channel).
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor<S> {
    height: usize,
    width: usize,
    values: Vec<S>,
}

pub const CHANNELS: usize = 3;

impl<S: Scalar> ImageTensor<S> {
    pub fn new(height: usize, width: usize, values: Vec<S>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(CiaError::BadOperand {
                op: "image",
                message: format!("degenerate dimensions {height}x{width}"),
            });
        }
        if values.len() != height * width * CHANNELS {
            return Err(CiaError::BadOperand {
                op: "image",
                message: format!(
                    "{height}x{width}x{CHANNELS} image needs {} values, got {}",
                    height * width * CHANNELS,
                    values.len()
                ),
            });
        }
        for (i, v) in values.iter().enumerate() {
            let x = v.as_f64();
            if !x.is_finite() || !(0.0..=1.0).contains(&x) {
                return Err(CiaError::BadOperand {
                    op: "image",
                    message: format!("value {v} at flat index {i} outside [0,1]"),
                });
            }
        }
        Ok(ImageTensor { height, width, values })
    }

    pub fn from_f64(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        ImageTensor::new(height, width, values.iter().map(|&v| S::of_f64(v)).collect())
    }

    /// Uniform image with every channel at `value`.
    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        ImageTensor::from_f64(height, width, &vec![value; height * width * CHANNELS])
    }

    /// The standard deterministic fixture: a linear ramp covering [0,1]
    /// across the flattened (y, x, channel) index.
    pub fn ramp(height: usize, width: usize) -> Self {
        let len = height * width * CHANNELS;
        let denom = (len - 1) as f64;
        let values = (0..len).map(|i| S::of_f64(i as f64 / denom)).collect();
        ImageTensor { height, width, values }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> S {
        self.values[(y * self.width + x) * CHANNELS + c]
    }

    /// Flat 1×(H·W·3) row tensor, the leaf shape used on attack tapes.
    pub fn to_row_tensor(&self) -> Tensor<S> {
        Tensor::new(vec![1, self.values.len()], self.values.clone())
            .expect("image values already validated")
    }
}
