//! Dense tensors and the reverse-mode differentiation tape.

mod gradcheck;
mod tape;

pub use gradcheck::{check_gradient, finite_difference_gradient, max_relative_error};
pub use tape::{
    stable_cross_entropy, stable_softmax, GradientMap, PrimitiveOp, Tape, TensorId,
};

use crate::error::{CiaError, Result};
use crate::scalar::Scalar;

/// Dense row-major tensor. Values are validated finite on construction and
/// after every tape operation.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    values: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, values: Vec<S>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(CiaError::BadOperand {
                op: "tensor",
                message: format!("zero-sized dimension in shape {shape:?}"),
            });
        }
        let expect: usize = shape.iter().product();
        if expect != values.len() {
            return Err(CiaError::BadOperand {
                op: "tensor",
                message: format!(
                    "shape {shape:?} implies {expect} values, got {}",
                    values.len()
                ),
            });
        }
        let t = Tensor { shape, values };
        t.check_finite("tensor")?;
        Ok(t)
    }

    /// Construct from f64 values, rounding each to `S`.
    pub fn from_f64(shape: Vec<usize>, values: &[f64]) -> Result<Self> {
        Tensor::new(shape, values.iter().map(|&v| S::of_f64(v)).collect())
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            values: vec![S::of_f64(0.0); len],
        }
    }

    pub fn scalar(v: S) -> Self {
        Tensor {
            shape: vec![1],
            values: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.values.len() == 1
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The single value of a scalar tensor.
    pub fn item(&self) -> Result<S> {
        if self.is_scalar() {
            Ok(self.values[0])
        } else {
            Err(CiaError::NotScalar {
                shape: self.shape.clone(),
            })
        }
    }

    /// Element of a rank-2 tensor.
    pub fn at(&self, row: usize, col: usize) -> S {
        debug_assert_eq!(self.rank(), 2);
        self.values[row * self.shape[1] + col]
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.as_f64()).collect()
    }

    pub(crate) fn check_finite(&self, op: &'static str) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(CiaError::BadOperand {
                    op,
                    message: format!("non-finite value {v} at flat index {i}"),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_must_match_value_count() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn non_finite_values_rejected() {
        assert!(Tensor::<f32>::new(vec![2], vec![1.0, f32::NAN]).is_err());
        assert!(Tensor::<f64>::new(vec![1], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn item_requires_scalar() {
        let t = Tensor::<f32>::scalar(3.5);
        assert_eq!(t.item().unwrap(), 3.5);
        let m = Tensor::<f32>::zeros(vec![2, 2]);
        assert!(matches!(m.item(), Err(CiaError::NotScalar { .. })));
    }

    #[test]
    fn at_indexes_row_major() {
        let t = Tensor::<f64>::new(vec![2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(t.at(0, 2), 2.0);
        assert_eq!(t.at(1, 0), 3.0);
    }
}
