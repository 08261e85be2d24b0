//! Finite-difference oracle for validating backward passes.

use super::{Tape, Tensor, TensorId};
use crate::error::Result;
use crate::scalar::Scalar;

/// Central-difference gradient of a scalar function, one coordinate at a
/// time. The divisor is the actually-representable difference between the
/// two perturbed coordinates, which removes the rounding bias of assuming
/// the step landed exactly at ±h.
pub fn finite_difference_gradient<S: Scalar>(
    f: &mut dyn FnMut(&Tensor<S>) -> Result<S>,
    x: &Tensor<S>,
    h: f64,
) -> Result<Tensor<S>> {
    assert!(h > 0.0, "step size must be positive");
    let mut grad = vec![0.0f64; x.len()];
    for i in 0..x.len() {
        let base = x.values()[i].as_f64();
        let mut vp = x.values().to_vec();
        vp[i] = S::of_f64(base + h);
        let xp = Tensor::new(x.shape().to_vec(), vp)?;
        let mut vm = x.values().to_vec();
        vm[i] = S::of_f64(base - h);
        let xm = Tensor::new(x.shape().to_vec(), vm)?;
        let denom = xp.values()[i].as_f64() - xm.values()[i].as_f64();
        let fp = f(&xp)?.as_f64();
        let fm = f(&xm)?.as_f64();
        grad[i] = (fp - fm) / denom;
    }
    Tensor::from_f64(x.shape().to_vec(), &grad)
}

/// Worst relative disagreement over coordinates whose analytic magnitude
/// exceeds `magnitude_floor`; coordinates below the floor carry more
/// finite-difference noise than signal and are skipped.
pub fn max_relative_error<S: Scalar>(
    analytic: &Tensor<S>,
    numeric: &Tensor<S>,
    magnitude_floor: f64,
) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
    let mut worst = 0.0f64;
    for (a, n) in analytic.values().iter().zip(numeric.values()) {
        let (a, n) = (a.as_f64(), n.as_f64());
        if a.abs() > magnitude_floor {
            worst = worst.max((a - n).abs() / a.abs());
        }
    }
    worst
}

/// Compare tape gradients against finite differences for a scalar-valued
/// graph builder. Exposed to the test suites of downstream modules.
pub fn check_gradient<S: Scalar>(
    build: &dyn Fn(&mut Tape<S>, TensorId) -> Result<TensorId>,
    x: &Tensor<S>,
    h: f64,
    magnitude_floor: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let xid = tape.input(x.clone());
    let root = build(&mut tape, xid)?;
    let grads = tape.backward(root)?;
    let analytic = grads
        .wrt(xid)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape().to_vec()));
    let numeric = finite_difference_gradient(
        &mut |xt: &Tensor<S>| {
            let mut t = Tape::new();
            let id = t.input(xt.clone());
            let r = build(&mut t, id)?;
            t.value(r)?.item()
        },
        x,
        h,
    )?;
    Ok(max_relative_error(&analytic, &numeric, magnitude_floor))
}
