//! Central finite differences, the independent oracle for every
//! analytic gradient in this crate.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Central-difference estimate of `∇ loss_fn` at `point`.
pub fn finite_diff<T, F>(mut loss_fn: F, point: &Tensor<T>, eps: T) -> Result<Tensor<T>>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> Result<T>,
{
    if eps.is_nan() || eps <= T::zero() {
        return Err(Error::contract("finite_diff needs eps > 0"));
    }
    let mut probe = point.clone();
    let mut grad = Vec::with_capacity(point.len());
    let two = T::of(2.0);
    for i in 0..point.len() {
        let x = point.data()[i];
        probe.data_mut()[i] = x + eps;
        let up = loss_fn(&probe)?;
        probe.data_mut()[i] = x - eps;
        let down = loss_fn(&probe)?;
        probe.data_mut()[i] = x;
        grad.push((up - down) / (two * eps));
    }
    Tensor::new(point.shape().to_vec(), grad)
}

/// `max_i |a_i − b_i| / max(|a_i|, |b_i|, floor)`.
///
/// The floor keeps entries that are zero on both sides from dominating.
pub fn max_relative_error<T: Scalar>(a: &[T], b: &[T], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "compared gradients differ in length");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (x, y) = (x.as_f64(), y.as_f64());
            (x - y).abs() / x.abs().max(y.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}
