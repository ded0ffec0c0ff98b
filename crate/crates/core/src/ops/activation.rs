use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

/// Elementwise `max(0, x)`.
pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes gradient where the forward input was strictly positive; the
/// subgradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(
    output_grad: &Tensor<T>,
    saved_input: &Tensor<T>,
) -> Result<Tensor<T>> {
    output_grad.check_same_shape("relu_backward", saved_input)?;
    let mut dx = output_grad.clone();
    for (d, &x) in dx.data_mut().iter_mut().zip(saved_input.data()) {
        if x <= T::zero() {
            *d = T::zero();
        }
    }
    Ok(dx)
}
