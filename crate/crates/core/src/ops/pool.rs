use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Mean over the temporal axis: `(batch, channels, L)` to `(batch, channels, 1)`.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = input.shape();
    if shape.length == 0 {
        return Err(Error::invalid("global_avg_pool", "input length is zero"));
    }
    let n = T::from_usize_lossy(shape.length);
    let mut out = Tensor::zeros(Shape::new(shape.batch, shape.channels, 1));
    for b in 0..shape.batch {
        for c in 0..shape.channels {
            out.set(b, c, 0, input.row(b, c).iter().copied().sum::<T>() / n);
        }
    }
    Ok(out)
}

/// Broadcasts `grad / L` back over the pooled length.
pub fn global_avg_pool_backward<T: Scalar>(
    output_grad: &Tensor<T>,
    input_len: usize,
) -> Result<Tensor<T>> {
    let shape = output_grad.shape();
    if shape.length != 1 {
        return Err(Error::Shape {
            op: "global_avg_pool_backward",
            dim: "length",
            expected: 1,
            actual: shape.length,
        });
    }
    if input_len == 0 {
        return Err(Error::invalid(
            "global_avg_pool_backward",
            "input length is zero",
        ));
    }
    let n = T::from_usize_lossy(input_len);
    let mut dx = Tensor::zeros(Shape::new(shape.batch, shape.channels, input_len));
    for b in 0..shape.batch {
        for c in 0..shape.channels {
            let g = output_grad.get(b, c, 0) / n;
            dx.row_mut(b, c).iter_mut().for_each(|v| *v = g);
        }
    }
    Ok(dx)
}
