use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Per-channel batch normalisation state.
///
/// Running statistics follow `running = (1 - momentum) * running + momentum * batch`,
/// with the unbiased batch variance.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub epsilon: T,
    pub momentum: T,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    x_hat: Tensor<T>,
    inv_std: Vec<T>,
    training: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Scalar> BatchNormParams<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormParams {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            epsilon: T::from_f64_lossy(1e-5),
            momentum: T::from_f64_lossy(0.1),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.gamma.len();
        for (dim, len) in [
            ("beta", self.beta.len()),
            ("running_mean", self.running_mean.len()),
            ("running_var", self.running_var.len()),
        ] {
            if len != c {
                return Err(Error::Shape {
                    op: "batchnorm1d",
                    dim,
                    expected: c,
                    actual: len,
                });
            }
        }
        if self.epsilon <= T::zero() {
            return Err(Error::invalid("batchnorm1d", "epsilon must be positive"));
        }
        Ok(())
    }
}

pub fn batchnorm1d<T: Scalar>(
    input: &Tensor<T>,
    params: &mut BatchNormParams<T>,
    training: bool,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    params.validate()?;
    let shape = input.shape();
    if shape.channels != params.channels() {
        return Err(Error::Shape {
            op: "batchnorm1d",
            dim: "channels",
            expected: params.channels(),
            actual: shape.channels,
        });
    }
    let count = shape.batch * shape.length;
    if training && count == 0 {
        return Err(Error::invalid(
            "batchnorm1d",
            "empty batch in training mode",
        ));
    }
    let n = T::from_usize_lossy(count);

    let mut x_hat = Tensor::zeros(shape);
    let mut out = Tensor::zeros(shape);
    let mut inv_std = Vec::with_capacity(shape.channels);
    for c in 0..shape.channels {
        let (mean, var) = if training {
            let mut sum = T::zero();
            for b in 0..shape.batch {
                sum = sum + input.row(b, c).iter().copied().sum::<T>();
            }
            let mean = sum / n;
            let mut sq = T::zero();
            for b in 0..shape.batch {
                for &v in input.row(b, c) {
                    sq = sq + (v - mean) * (v - mean);
                }
            }
            let var = sq / n;
            let unbiased = if count > 1 {
                sq / T::from_usize_lossy(count - 1)
            } else {
                var
            };
            let m = params.momentum;
            params.running_mean[c] = (T::one() - m) * params.running_mean[c] + m * mean;
            params.running_var[c] = (T::one() - m) * params.running_var[c] + m * unbiased;
            (mean, var)
        } else {
            (params.running_mean[c], params.running_var[c])
        };
        let istd = T::one() / (var + params.epsilon).sqrt();
        inv_std.push(istd);
        let (g, be) = (params.gamma[c], params.beta[c]);
        for b in 0..shape.batch {
            let src = input.row(b, c);
            let xh = x_hat.row_mut(b, c);
            for (h, &v) in xh.iter_mut().zip(src) {
                *h = (v - mean) * istd;
            }
            let dst = out.row_mut(b, c);
            for (o, &h) in dst.iter_mut().zip(x_hat.row(b, c)) {
                *o = g * h + be;
            }
        }
    }
    Ok((
        out,
        BatchNormCache {
            x_hat,
            inv_std,
            training,
        },
    ))
}

pub fn batchnorm1d_backward<T: Scalar>(
    output_grad: &Tensor<T>,
    cache: &BatchNormCache<T>,
    params: &BatchNormParams<T>,
) -> Result<BatchNormGrads<T>> {
    output_grad.check_same_shape("batchnorm1d_backward", &cache.x_hat)?;
    let shape = output_grad.shape();
    let n = T::from_usize_lossy(shape.batch * shape.length);
    let mut dx = Tensor::zeros(shape);
    let mut dgamma = vec![T::zero(); shape.channels];
    let mut dbeta = vec![T::zero(); shape.channels];

    for c in 0..shape.channels {
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for b in 0..shape.batch {
            for (&g, &h) in output_grad.row(b, c).iter().zip(cache.x_hat.row(b, c)) {
                sum_g = sum_g + g;
                sum_gx = sum_gx + g * h;
            }
        }
        dgamma[c] = sum_gx;
        dbeta[c] = sum_g;
        let scale = params.gamma[c] * cache.inv_std[c];
        for b in 0..shape.batch {
            let g = output_grad.row(b, c);
            let h = cache.x_hat.row(b, c);
            let d = dx.row_mut(b, c);
            if cache.training {
                // dx = gamma * istd / N * (N g - sum g - x_hat * sum(g x_hat))
                for ((d, &gv), &hv) in d.iter_mut().zip(g).zip(h) {
                    *d = scale * (gv - sum_g / n - hv * sum_gx / n);
                }
            } else {
                for (d, &gv) in d.iter_mut().zip(g) {
                    *d = scale * gv;
                }
            }
        }
    }
    Ok(BatchNormGrads {
        input: dx,
        gamma: dgamma,
        beta: dbeta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use crate::testutil::{central_diff, max_rel_err, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_channel_maps_to_beta() {
        let x = Tensor::<f64>::full(Shape::new(3, 2, 5), 4.2);
        let mut p = BatchNormParams::new(2);
        p.beta = vec![0.5, -1.0];
        p.gamma = vec![2.0, 3.0];
        let (y, _) = batchnorm1d(&x, &mut p, true).unwrap();
        for b in 0..3 {
            assert!(y.row(b, 0).iter().all(|&v| v == 0.5));
            assert!(y.row(b, 1).iter().all(|&v| v == -1.0));
        }
    }

    #[test]
    fn standard_normal_batch_is_normalised() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let shape = Shape::new(64, 1, 128);
        let data: Vec<f64> = (0..shape.numel())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                3.0 + 2.0 * z
            })
            .collect();
        let x = Tensor::from_vec(shape, data).unwrap();
        let mut p = BatchNormParams::new(1);
        let (y, _) = batchnorm1d(&x, &mut p, true).unwrap();
        let n = y.data().len() as f64;
        let mean = y.data().iter().sum::<f64>() / n;
        let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05);
        assert!((var - 1.0).abs() < 0.1);
        // running stats moved 10% of the way towards (3, 4)
        assert!((p.running_mean[0] - 0.3).abs() < 0.05);
        assert!((p.running_var[0] - 1.3).abs() < 0.05);
    }

    #[test]
    fn inference_uses_running_stats() {
        let mut p = BatchNormParams::<f64>::new(1);
        p.running_mean = vec![1.0];
        p.running_var = vec![4.0 - 1e-5];
        let x = Tensor::from_vec(Shape::new(1, 1, 2), vec![1.0, 5.0]).unwrap();
        let (y, _) = batchnorm1d(&x, &mut p, false).unwrap();
        assert!((y.data()[0]).abs() < 1e-12);
        assert!((y.data()[1] - 2.0).abs() < 1e-12);
        assert_eq!(p.running_mean, vec![1.0]);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let mut p = BatchNormParams::<f64>::new(3);
        let err = batchnorm1d(&Tensor::zeros(Shape::new(1, 2, 4)), &mut p, true).unwrap_err();
        assert!(err.to_string().contains("channels"));
        let mut bad = BatchNormParams::<f64>::new(2);
        bad.epsilon = 0.0;
        assert!(batchnorm1d(&Tensor::zeros(Shape::new(1, 2, 4)), &mut bad, true).is_err());
    }

    #[test]
    fn gradients_match_central_differences() {
        for training in [true, false] {
            for seed in 0..5 {
                let x = random_tensor(Shape::new(2, 3, 8), seed);
                let mut p = BatchNormParams::<f64>::new(3);
                let mut rng = ChaCha8Rng::seed_from_u64(seed + 99);
                use rand::Rng;
                p.gamma
                    .iter_mut()
                    .for_each(|g| *g = rng.gen_range(0.5..1.5));
                p.beta
                    .iter_mut()
                    .for_each(|g| *g = rng.gen_range(-0.5..0.5));
                p.running_mean
                    .iter_mut()
                    .for_each(|g| *g = rng.gen_range(-0.5..0.5));
                p.running_var
                    .iter_mut()
                    .for_each(|g| *g = rng.gen_range(0.5..1.5));
                let r = random_tensor(x.shape(), seed + 7);
                let loss = |x: &Tensor<f64>, p: &BatchNormParams<f64>| {
                    let mut q = p.clone();
                    let (y, _) = batchnorm1d(x, &mut q, training).unwrap();
                    y.data()
                        .iter()
                        .zip(r.data())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                };
                let (_, cache) = batchnorm1d(&x, &mut p.clone(), training).unwrap();
                let g = batchnorm1d_backward(&r, &cache, &p).unwrap();
                let nx = central_diff(x.data(), 1e-5, |v| {
                    loss(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap(), &p)
                });
                assert!(max_rel_err(g.input.data(), &nx) < 1e-4);
                let ng = central_diff(&p.gamma, 1e-5, |v| {
                    let mut q = p.clone();
                    q.gamma = v.to_vec();
                    loss(&x, &q)
                });
                assert!(max_rel_err(&g.gamma, &ng) < 1e-4);
                let nb = central_diff(&p.beta, 1e-5, |v| {
                    let mut q = p.clone();
                    q.beta = v.to_vec();
                    loss(&x, &q)
                });
                assert!(max_rel_err(&g.beta, &nb) < 1e-4);
            }
        }
    }
}
