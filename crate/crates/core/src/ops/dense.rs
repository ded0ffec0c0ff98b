//! Fully connected classifier head with softmax cross-entropy.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Row-major `(samples, classes)` score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores<T> {
    pub classes: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> ClassScores<T> {
    pub fn zeros(samples: usize, classes: usize) -> Self {
        ClassScores {
            classes,
            data: vec![T::zero(); samples * classes],
        }
    }

    pub fn samples(&self) -> usize {
        self.data.len().checked_div(self.classes).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.classes..(i + 1) * self.classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.classes)
    }

    /// Index of the largest entry in each row (first one on ties).
    pub fn argmax(&self) -> Vec<usize> {
        self.rows()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| {
                        if v > bv {
                            (i, v)
                        } else {
                            (bi, bv)
                        }
                    })
                    .0
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T> {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out][in]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxCrossEntropy<T> {
    pub loss: T,
    pub probabilities: ClassScores<T>,
    /// d(loss)/d(logits)
    pub logit_grad: ClassScores<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSoftmaxOutput<T> {
    pub loss: T,
    pub probabilities: ClassScores<T>,
    pub grads: DenseGrads<T>,
}

impl<T: Scalar> DenseParams<T> {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        DenseParams {
            in_features,
            out_features,
            weight: vec![T::zero(); in_features * out_features],
            bias: vec![T::zero(); out_features],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn init_he_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let bound = (6.0 / self.in_features as f64).sqrt();
        for w in &mut self.weight {
            *w = T::from_f64_lossy(rng.gen_range(-bound..bound));
        }
        self.bias.iter_mut().for_each(|b| *b = T::zero());
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let features = input.channels() * input.len();
        if features != self.in_features {
            return Err(Error::Shape {
                op: "dense",
                dim: "features",
                expected: self.in_features,
                actual: features,
            });
        }
        Ok(())
    }
}

/// `logits[b] = W x[b] + bias`, where `x[b]` is sample `b` flattened.
pub fn dense_forward<T: Scalar>(
    input: &Tensor<T>,
    params: &DenseParams<T>,
) -> Result<ClassScores<T>> {
    params.check_input(input)?;
    let mut logits = ClassScores::zeros(input.batch(), params.out_features);
    for b in 0..input.batch() {
        let x = input.sample(b);
        for (o, out) in logits.row_mut(b).iter_mut().enumerate() {
            let w = &params.weight[o * params.in_features..(o + 1) * params.in_features];
            *out = params.bias[o] + w.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>();
        }
    }
    Ok(logits)
}

pub fn dense_backward<T: Scalar>(
    logit_grad: &ClassScores<T>,
    input: &Tensor<T>,
    params: &DenseParams<T>,
) -> Result<DenseGrads<T>> {
    params.check_input(input)?;
    if logit_grad.samples() != input.batch() || logit_grad.classes != params.out_features {
        return Err(Error::Shape {
            op: "dense_backward",
            dim: "samples",
            expected: input.batch(),
            actual: logit_grad.samples(),
        });
    }
    let nin = params.in_features;
    let mut dx = Tensor::zeros(input.shape());
    let mut dw = vec![T::zero(); params.weight.len()];
    let mut db = vec![T::zero(); params.bias.len()];
    for b in 0..input.batch() {
        let x = input.sample(b);
        let g = logit_grad.row(b);
        let start = b * nin;
        for (o, &go) in g.iter().enumerate() {
            db[o] = db[o] + go;
            let w = &params.weight[o * nin..(o + 1) * nin];
            let dwo = &mut dw[o * nin..(o + 1) * nin];
            for i in 0..nin {
                dwo[i] = dwo[i] + go * x[i];
            }
            let dxs = &mut dx.data_mut()[start..start + nin];
            for i in 0..nin {
                dxs[i] = dxs[i] + go * w[i];
            }
        }
    }
    Ok(DenseGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}

/// Numerically stable softmax of each row.
pub fn softmax<T: Scalar>(logits: &ClassScores<T>) -> ClassScores<T> {
    let mut probs = logits.clone();
    for i in 0..probs.samples() {
        let row = probs.row_mut(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        row.iter_mut().for_each(|v| *v = *v / sum);
    }
    probs
}

/// Mean negative log-likelihood over the batch and its gradient
/// `(p - onehot) / n` with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &ClassScores<T>,
    labels: &[usize],
) -> Result<SoftmaxCrossEntropy<T>> {
    let n = logits.samples();
    if labels.len() != n {
        return Err(Error::Shape {
            op: "softmax_cross_entropy",
            dim: "labels",
            expected: n,
            actual: labels.len(),
        });
    }
    if n == 0 {
        return Err(Error::invalid("softmax_cross_entropy", "empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.classes) {
        return Err(Error::invalid(
            "softmax_cross_entropy",
            format!("label {bad} outside [0, {})", logits.classes),
        ));
    }
    let nf = T::from_usize_lossy(n);
    let mut loss = T::zero();
    let probabilities = softmax(logits);
    let mut logit_grad = probabilities.clone();
    for (i, &label) in labels.iter().enumerate() {
        // log p_label via log-sum-exp on the raw logits, stable for huge margins
        let row = logits.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss = loss + (lse - row[label]);
        let g = logit_grad.row_mut(i);
        g[label] = g[label] - T::one();
        g.iter_mut().for_each(|v| *v = *v / nf);
    }
    Ok(SoftmaxCrossEntropy {
        loss: loss / nf,
        probabilities,
        logit_grad,
    })
}

/// Dense layer, softmax and mean cross-entropy in one call.
pub fn dense_softmax_ce<T: Scalar>(
    input: &Tensor<T>,
    params: &DenseParams<T>,
    labels: &[usize],
) -> Result<DenseSoftmaxOutput<T>> {
    let logits = dense_forward(input, params)?;
    let ce = softmax_cross_entropy(&logits, labels)?;
    let grads = dense_backward(&ce.logit_grad, input, params)?;
    Ok(DenseSoftmaxOutput {
        loss: ce.loss,
        probabilities: ce.probabilities,
        grads,
    })
}

/// Shape of globally pooled features fed to the head.
pub fn pooled_shape(batch: usize, channels: usize) -> Shape {
    Shape::new(batch, channels, 1)
}
