use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Sgd {
        learning_rate: f64,
    },
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig::Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { learning_rate }
            | OptimizerConfig::Adam { learning_rate, .. } => learning_rate,
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::adam(1e-3)
    }
}

/// Stateful optimizer over an ordered list of parameter slices. The order
/// (and slice lengths) must be identical on every call.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    config: OptimizerConfig,
    steps: u64,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(config: OptimizerConfig) -> Self {
        Optimizer {
            config,
            steps: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[Vec<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape {
                op: "optimizer_step",
                dim: "parameter groups",
                expected: params.len(),
                actual: grads.len(),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::Shape {
                    op: "optimizer_step",
                    dim: "parameter length",
                    expected: p.len(),
                    actual: g.len(),
                });
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("gradient group {i}, element {j}"),
                });
            }
        }

        self.steps += 1;
        match self.config {
            OptimizerConfig::Sgd { learning_rate } => {
                let lr = T::from_f64_lossy(learning_rate);
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, &gv) in p.iter_mut().zip(g) {
                        *w = *w - lr * gv;
                    }
                }
            }
            OptimizerConfig::Adam {
                learning_rate,
                beta1,
                beta2,
                epsilon,
            } => {
                if self.first_moment.is_empty() {
                    self.first_moment = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
                    self.second_moment = self.first_moment.clone();
                }
                let t = self.steps as i32;
                let c1 = T::from_f64_lossy(1.0 - beta1.powi(t));
                let c2 = T::from_f64_lossy(1.0 - beta2.powi(t));
                let (b1, b2) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2));
                let (lr, eps) = (T::from_f64_lossy(learning_rate), T::from_f64_lossy(epsilon));
                let one = T::one();
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = &mut self.first_moment[i];
                    let v = &mut self.second_moment[i];
                    for j in 0..g.len() {
                        m[j] = b1 * m[j] + (one - b1) * g[j];
                        v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                        let m_hat = m[j] / c1;
                        let v_hat = v[j] / c2;
                        p[j] = p[j] - lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step() {
        let mut opt = Optimizer::<f64>::new(OptimizerConfig::Sgd { learning_rate: 0.1 });
        let mut w = vec![1.0];
        opt.step(&mut [&mut w[..]], &[vec![1.0]]).unwrap();
        assert!((w[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        for g in [0.003, 1.0, -250.0] {
            let mut opt = Optimizer::<f64>::new(OptimizerConfig::adam(0.01));
            let mut w = vec![0.0];
            opt.step(&mut [&mut w[..]], &[vec![g]]).unwrap();
            assert!((w[0].abs() - 0.01).abs() < 1e-6, "g={g} w={}", w[0]);
            assert_eq!(w[0].signum(), -g.signum());
        }
    }

    #[test]
    fn adam_minimises_scalar_quadratic() {
        // f(w) = (w - 3)^2, f'(w) = 2 (w - 3)
        let mut opt = Optimizer::<f64>::new(OptimizerConfig::adam(0.1));
        let mut w = vec![0.0];
        for _ in 0..100 {
            let g = vec![2.0 * (w[0] - 3.0)];
            opt.step(&mut [&mut w[..]], &[g]).unwrap();
        }
        assert!((w[0] - 3.0).abs() < 0.05, "w = {}", w[0]);
    }

    #[test]
    fn non_finite_gradient_rejected_without_update() {
        let mut opt = Optimizer::<f32>::new(OptimizerConfig::adam(0.1));
        let mut w = vec![1.0f32, 2.0];
        let err = opt
            .step(&mut [&mut w[..]], &[vec![0.5, f32::NAN]])
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert_eq!(w, vec![1.0, 2.0]);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut opt = Optimizer::<f64>::new(OptimizerConfig::adam(0.05));
            let mut w = vec![0.3, -0.7];
            for i in 0..20 {
                let g = vec![w[0] * 1.5 + i as f64 * 0.01, w[1] - 0.2];
                opt.step(&mut [&mut w[..]], &[g]).unwrap();
            }
            w
        };
        assert_eq!(run(), run());
    }
}
