//! Trainable network built from a [`ModelSpec`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::spec::{LayerSpec, ModelSpec};
use crate::ops::{
    batchnorm1d, batchnorm1d_backward, conv1d_backward, conv1d_forward, dense_backward,
    dense_forward, global_avg_pool, global_avg_pool_backward, relu, relu_backward, softmax,
    softmax_cross_entropy, BatchNormCache, BatchNormParams, ClassScores, ConvParams, DenseParams,
};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(ConvParams<T>),
    BatchNorm(BatchNormParams<T>),
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub layers: Vec<Layer<T>>,
    pub skip: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    spec: ModelSpec,
    pub blocks: Vec<Block<T>>,
    pub head: DenseParams<T>,
}

#[derive(Debug, Clone)]
enum LayerCache<T> {
    Conv(Tensor<T>),
    BatchNorm(BatchNormCache<T>),
    Relu(Tensor<T>),
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    caches: Vec<Vec<LayerCache<T>>>,
    /// Final feature maps before global pooling.
    pub features: Tensor<T>,
    pub pooled: Tensor<T>,
    /// Pre-softmax class scores.
    pub logits: ClassScores<T>,
}

#[derive(Debug, Clone)]
pub struct Gradients<T> {
    /// Same order as [`Model::params_mut`].
    pub params: Vec<Vec<T>>,
    pub features: Tensor<T>,
    pub input: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct StepOutput<T> {
    pub loss: T,
    pub probabilities: ClassScores<T>,
    pub grads: Gradients<T>,
}

impl<T: Scalar> Model<T> {
    /// Builds the layers of `spec` with seeded He-uniform weights.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        let mut model = Self::zeroed(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in &mut model.blocks {
            for layer in &mut block.layers {
                if let Layer::Conv(c) = layer {
                    c.init_he_uniform(&mut rng);
                }
            }
        }
        model.head.init_he_uniform(&mut rng);
        Ok(model)
    }

    /// All weights zero, BN at identity statistics.
    pub fn zeroed(spec: ModelSpec) -> Result<Self> {
        spec.block_shapes()?;
        let mut blocks = Vec::with_capacity(spec.blocks.len());
        for b in &spec.blocks {
            let mut layers = Vec::with_capacity(b.layers.len());
            for l in &b.layers {
                layers.push(match *l {
                    LayerSpec::Conv {
                        mode,
                        kernel_size,
                        in_channels,
                        out_channels,
                        stride,
                        padding,
                        bias,
                    } => Layer::Conv(ConvParams::new(
                        mode,
                        kernel_size,
                        in_channels,
                        out_channels,
                        stride,
                        padding,
                        bias,
                    )?),
                    LayerSpec::BatchNorm { channels } => {
                        Layer::BatchNorm(BatchNormParams::new(channels))
                    }
                    LayerSpec::Relu => Layer::Relu,
                });
            }
            blocks.push(Block {
                layers,
                skip: b.skip,
            });
        }
        let head = DenseParams::new(spec.head.in_features, spec.head.out_features);
        Ok(Model { spec, blocks, head })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Disables or enables an identity shortcut (for gradient-flow experiments).
    pub fn set_skip(&mut self, block: usize, enabled: bool) {
        self.blocks[block].skip = enabled;
        self.spec.blocks[block].skip = enabled;
    }

    pub fn num_classes(&self) -> usize {
        self.head.out_features
    }

    /// Trainable parameter slices: per layer conv weight, conv bias, BN gamma,
    /// BN beta; then head weight and bias.
    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for block in &mut self.blocks {
            for layer in &mut block.layers {
                match layer {
                    Layer::Conv(c) => {
                        out.push(&mut c.weight);
                        if let Some(b) = &mut c.bias {
                            out.push(b);
                        }
                    }
                    Layer::BatchNorm(bn) => {
                        out.push(&mut bn.gamma);
                        out.push(&mut bn.beta);
                    }
                    Layer::Relu => {}
                }
            }
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn trainable_param_count(&self) -> usize {
        self.value_counts().0
    }

    /// (trainable, running-statistic) value counts.
    fn value_counts(&self) -> (usize, usize) {
        let mut trainable = self.head.param_count();
        let mut running = 0;
        for block in &self.blocks {
            for layer in &block.layers {
                match layer {
                    Layer::Conv(c) => trainable += c.param_count(),
                    Layer::BatchNorm(bn) => {
                        trainable += 2 * bn.channels();
                        running += 2 * bn.channels();
                    }
                    Layer::Relu => {}
                }
            }
        }
        (trainable, running)
    }

    /// Every stored value (trainable plus running statistics).
    pub fn stored_value_count(&self) -> usize {
        let (a, b) = self.value_counts();
        a + b
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.channels() != self.spec.input_channels {
            return Err(Error::Shape {
                op: "model",
                dim: "channels",
                expected: self.spec.input_channels,
                actual: input.channels(),
            });
        }
        if input.len() != self.spec.input_length {
            return Err(Error::Shape {
                op: "model",
                dim: "beat length",
                expected: self.spec.input_length,
                actual: input.len(),
            });
        }
        Ok(())
    }

    /// Forward pass keeping the activations needed for backprop. In training
    /// mode batch-norm layers use batch statistics and update running stats.
    pub fn forward(&mut self, input: &Tensor<T>, training: bool) -> Result<ForwardPass<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let block_in = block.skip.then(|| x.clone());
            let mut bc = Vec::with_capacity(block.layers.len());
            for layer in &mut block.layers {
                x = match layer {
                    Layer::Conv(c) => {
                        let y = conv1d_forward(&x, c)?;
                        bc.push(LayerCache::Conv(x));
                        y
                    }
                    Layer::BatchNorm(bn) => {
                        let (y, cache) = batchnorm1d(&x, bn, training)?;
                        bc.push(LayerCache::BatchNorm(cache));
                        y
                    }
                    Layer::Relu => {
                        let y = relu(&x);
                        bc.push(LayerCache::Relu(x));
                        y
                    }
                };
            }
            if let Some(skip) = block_in {
                x = x.add(&skip)?;
            }
            caches.push(bc);
        }
        let pooled = global_avg_pool(&x)?;
        let logits = dense_forward(&pooled, &self.head)?;
        Ok(ForwardPass {
            caches,
            features: x,
            pooled,
            logits,
        })
    }

    /// Inference-mode forward pass that leaves the model untouched.
    pub fn forward_eval(&self, input: &Tensor<T>) -> Result<ForwardPass<T>> {
        // BN in inference mode reads but never writes its statistics.
        let mut scratch = self.clone();
        scratch.forward(input, false)
    }

    /// Class scores before softmax, computed without caching activations.
    pub fn logits(&self, input: &Tensor<T>) -> Result<ClassScores<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for block in &self.blocks {
            let block_in = block.skip.then(|| x.clone());
            for layer in &block.layers {
                x = match layer {
                    Layer::Conv(c) => conv1d_forward(&x, c)?,
                    Layer::BatchNorm(bn) => batchnorm1d(&x, &mut bn.clone(), false)?.0,
                    Layer::Relu => relu(&x),
                };
            }
            if let Some(skip) = block_in {
                x = x.add(&skip)?;
            }
        }
        dense_forward(&global_avg_pool(&x)?, &self.head)
    }

    /// Class probabilities for `(n, 1, 360)` beats, using running BN statistics.
    pub fn predict(&self, beats: &Tensor<T>) -> Result<ClassScores<T>> {
        Ok(softmax(&self.logits(beats)?))
    }

    /// Gradients of the head only: returns head parameter gradients and the
    /// gradient with respect to the final feature maps.
    pub fn backward_head(
        &self,
        pass: &ForwardPass<T>,
        logit_grad: &ClassScores<T>,
    ) -> Result<(Vec<Vec<T>>, Tensor<T>)> {
        let dense = dense_backward(logit_grad, &pass.pooled, &self.head)?;
        let features = global_avg_pool_backward(&dense.input, pass.features.len())?;
        Ok((vec![dense.weight, dense.bias], features))
    }

    /// Full reverse pass from a gradient on the logits.
    pub fn backward(
        &self,
        pass: &ForwardPass<T>,
        logit_grad: &ClassScores<T>,
    ) -> Result<Gradients<T>> {
        let (head_grads, feature_grad) = self.backward_head(pass, logit_grad)?;
        let mut g = feature_grad.clone();
        let mut per_block: Vec<Vec<Vec<T>>> = Vec::with_capacity(self.blocks.len());
        for (block, caches) in self.blocks.iter().zip(&pass.caches).rev() {
            let skip_grad = block.skip.then(|| g.clone());
            let mut layer_grads: Vec<Vec<T>> = Vec::new();
            for (layer, cache) in block.layers.iter().zip(caches).rev() {
                g = match (layer, cache) {
                    (Layer::Conv(c), LayerCache::Conv(input)) => {
                        let cg = conv1d_backward(&g, Some(input), c)?;
                        if let Some(b) = cg.bias {
                            layer_grads.push(b);
                        }
                        layer_grads.push(cg.weight);
                        cg.input
                    }
                    (Layer::BatchNorm(bn), LayerCache::BatchNorm(cache)) => {
                        let bg = batchnorm1d_backward(&g, cache, bn)?;
                        layer_grads.push(bg.beta);
                        layer_grads.push(bg.gamma);
                        bg.input
                    }
                    (Layer::Relu, LayerCache::Relu(input)) => relu_backward(&g, input)?,
                    _ => {
                        return Err(Error::MissingCache {
                            op: "model backward",
                        })
                    }
                };
            }
            if let Some(s) = skip_grad {
                g = g.add(&s)?;
            }
            layer_grads.reverse();
            per_block.push(layer_grads);
        }
        per_block.reverse();
        let mut params: Vec<Vec<T>> = per_block.into_iter().flatten().collect();
        params.extend(head_grads);
        Ok(Gradients {
            params,
            features: feature_grad,
            input: g,
        })
    }

    /// Forward in training mode, softmax cross-entropy, and full backward.
    pub fn loss_and_grads(&mut self, input: &Tensor<T>, labels: &[usize]) -> Result<StepOutput<T>> {
        let pass = self.forward(input, true)?;
        let ce = softmax_cross_entropy(&pass.logits, labels)?;
        let grads = self.backward(&pass, &ce.logit_grad)?;
        Ok(StepOutput {
            loss: ce.loss,
            probabilities: ce.probabilities,
            grads,
        })
    }

    /// Converts every stored value to another float type.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let cv = |v: &[T]| {
            v.iter()
                .map(|x| U::from_f64_lossy(x.to_f64_lossy()))
                .collect::<Vec<U>>()
        };
        let blocks = self
            .blocks
            .iter()
            .map(|b| Block {
                skip: b.skip,
                layers: b
                    .layers
                    .iter()
                    .map(|l| match l {
                        Layer::Conv(c) => Layer::Conv(ConvParams {
                            mode: c.mode,
                            kernel_size: c.kernel_size,
                            in_channels: c.in_channels,
                            out_channels: c.out_channels,
                            stride: c.stride,
                            padding: c.padding,
                            weight: cv(&c.weight),
                            bias: c.bias.as_deref().map(cv),
                        }),
                        Layer::BatchNorm(bn) => Layer::BatchNorm(BatchNormParams {
                            gamma: cv(&bn.gamma),
                            beta: cv(&bn.beta),
                            running_mean: cv(&bn.running_mean),
                            running_var: cv(&bn.running_var),
                            epsilon: U::from_f64_lossy(bn.epsilon.to_f64_lossy()),
                            momentum: U::from_f64_lossy(bn.momentum.to_f64_lossy()),
                        }),
                        Layer::Relu => Layer::Relu,
                    })
                    .collect(),
            })
            .collect();
        Model {
            spec: self.spec.clone(),
            blocks,
            head: DenseParams {
                in_features: self.head.in_features,
                out_features: self.head.out_features,
                weight: cv(&self.head.weight),
                bias: cv(&self.head.bias),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::{ArchConfig, V1Config, V2Config, Variant};
    use crate::tensor::Shape;
    use crate::testutil::{central_diff, max_rel_err, random_tensor};

    #[test]
    fn zeroed_head_predicts_uniform() {
        let mut model = Model::<f32>::new(ModelSpec::default_for(Variant::V1), 1).unwrap();
        model.head.weight.iter_mut().for_each(|w| *w = 0.0);
        let beats = random_tensor(Shape::new(3, 1, 360), 2).cast::<f32>();
        let probs = model.predict(&beats).unwrap();
        assert!(probs.data.iter().all(|&p| (p - 0.2).abs() < 1e-6));
    }

    #[test]
    fn identical_beats_give_identical_rows() {
        let model = Model::<f32>::new(ModelSpec::default_for(Variant::V2), 4).unwrap();
        let one = random_tensor(Shape::new(1, 1, 360), 5).cast::<f32>();
        let beats = one.select(&[0, 0, 0, 0]);
        let probs = model.predict(&beats).unwrap();
        for r in 1..4 {
            assert_eq!(probs.row(0), probs.row(r));
        }
        for row in probs.rows() {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn wrong_beat_length_rejected() {
        let model = Model::<f32>::new(ModelSpec::default_for(Variant::V1), 1).unwrap();
        let err = model
            .predict(&Tensor::zeros(Shape::new(1, 1, 300)))
            .unwrap_err();
        assert!(err.to_string().contains("beat length"));
    }

    #[test]
    fn predict_matches_training_graph_in_inference_mode() {
        for variant in [Variant::V1, Variant::V2] {
            let model = Model::<f32>::new(ModelSpec::default_for(variant), 9).unwrap();
            let beats = random_tensor(Shape::new(2, 1, 360), 10).cast::<f32>();
            let a = model.predict(&beats).unwrap();
            let b = softmax(&model.forward_eval(&beats).unwrap().logits);
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    fn tiny_v2() -> ModelSpec {
        // shrunk V2 so that every parameter can be finite-differenced
        let mut spec = ModelSpec::build(&ArchConfig::V2(V2Config {
            stem_channels: 2,
            stem_kernel: 3,
            stem_stride: 2,
            kernel_size: 3,
            expansion: 2,
            channels: vec![2, 2, 3, 3, 2, 2, 2],
            strides: vec![1; 7],
        }))
        .unwrap();
        spec.input_length = 16;
        spec
    }

    #[test]
    fn whole_network_gradients_match_central_differences() {
        let spec = tiny_v2();
        let mut model = Model::<f64>::new(spec, 3).unwrap();
        let x = random_tensor(Shape::new(3, 1, 16), 4);
        let labels = [0, 3, 4];
        let out = model.loss_and_grads(&x, &labels).unwrap();
        let analytic: Vec<f64> = out.grads.params.concat();
        let flat: Vec<f64> = model.params_mut().iter().flat_map(|p| p.to_vec()).collect();
        let base = model.clone();
        let numeric = central_diff(&flat, 1e-5, |v| {
            let mut m = base.clone();
            let mut off = 0;
            for p in m.params_mut() {
                p.copy_from_slice(&v[off..off + p.len()]);
                off += p.len();
            }
            m.loss_and_grads(&x, &labels).unwrap().loss
        });
        assert!(max_rel_err(&analytic, &numeric) < 1e-4);

        let num_x = central_diff(x.data(), 1e-5, |v| {
            let mut m = base.clone();
            m.loss_and_grads(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap(), &labels)
                .unwrap()
                .loss
        });
        assert!(max_rel_err(out.grads.input.data(), &num_x) < 1e-4);
    }

    #[test]
    fn zeroed_block_path_is_identity() {
        let spec = tiny_v2();
        let mut model = Model::<f64>::new(spec, 1).unwrap();
        let idx = model.blocks.iter().position(|b| b.skip).unwrap();
        for layer in &mut model.blocks[idx].layers {
            match layer {
                Layer::Conv(c) => c.weight.iter_mut().for_each(|w| *w = 0.0),
                Layer::BatchNorm(bn) => {
                    bn.gamma.iter_mut().for_each(|w| *w = 0.0);
                    bn.beta.iter_mut().for_each(|w| *w = 0.0);
                }
                Layer::Relu => {}
            }
        }
        // features just before the skip block equal features just after it
        let x = random_tensor(Shape::new(2, 1, 16), 2);
        let mut head = model.clone();
        head.blocks.truncate(idx);
        let mut through = model.clone();
        through.blocks.truncate(idx + 1);
        let feats = |m: &Model<f64>| {
            let mut xx = x.clone();
            for block in &m.blocks {
                let inp = xx.clone();
                for layer in &block.layers {
                    xx = match layer {
                        Layer::Conv(c) => conv1d_forward(&xx, c).unwrap(),
                        Layer::BatchNorm(bn) => batchnorm1d(&xx, &mut bn.clone(), false).unwrap().0,
                        Layer::Relu => relu(&xx),
                    };
                }
                if block.skip {
                    xx = xx.add(&inp).unwrap();
                }
            }
            xx
        };
        assert_eq!(feats(&head).data(), feats(&through).data());
    }

    #[test]
    fn removing_skip_changes_early_gradients() {
        let spec = tiny_v2();
        let mut with = Model::<f64>::new(spec, 8).unwrap();
        let mut without = with.clone();
        for i in 0..without.blocks.len() {
            if without.blocks[i].skip {
                without.set_skip(i, false);
            }
        }
        let x = random_tensor(Shape::new(2, 1, 16), 6);
        let ga = with.loss_and_grads(&x, &[1, 2]).unwrap().grads.params[0].clone();
        let gb = without.loss_and_grads(&x, &[1, 2]).unwrap().grads.params[0].clone();
        let diff: f64 = ga.iter().zip(&gb).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 1e-8, "diff {diff}");
    }

    #[test]
    fn v1_custom_plan_builds() {
        let spec = ModelSpec::build(&ArchConfig::V1(V1Config {
            kernel_size: 3,
            channels: vec![4, 4, 4, 4, 10],
            strides: vec![3, 1, 1, 1, 1],
        }))
        .unwrap();
        let model = Model::<f32>::new(spec, 0).unwrap();
        assert_eq!(model.num_classes(), 5);
    }
}
