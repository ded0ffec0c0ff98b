//! Layer primitives with forward and reverse-mode implementations.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod optim;
pub mod pool;

pub use activation::{relu, relu_backward};
pub use batchnorm::{
    batchnorm1d, batchnorm1d_backward, BatchNormCache, BatchNormGrads, BatchNormParams,
};
pub use conv::{conv1d_backward, conv1d_forward, conv_output_len, ConvGrads, ConvMode, ConvParams};
pub use dense::{
    dense_backward, dense_forward, dense_softmax_ce, softmax, softmax_cross_entropy, ClassScores,
    DenseGrads, DenseParams, DenseSoftmaxOutput, SoftmaxCrossEntropy,
};
pub use optim::{Optimizer, OptimizerConfig};
pub use pool::{global_avg_pool, global_avg_pool_backward};
