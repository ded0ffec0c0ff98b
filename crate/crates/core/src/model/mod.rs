//! The two network variants: specs, trainable models, cost accounting and
//! the on-disk format.

pub mod cost;
pub mod io;
pub mod net;
pub mod spec;

pub use cost::{count_macs, count_params, CostReport, LayerCost, SeparablePair};
pub use net::{Block, ForwardPass, Gradients, Layer, Model, StepOutput};
pub use spec::{
    ArchConfig, BlockSpec, HeadSpec, LayerSpec, ModelSpec, V1Config, V2Config, Variant,
};
