//! Lightweight depthwise-separable 1D CNNs for single-lead ECG beat
//! classification.
//!
//! The crate covers the whole pipeline: WFDB ingestion ([`wfdb`],
//! [`dataset`]), wavelet denoising ([`wavelet`]), a small tensor engine with
//! hand-written backward passes ([`tensor`], [`ops`]), the two network
//! variants with parameter/MAC accounting ([`model`]), training and
//! evaluation reports ([`train`], [`metrics`]), Grad-CAM / Shapley
//! explanations ([`xai`]) and synthetic annotated records for running the
//! pipeline without the real database ([`synth`]).

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod wavelet;
pub mod wfdb;
pub mod xai;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use model::{Model, ModelSpec, Variant};
pub use tensor::{Scalar, Shape, Tensor};

/// Samples per beat window (one second at 360 Hz).
pub const BEAT_LEN: usize = 360;

/// NSR, LBBB, RBBB, APC, PVC.
pub const NUM_CLASSES: usize = 5;
