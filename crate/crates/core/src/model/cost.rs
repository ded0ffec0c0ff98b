//! Parameter, MAC and storage accounting.
//!
//! Convolution costs use the closed forms
//!
//! | layer     | parameters        | MACs                      |
//! |-----------|-------------------|---------------------------|
//! | standard  | `k * C_in * C_out`| `L' * C_out * k * C_in`   |
//! | depthwise | `k * C_in`        | `L' * C_in * k`           |
//! | pointwise | `C_in * C_out`    | `L' * C_in * C_out`       |
//!
//! Biases, batch-norm parameters and running statistics are itemised
//! separately so the bias-free identities can be checked directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::io::header_len;
use crate::model::spec::{LayerSpec, ModelSpec, Variant};
use crate::ops::conv::{conv_output_len, ConvMode};

pub const BYTES_PER_VALUE: usize = 4;
pub const KIB: f64 = 1024.0;

pub fn standard_params(k: usize, c_in: usize, c_out: usize) -> u64 {
    (k * c_in * c_out) as u64
}

pub fn depthwise_params(k: usize, c_in: usize) -> u64 {
    (k * c_in) as u64
}

pub fn pointwise_params(c_in: usize, c_out: usize) -> u64 {
    (c_in * c_out) as u64
}

pub fn standard_macs(out_len: usize, k: usize, c_in: usize, c_out: usize) -> u64 {
    (out_len * c_out * k * c_in) as u64
}

pub fn depthwise_macs(out_len: usize, k: usize, c_in: usize) -> u64 {
    (out_len * c_in * k) as u64
}

pub fn pointwise_macs(out_len: usize, c_in: usize, c_out: usize) -> u64 {
    (out_len * c_in * c_out) as u64
}

/// Depthwise-separable over standard parameter ratio, `1/C_out + 1/k`.
pub fn separable_ratio(k: usize, c_out: usize) -> f64 {
    1.0 / c_out as f64 + 1.0 / k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub block: String,
    pub layer: usize,
    /// `standard`, `depthwise`, `pointwise`, `batch_norm` or `dense`.
    pub kind: String,
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub out_length: usize,
    pub weights: u64,
    pub bias: u64,
    pub bn_learnable: u64,
    pub bn_running: u64,
    pub macs: u64,
}

impl LayerCost {
    pub fn stored_values(&self) -> u64 {
        self.weights + self.bias + self.bn_learnable + self.bn_running
    }
}

/// A depthwise convolution followed by a pointwise one, possibly with
/// batch norm and ReLU in between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparablePair {
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub depthwise_params: u64,
    pub pointwise_params: u64,
}

impl SeparablePair {
    /// Parameters of the standard convolution with the same `k`, `C_in`, `C_out`.
    pub fn standard_equivalent(&self) -> u64 {
        standard_params(self.kernel_size, self.in_channels, self.out_channels)
    }

    /// Exact integer check of `P_ds / P_std = 1/C_out + 1/k`.
    pub fn satisfies_ratio_identity(&self) -> bool {
        let lhs = (self.depthwise_params + self.pointwise_params) as u128
            * self.kernel_size as u128
            * self.out_channels as u128;
        let rhs =
            self.standard_equivalent() as u128 * (self.kernel_size + self.out_channels) as u128;
        lhs == rhs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTotals {
    pub weights: u64,
    pub bias: u64,
    pub bn_learnable: u64,
    pub bn_running: u64,
    /// weights + bias + BN learnable
    pub trainable: u64,
    /// trainable + BN running statistics
    pub stored: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub variant: Variant,
    pub input_length: usize,
    pub layers: Vec<LayerCost>,
    pub separable_pairs: Vec<SeparablePair>,
    pub totals: CostTotals,
    pub header_bytes: u64,
    pub serialized_bytes: u64,
    /// `serialized_bytes / 1024`
    pub serialized_kb: f64,
}

impl CostReport {
    pub fn new(spec: &ModelSpec, input_length: usize) -> Result<Self> {
        spec.block_shapes()?;
        let mut layers = Vec::new();
        let mut pairs = Vec::new();
        let mut length = input_length;
        let mut channels = spec.input_channels;
        for block in &spec.blocks {
            let mut prev_depthwise: Option<(usize, usize, u64)> = None;
            for (i, layer) in block.layers.iter().enumerate() {
                match *layer {
                    LayerSpec::Conv {
                        mode,
                        kernel_size: k,
                        in_channels: cin,
                        out_channels: cout,
                        stride,
                        padding,
                        bias,
                    } => {
                        let out_len =
                            conv_output_len(length, k, stride, padding).ok_or_else(|| {
                                Error::ChannelPlan(format!(
                                    "{}: input length {length} too short",
                                    block.name
                                ))
                            })?;
                        let (weights, macs) = match mode {
                            ConvMode::Standard => (
                                standard_params(k, cin, cout),
                                standard_macs(out_len, k, cin, cout),
                            ),
                            ConvMode::Depthwise => {
                                (depthwise_params(k, cin), depthwise_macs(out_len, k, cin))
                            }
                            ConvMode::Pointwise => (
                                pointwise_params(cin, cout),
                                pointwise_macs(out_len, cin, cout),
                            ),
                        };
                        match (mode, prev_depthwise) {
                            (ConvMode::Pointwise, Some((dk, dc, dw))) if dc == cin => {
                                pairs.push(SeparablePair {
                                    kernel_size: dk,
                                    in_channels: cin,
                                    out_channels: cout,
                                    depthwise_params: dw,
                                    pointwise_params: weights,
                                })
                            }
                            _ => {}
                        }
                        prev_depthwise = (mode == ConvMode::Depthwise).then_some((k, cin, weights));
                        layers.push(LayerCost {
                            block: block.name.clone(),
                            layer: i,
                            kind: mode.to_string(),
                            kernel_size: k,
                            in_channels: cin,
                            out_channels: cout,
                            out_length: out_len,
                            weights,
                            bias: if bias { cout as u64 } else { 0 },
                            bn_learnable: 0,
                            bn_running: 0,
                            macs,
                        });
                        length = out_len;
                        channels = cout;
                    }
                    LayerSpec::BatchNorm { channels: c } => {
                        layers.push(LayerCost {
                            block: block.name.clone(),
                            layer: i,
                            kind: "batch_norm".into(),
                            kernel_size: 0,
                            in_channels: c,
                            out_channels: c,
                            out_length: length,
                            weights: 0,
                            bias: 0,
                            bn_learnable: 2 * c as u64,
                            bn_running: 2 * c as u64,
                            macs: 0,
                        });
                    }
                    LayerSpec::Relu => {}
                }
            }
        }
        let head = &spec.head;
        layers.push(LayerCost {
            block: "head".into(),
            layer: 0,
            kind: "dense".into(),
            kernel_size: 0,
            in_channels: channels,
            out_channels: head.out_features,
            out_length: 1,
            weights: (head.in_features * head.out_features) as u64,
            bias: head.out_features as u64,
            bn_learnable: 0,
            bn_running: 0,
            macs: (head.in_features * head.out_features) as u64,
        });

        let sum = |f: fn(&LayerCost) -> u64| layers.iter().map(f).sum::<u64>();
        let weights = sum(|l| l.weights);
        let bias = sum(|l| l.bias);
        let bn_learnable = sum(|l| l.bn_learnable);
        let bn_running = sum(|l| l.bn_running);
        let trainable = weights + bias + bn_learnable;
        let stored = trainable + bn_running;
        let totals = CostTotals {
            weights,
            bias,
            bn_learnable,
            bn_running,
            trainable,
            stored,
            macs: sum(|l| l.macs),
        };
        let header_bytes = header_len(spec, stored as usize) as u64;
        let serialized_bytes = header_bytes + stored * BYTES_PER_VALUE as u64;
        Ok(CostReport {
            variant: spec.variant,
            input_length,
            layers,
            separable_pairs: pairs,
            totals,
            header_bytes,
            serialized_bytes,
            serialized_kb: serialized_bytes as f64 / KIB,
        })
    }

    /// Block count excluding the head.
    pub fn block_count(&self) -> usize {
        let mut names: Vec<&str> = self
            .layers
            .iter()
            .map(|l| l.block.as_str())
            .filter(|&b| b != "head")
            .collect();
        names.dedup();
        names.len()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "model {} (input length {})\n",
            self.variant, self.input_length
        );
        s.push_str(&format!(
            "{:<12} {:>3} {:<10} {:>3} {:>5} {:>5} {:>5} {:>8} {:>6} {:>8} {:>10}\n",
            "block", "#", "kind", "k", "C_in", "C_out", "L'", "weights", "bias", "bn(l+r)", "MACs"
        ));
        for l in &self.layers {
            s.push_str(&format!(
                "{:<12} {:>3} {:<10} {:>3} {:>5} {:>5} {:>5} {:>8} {:>6} {:>8} {:>10}\n",
                l.block,
                l.layer,
                l.kind,
                l.kernel_size,
                l.in_channels,
                l.out_channels,
                l.out_length,
                l.weights,
                l.bias,
                l.bn_learnable + l.bn_running,
                l.macs
            ));
        }
        let t = &self.totals;
        s.push_str(&format!(
            "totals: weights {} bias {} bn-learnable {} bn-running {} trainable {} stored {} MACs {}\n",
            t.weights, t.bias, t.bn_learnable, t.bn_running, t.trainable, t.stored, t.macs
        ));
        s.push_str(&format!(
            "serialized: {} bytes ({} header) = {:.2} KB\n",
            self.serialized_bytes, self.header_bytes, self.serialized_kb
        ));
        s
    }
}

/// Cost report at the spec's own input length.
pub fn count_params(spec: &ModelSpec) -> Result<CostReport> {
    CostReport::new(spec, spec.input_length)
}

/// Cost report with MACs propagated from `input_length`.
pub fn count_macs(spec: &ModelSpec, input_length: usize) -> Result<CostReport> {
    CostReport::new(spec, input_length)
}
