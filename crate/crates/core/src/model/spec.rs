//! Layer-graph descriptions of the two network variants.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ops::conv::{conv_output_len, ConvMode};
use crate::{BEAT_LEN, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    V1,
    V2,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::V1 => "v1",
            Variant::V2 => "v2",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "v1" => Ok(Variant::V1),
            "v2" => Ok(Variant::V2),
            other => Err(Error::Config(format!(
                "unknown model variant {other:?} (expected v1 or v2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        mode: ConvMode,
        kernel_size: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
}

impl LayerSpec {
    fn conv(
        mode: ConvMode,
        kernel_size: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
    ) -> Self {
        let padding = if mode == ConvMode::Pointwise {
            0
        } else {
            kernel_size / 2
        };
        LayerSpec::Conv {
            mode,
            kernel_size,
            in_channels,
            out_channels,
            stride,
            padding,
            bias: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    /// Identity shortcut added to the block output.
    pub skip: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub in_features: usize,
    pub out_features: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub input_channels: usize,
    pub input_length: usize,
    pub blocks: Vec<BlockSpec>,
    pub head: HeadSpec,
}

/// V1: five blocks of `conv -> BN -> ReLU -> depthwise -> pointwise -> BN -> ReLU`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct V1Config {
    pub kernel_size: usize,
    /// Output channels of each block.
    pub channels: Vec<usize>,
    /// Stride of each block's standard convolution.
    pub strides: Vec<usize>,
}

impl Default for V1Config {
    fn default() -> Self {
        V1Config {
            kernel_size: 5,
            channels: vec![28, 56, 86, 56, 10],
            strides: vec![3, 1, 1, 1, 1],
        }
    }
}

/// V2: a strided stem followed by seven inverted bottlenecks
/// `pointwise expand -> BN -> ReLU -> depthwise -> BN -> ReLU -> pointwise project -> BN`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct V2Config {
    pub stem_channels: usize,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub kernel_size: usize,
    pub expansion: usize,
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
}

impl Default for V2Config {
    fn default() -> Self {
        V2Config {
            stem_channels: 16,
            stem_kernel: 7,
            stem_stride: 2,
            kernel_size: 5,
            expansion: 4,
            channels: vec![16, 24, 24, 32, 30, 19, 3],
            strides: vec![1; 7],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum ArchConfig {
    V1(V1Config),
    V2(V2Config),
}

impl ArchConfig {
    pub fn default_for(variant: Variant) -> Self {
        match variant {
            Variant::V1 => ArchConfig::V1(V1Config::default()),
            Variant::V2 => ArchConfig::V2(V2Config::default()),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            ArchConfig::V1(_) => Variant::V1,
            ArchConfig::V2(_) => Variant::V2,
        }
    }
}

pub const V1_BLOCKS: usize = 5;
pub const V1_FINAL_CHANNELS: usize = 10;
pub const V1_FINAL_LENGTH: usize = 120;
pub const V2_BLOCKS: usize = 7;
pub const V2_MAX_FINAL_CHANNELS: usize = 4;
pub const V2_FINAL_LENGTH_RANGE: (usize, usize) = (160, 200);

impl ModelSpec {
    pub fn build(config: &ArchConfig) -> Result<Self> {
        let spec = match config {
            ArchConfig::V1(c) => build_v1(c)?,
            ArchConfig::V2(c) => build_v2(c)?,
        };
        spec.check_variant_constraints()?;
        Ok(spec)
    }

    pub fn default_for(variant: Variant) -> Self {
        Self::build(&ArchConfig::default_for(variant)).expect("default channel plans are valid")
    }

    /// `(channels, length)` of every block output, starting from the input.
    pub fn block_shapes(&self) -> Result<Vec<(usize, usize)>> {
        let mut shapes = vec![(self.input_channels, self.input_length)];
        let (mut c, mut l) = (self.input_channels, self.input_length);
        for block in &self.blocks {
            let (c_in, l_in) = (c, l);
            for layer in &block.layers {
                match *layer {
                    LayerSpec::Conv {
                        kernel_size,
                        in_channels,
                        out_channels,
                        stride,
                        padding,
                        ..
                    } => {
                        if in_channels != c {
                            return Err(Error::ChannelPlan(format!(
                                "block {}: conv expects {in_channels} channels, receives {c}",
                                block.name
                            )));
                        }
                        l = conv_output_len(l, kernel_size, stride, padding).ok_or_else(|| {
                            Error::ChannelPlan(format!(
                                "block {}: length {l} too short for kernel",
                                block.name
                            ))
                        })?;
                        c = out_channels;
                    }
                    LayerSpec::BatchNorm { channels } if channels != c => {
                        return Err(Error::ChannelPlan(format!(
                            "block {}: batch norm over {channels} channels, receives {c}",
                            block.name
                        )));
                    }
                    _ => {}
                }
            }
            if block.skip && (c, l) != (c_in, l_in) {
                return Err(Error::ChannelPlan(format!(
                    "block {}: identity skip needs matching shapes, got ({c_in}, {l_in}) -> ({c}, {l})",
                    block.name
                )));
            }
            shapes.push((c, l));
        }
        if self.head.in_features != c {
            return Err(Error::ChannelPlan(format!(
                "head expects {} features, final map has {c} channels",
                self.head.in_features
            )));
        }
        Ok(shapes)
    }

    /// Shape of the last feature map before global pooling.
    pub fn feature_shape(&self) -> Result<(usize, usize)> {
        Ok(*self
            .block_shapes()?
            .last()
            .expect("input shape is always present"))
    }

    pub fn skip_count(&self) -> usize {
        self.blocks.iter().filter(|b| b.skip).count()
    }

    /// Output channels of each block.
    pub fn channel_plan(&self) -> Vec<usize> {
        self.block_shapes()
            .map(|s| s.iter().skip(1).map(|&(c, _)| c).collect())
            .unwrap_or_default()
    }

    fn check_variant_constraints(&self) -> Result<()> {
        let (channels, length) = self.feature_shape()?;
        match self.variant {
            Variant::V1 => {
                if self.blocks.len() != V1_BLOCKS {
                    return Err(Error::ChannelPlan(format!(
                        "V1 needs {V1_BLOCKS} blocks, got {}",
                        self.blocks.len()
                    )));
                }
                if (channels, length) != (V1_FINAL_CHANNELS, V1_FINAL_LENGTH) {
                    return Err(Error::ChannelPlan(format!(
                        "V1 final map must be ({V1_FINAL_CHANNELS}, {V1_FINAL_LENGTH}), got ({channels}, {length})"
                    )));
                }
            }
            Variant::V2 => {
                // the stem is block 0
                if self.blocks.len() != V2_BLOCKS + 1 {
                    return Err(Error::ChannelPlan(format!(
                        "V2 needs a stem and {V2_BLOCKS} bottlenecks, got {} blocks",
                        self.blocks.len()
                    )));
                }
                let (lo, hi) = V2_FINAL_LENGTH_RANGE;
                if channels > V2_MAX_FINAL_CHANNELS || !(lo..=hi).contains(&length) {
                    return Err(Error::ChannelPlan(format!(
                        "V2 final map must have <= {V2_MAX_FINAL_CHANNELS} channels and length in [{lo}, {hi}], got ({channels}, {length})"
                    )));
                }
                if self.skip_count() == 0 {
                    return Err(Error::ChannelPlan(
                        "V2 needs at least one identity skip".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serialises");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn build_v1(c: &V1Config) -> Result<ModelSpec> {
    if c.channels.len() != V1_BLOCKS || c.strides.len() != V1_BLOCKS {
        return Err(Error::ChannelPlan(format!(
            "V1 needs {V1_BLOCKS} channel and stride entries, got {} and {}",
            c.channels.len(),
            c.strides.len()
        )));
    }
    let k = c.kernel_size;
    let mut blocks = Vec::with_capacity(V1_BLOCKS);
    let mut cin = 1;
    for (i, (&cout, &stride)) in c.channels.iter().zip(&c.strides).enumerate() {
        if cout == 0 || stride == 0 {
            return Err(Error::ChannelPlan(format!(
                "block {}: zero channels or stride",
                i + 1
            )));
        }
        blocks.push(BlockSpec {
            name: format!("block{}", i + 1),
            layers: vec![
                LayerSpec::conv(ConvMode::Standard, k, cin, cout, stride),
                LayerSpec::BatchNorm { channels: cout },
                LayerSpec::Relu,
                LayerSpec::conv(ConvMode::Depthwise, k, cout, cout, 1),
                LayerSpec::conv(ConvMode::Pointwise, 1, cout, cout, 1),
                LayerSpec::BatchNorm { channels: cout },
                LayerSpec::Relu,
            ],
            skip: false,
        });
        cin = cout;
    }
    Ok(ModelSpec {
        variant: Variant::V1,
        input_channels: 1,
        input_length: BEAT_LEN,
        blocks,
        head: HeadSpec {
            in_features: cin,
            out_features: NUM_CLASSES,
        },
    })
}

fn build_v2(c: &V2Config) -> Result<ModelSpec> {
    if c.channels.len() != V2_BLOCKS || c.strides.len() != V2_BLOCKS {
        return Err(Error::ChannelPlan(format!(
            "V2 needs {V2_BLOCKS} channel and stride entries, got {} and {}",
            c.channels.len(),
            c.strides.len()
        )));
    }
    if c.expansion == 0 || c.stem_channels == 0 || c.channels.contains(&0) {
        return Err(Error::ChannelPlan(
            "V2 channel counts and expansion must be positive".into(),
        ));
    }
    let mut blocks = vec![BlockSpec {
        name: "stem".into(),
        layers: vec![
            LayerSpec::conv(
                ConvMode::Standard,
                c.stem_kernel,
                1,
                c.stem_channels,
                c.stem_stride,
            ),
            LayerSpec::BatchNorm {
                channels: c.stem_channels,
            },
            LayerSpec::Relu,
        ],
        skip: false,
    }];
    let mut cin = c.stem_channels;
    for (i, (&cout, &stride)) in c.channels.iter().zip(&c.strides).enumerate() {
        let hidden = cin * c.expansion;
        blocks.push(BlockSpec {
            name: format!("bottleneck{}", i + 1),
            layers: vec![
                LayerSpec::conv(ConvMode::Pointwise, 1, cin, hidden, 1),
                LayerSpec::BatchNorm { channels: hidden },
                LayerSpec::Relu,
                LayerSpec::conv(ConvMode::Depthwise, c.kernel_size, hidden, hidden, stride),
                LayerSpec::BatchNorm { channels: hidden },
                LayerSpec::Relu,
                LayerSpec::conv(ConvMode::Pointwise, 1, hidden, cout, 1),
                LayerSpec::BatchNorm { channels: cout },
            ],
            skip: cin == cout && stride == 1,
        });
        cin = cout;
    }
    Ok(ModelSpec {
        variant: Variant::V2,
        input_channels: 1,
        input_length: BEAT_LEN,
        blocks,
        head: HeadSpec {
            in_features: cin,
            out_features: NUM_CLASSES,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_v1_has_five_blocks_ending_at_10x120() {
        let spec = ModelSpec::default_for(Variant::V1);
        assert_eq!(spec.blocks.len(), 5);
        assert_eq!(spec.feature_shape().unwrap(), (10, 120));
        assert_eq!(spec.skip_count(), 0);
        for b in &spec.blocks {
            let modes: Vec<_> = b
                .layers
                .iter()
                .filter_map(|l| match l {
                    LayerSpec::Conv { mode, .. } => Some(*mode),
                    _ => None,
                })
                .collect();
            assert_eq!(
                modes,
                vec![ConvMode::Standard, ConvMode::Depthwise, ConvMode::Pointwise]
            );
        }
    }

    #[test]
    fn default_v2_has_seven_bottlenecks_with_skips() {
        let spec = ModelSpec::default_for(Variant::V2);
        assert_eq!(
            spec.blocks
                .iter()
                .filter(|b| b.name.starts_with("bottleneck"))
                .count(),
            7
        );
        assert!(spec.skip_count() >= 1);
        let (c, l) = spec.feature_shape().unwrap();
        assert!(c <= 4 && (160..=200).contains(&l), "({c}, {l})");
    }

    #[test]
    fn v1_plan_ending_in_8_channels_rejected() {
        let cfg = ArchConfig::V1(V1Config {
            channels: vec![28, 56, 88, 56, 8],
            ..V1Config::default()
        });
        assert!(matches!(ModelSpec::build(&cfg), Err(Error::ChannelPlan(_))));
        let wrong_len = ArchConfig::V1(V1Config {
            strides: vec![2, 1, 1, 1, 1],
            ..V1Config::default()
        });
        assert!(ModelSpec::build(&wrong_len).is_err());
    }

    #[test]
    fn v2_without_skips_or_too_wide_rejected() {
        let wide = ArchConfig::V2(V2Config {
            channels: vec![16, 24, 24, 32, 32, 20, 8],
            ..V2Config::default()
        });
        assert!(ModelSpec::build(&wide).is_err());
        let no_skip = ArchConfig::V2(V2Config {
            stem_channels: 12,
            channels: vec![16, 24, 28, 32, 36, 20, 3],
            ..V2Config::default()
        });
        assert!(ModelSpec::build(&no_skip).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ModelSpec::default_for(Variant::V1);
        assert_eq!(a.hash(), ModelSpec::default_for(Variant::V1).hash());
        assert_ne!(a.hash(), ModelSpec::default_for(Variant::V2).hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn variant_parses() {
        assert_eq!("V1".parse::<Variant>().unwrap(), Variant::V1);
        assert!("v3".parse::<Variant>().is_err());
    }
}
