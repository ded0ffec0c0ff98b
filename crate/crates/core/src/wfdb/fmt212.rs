//! Format 212: pairs of 12-bit two's-complement samples packed in three bytes.

use crate::error::{Error, Result};

pub const MIN_SAMPLE: i32 = -2048;
pub const MAX_SAMPLE: i32 = 2047;

/// Bytes needed for `n_values` packed samples.
pub fn byte_len(n_values: usize) -> usize {
    (n_values * 3).div_ceil(2)
}

fn sign_extend_12(v: u16) -> i32 {
    let v = (v & 0x0FFF) as i32;
    if v & 0x800 != 0 {
        v - 0x1000
    } else {
        v
    }
}

/// Decodes `n_samples` frames of `n_channels` interleaved samples.
/// Returns one vector per channel.
pub fn decode_212(bytes: &[u8], n_samples: usize, n_channels: usize) -> Result<Vec<Vec<i32>>> {
    if n_channels == 0 {
        return Err(Error::invalid(
            "decode_212",
            "channel count must be positive",
        ));
    }
    let total = n_samples * n_channels;
    let needed = byte_len(total);
    if bytes.len() < needed {
        // offset of the first incomplete group
        let offset = (bytes.len() / 3) * 3;
        return Err(Error::Truncated {
            what: "format 212 signal",
            offset,
            needed: needed - bytes.len(),
        });
    }
    let mut channels = vec![Vec::with_capacity(n_samples); n_channels];
    for i in 0..total {
        let group = &bytes[(i / 2) * 3..];
        let raw = if i % 2 == 0 {
            ((group[1] as u16 & 0x0F) << 8) | group[0] as u16
        } else {
            ((group[1] as u16 & 0xF0) << 4) | group[2] as u16
        };
        channels[i % n_channels].push(sign_extend_12(raw));
    }
    Ok(channels)
}

/// Packs channel-major samples into interleaved format 212.
pub fn encode_212(channels: &[Vec<i32>]) -> Result<Vec<u8>> {
    let n_channels = channels.len();
    let n_samples = channels.first().map_or(0, Vec::len);
    if let Some((c, ch)) = channels
        .iter()
        .enumerate()
        .find(|(_, ch)| ch.len() != n_samples)
    {
        return Err(Error::invalid(
            "encode_212",
            format!(
                "channel {c} has {} samples, channel 0 has {n_samples}",
                ch.len()
            ),
        ));
    }
    let mut out = Vec::with_capacity(byte_len(n_samples * n_channels));
    let mut pending: Option<u16> = None;
    for t in 0..n_samples {
        for (c, ch) in channels.iter().enumerate() {
            let v = ch[t];
            if !(MIN_SAMPLE..=MAX_SAMPLE).contains(&v) {
                return Err(Error::invalid(
                    "encode_212",
                    format!("sample {v} at frame {t}, channel {c} outside 12-bit range"),
                ));
            }
            let u = (v & 0x0FFF) as u16;
            match pending.take() {
                None => pending = Some(u),
                Some(first) => {
                    out.push((first & 0xFF) as u8);
                    out.push((((u >> 8) & 0x0F) << 4) as u8 | ((first >> 8) & 0x0F) as u8);
                    out.push((u & 0xFF) as u8);
                }
            }
        }
    }
    if let Some(first) = pending {
        out.push((first & 0xFF) as u8);
        out.push(((first >> 8) & 0x0F) as u8);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bit_layout_examples() {
        let d = decode_212(&[0x34, 0x02, 0x00], 1, 2).unwrap();
        assert_eq!(d, vec![vec![564], vec![0]]);
        let d = decode_212(&[0x00, 0xF0, 0x1A], 1, 2).unwrap();
        assert_eq!(d[1], vec![-230]);
        assert_eq!(d[0], vec![0]);
        let d = decode_212(&[0xFF, 0x0F, 0x00], 2, 1).unwrap();
        assert_eq!(d[0], vec![-1, 0]);
    }

    #[test]
    fn record_100_prefix_bytes() {
        // first frame of record 100: 995 (MLII), 1011 (V5)
        let d = decode_212(&[227, 51, 243], 1, 2).unwrap();
        assert_eq!(d, vec![vec![995], vec![1011]]);
        assert_eq!(encode_212(&d).unwrap(), vec![227, 51, 243]);
    }

    #[test]
    fn truncated_stream_reports_offset() {
        let err = decode_212(&[1, 2, 3, 4, 5], 2, 2).unwrap_err();
        match err {
            Error::Truncated { offset, needed, .. } => {
                assert_eq!(offset, 3);
                assert_eq!(needed, 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn odd_value_count_uses_two_trailing_bytes() {
        let enc = encode_212(&[vec![100, -5, 7]]).unwrap();
        assert_eq!(enc.len(), byte_len(3));
        assert_eq!(enc.len(), 5);
        assert_eq!(decode_212(&enc, 3, 1).unwrap(), vec![vec![100, -5, 7]]);
    }

    #[test]
    fn encoder_rejects_bad_input() {
        assert!(encode_212(&[vec![2048]]).is_err());
        assert!(encode_212(&[vec![1, 2], vec![1]]).is_err());
        assert!(decode_212(&[], 0, 0).is_err());
    }

    #[test]
    fn random_streams_round_trip_bytewise() {
        for seed in 0..1000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n_groups = rng.gen_range(1..64);
            let bytes: Vec<u8> = (0..n_groups * 3).map(|_| rng.gen()).collect();
            let n_channels = if seed % 2 == 0 { 2 } else { 1 };
            let n_samples = n_groups * 2 / n_channels;
            let decoded = decode_212(&bytes, n_samples, n_channels).unwrap();
            assert_eq!(encode_212(&decoded).unwrap(), bytes, "seed {seed}");
        }
    }

    proptest! {
        #[test]
        fn prop_samples_round_trip(samples in prop::collection::vec(MIN_SAMPLE..=MAX_SAMPLE, 0..200), two in any::<bool>()) {
            let channels = if two && samples.len() % 2 == 0 {
                let (a, b): (Vec<_>, Vec<_>) = samples.chunks(2).map(|c| (c[0], c[1])).unzip();
                vec![a, b]
            } else {
                vec![samples]
            };
            let n = channels[0].len();
            let enc = encode_212(&channels).unwrap();
            prop_assert_eq!(decode_212(&enc, n, channels.len()).unwrap(), channels);
        }
    }
}
