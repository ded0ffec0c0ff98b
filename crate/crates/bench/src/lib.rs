//! Seeded inputs shared by the benchmarks.

use ecgnet_core::dataset::{BeatClass, BeatDataset, Provenance};
use ecgnet_core::synth::template_beat;
use ecgnet_core::{Shape, Tensor, BEAT_LEN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BATCH: usize = 48;

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_tensor(shape: Shape, seed: u64) -> Tensor<f32> {
    let data = random_vec(shape.numel(), seed).into_iter().map(|v| v as f32).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// Noisy class templates, cycling through the five classes.
pub fn beats(n: usize, seed: u64) -> BeatDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = BeatDataset::new();
    for i in 0..n {
        let class = BeatClass::ALL[i % BeatClass::ALL.len()];
        let beat: Vec<f64> = template_beat(class, BEAT_LEN)
            .into_iter()
            .map(|v| v + rng.gen_range(-0.05..0.05))
            .collect();
        let provenance = Provenance {
            record: "bench".into(),
            annotation_index: i,
            sample: i as u64,
        };
        data.push(&beat, class, provenance).expect("beat has BEAT_LEN samples");
    }
    data.preprocess();
    data
}

/// A two-channel format-212 sample stream of `n` frames.
pub fn adc_stream(n: usize, seed: u64) -> Vec<Vec<i32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..2)
        .map(|_| (0..n).map(|_| rng.gen_range(-2048..2048)).collect())
        .collect()
}
