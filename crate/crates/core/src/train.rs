//! Mini-batch training loop.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::BeatDataset;
use crate::error::{Error, Result};
use crate::model::{Model, Variant};
use crate::ops::optim::{Optimizer, OptimizerConfig};
use crate::tensor::{Scalar, Shape, Tensor};
use crate::BEAT_LEN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::V1,
            epochs: 30,
            batches_per_epoch: 500,
            batch_size: 48,
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batches_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs, batches per epoch and batch size must be positive".into(),
            ));
        }
        let lr = self.optimizer.learning_rate();
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        Ok(())
    }

    /// Whether one epoch draws at least as many beats as the training set holds.
    pub fn covers(&self, train_len: usize) -> bool {
        self.batch_size * self.batches_per_epoch >= train_len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss over the epoch.
    pub loss: f64,
    /// Training accuracy over the batches seen in the epoch.
    pub accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Loss of every optimisation step, in order.
    pub step_losses: Vec<f64>,
}

impl TrainHistory {
    /// Loss and accuracy per epoch. Wall time is left out so the file is
    /// reproducible byte for byte.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,accuracy\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6}",
                e.epoch, e.loss, e.accuracy
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Stacks rows of a dataset into a `(n, 1, 360)` tensor.
pub fn batch_tensor<T: Scalar>(data: &BeatDataset, indices: &[usize]) -> Tensor<T> {
    let mut values = Vec::with_capacity(indices.len() * BEAT_LEN);
    for &i in indices {
        values.extend(data.beat(i).iter().map(|&v| T::from_f64_lossy(v as f64)));
    }
    Tensor::from_vec(Shape::new(indices.len(), 1, BEAT_LEN), values)
        .expect("row length is BEAT_LEN")
}

/// Endless stream of shuffled indices, reshuffled after every full pass.
struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        BatchSampler { order, pos: 0, rng }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            let take = (size - out.len()).min(self.order.len() - self.pos);
            out.extend_from_slice(&self.order[self.pos..self.pos + take]);
            self.pos += take;
        }
        out
    }
}

/// Called after every epoch; return `false` to stop early.
pub type EpochCallback<'a> = dyn FnMut(&EpochRecord) -> bool + 'a;

/// Trains `model` in place. Deterministic for a given seed.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    data: &BeatDataset,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    train_with_callback(model, data, config, &mut |_| true)
}

pub fn train_with_callback<T: Scalar>(
    model: &mut Model<T>,
    data: &BeatDataset,
    config: &TrainConfig,
    on_epoch: &mut EpochCallback<'_>,
) -> Result<TrainHistory> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    if model.spec().variant != config.variant {
        return Err(Error::Config(format!(
            "model is {} but the training config asks for {}",
            model.spec().variant,
            config.variant
        )));
    }
    if !config.covers(data.len()) {
        log::warn!(
            "{} x {} beats per epoch do not cover the {} training beats",
            config.batches_per_epoch,
            config.batch_size,
            data.len()
        );
    }
    let labels = data.label_indices();
    let mut sampler = BatchSampler::new(data.len(), config.seed);
    let mut optimizer = Optimizer::<T>::new(config.optimizer);
    let mut history = TrainHistory::default();
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for batch in 1..=config.batches_per_epoch {
            let idx = sampler.next_batch(config.batch_size.min(data.len()));
            let x = batch_tensor::<T>(data, &idx);
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let step = model.loss_and_grads(&x, &y)?;
            let loss = step.loss.to_f64_lossy();
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("training loss at epoch {epoch}, batch {batch}"),
                });
            }
            let mut params = model.params_mut();
            optimizer
                .step(&mut params, &step.grads.params)
                .map_err(|e| match e {
                    Error::NonFinite { context } => Error::NonFinite {
                        context: format!("{context} at epoch {epoch}, batch {batch}"),
                    },
                    other => other,
                })?;
            correct += step
                .probabilities
                .argmax()
                .iter()
                .zip(&y)
                .filter(|(p, t)| p == t)
                .count();
            seen += y.len();
            loss_sum += loss;
            history.step_losses.push(loss);
        }
        let record = EpochRecord {
            epoch,
            loss: loss_sum / config.batches_per_epoch as f64,
            accuracy: correct as f64 / seen as f64,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.4}, accuracy {:.4}, {:.1}s",
            config.epochs,
            record.loss,
            record.accuracy,
            record.seconds
        );
        let keep_going = on_epoch(&record);
        history.epochs.push(record);
        if !keep_going {
            break;
        }
    }
    Ok(history)
}

/// Inference over a whole dataset in chunks, optionally on several threads.
/// Results do not depend on the thread count.
pub fn predict_dataset<T: Scalar>(
    model: &Model<T>,
    data: &BeatDataset,
    threads: usize,
) -> Result<Vec<Vec<f64>>> {
    const CHUNK: usize = 64;
    let idx: Vec<usize> = (0..data.len()).collect();
    let chunks: Vec<&[usize]> = idx.chunks(CHUNK).collect();
    let run = |chunk: &[usize]| -> Result<Vec<Vec<f64>>> {
        let probs = model.predict(&batch_tensor::<T>(data, chunk))?;
        Ok(probs
            .rows()
            .map(|r| r.iter().map(|v| v.to_f64_lossy()).collect())
            .collect())
    };
    let threads = threads.max(1).min(chunks.len().max(1));
    if threads == 1 {
        let mut out = Vec::with_capacity(data.len());
        for c in &chunks {
            out.extend(run(c)?);
        }
        return Ok(out);
    }
    let per_thread = chunks.len().div_ceil(threads);
    let results: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|s| {
        let handles: Vec<_> = chunks
            .chunks(per_thread)
            .map(|group| {
                s.spawn(move || {
                    let mut out = Vec::new();
                    for c in group {
                        out.extend(run(c)?);
                    }
                    Ok(out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("prediction thread panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(data.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
