//! Post-hoc explanations: 1D Grad-CAM and segment-level Shapley values.
//!
//! Grad-CAM differentiates the pre-softmax class score with respect to the
//! final feature maps. Shapley values treat contiguous beat segments as
//! players; an absent segment is replaced by the baseline beat and the game
//! value is the softmax probability of the target class.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::BeatDataset;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::ops::ClassScores;
use crate::tensor::{Scalar, Shape, Tensor};

/// Largest segment count accepted by exact enumeration (2^12 coalitions).
pub const MAX_EXACT_SEGMENTS: usize = 12;
pub const DEFAULT_SEGMENTS: usize = 12;
/// Largest segment count for which every permutation may be enumerated.
pub const MAX_EXHAUSTIVE_SEGMENTS: usize = 8;
/// Coalition values are memoised when the player count is at most this.
const CACHE_PLAYERS: usize = 16;
const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gradcam,
    ShapExact,
    ShapSampled,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gradcam => "gradcam",
            Method::ShapExact => "shap-exact",
            Method::ShapSampled => "shap-sampled",
        }
    }
}

/// Reference beat standing in for absent segments.
#[derive(Debug, Clone, PartialEq)]
pub enum Baseline {
    Zeros,
    Mean(Vec<f64>),
}

impl Baseline {
    pub fn kind(&self) -> BaselineKind {
        match self {
            Baseline::Zeros => BaselineKind::Zeros,
            Baseline::Mean(_) => BaselineKind::Mean,
        }
    }

    fn values(&self, len: usize) -> Result<Vec<f64>> {
        match self {
            Baseline::Zeros => Ok(vec![0.0; len]),
            Baseline::Mean(v) if v.len() == len => Ok(v.clone()),
            Baseline::Mean(v) => Err(Error::Shape {
                op: "shap baseline",
                dim: "beat length",
                expected: len,
                actual: v.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Zeros,
    Mean,
}

/// Per-sample mean over a dataset, the default masking baseline.
pub fn mean_beat(data: &BeatDataset) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Dataset("mean beat of an empty dataset".into()));
    }
    let len = data.beat(0).len();
    let mut sum = vec![0.0; len];
    for i in 0..data.len() {
        for (s, &v) in sum.iter_mut().zip(data.beat(i)) {
            *s += v as f64;
        }
    }
    Ok(sum.into_iter().map(|s| s / data.len() as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
}

/// `m` contiguous segments covering `0..len`, sizes differing by at most one.
pub fn segments(len: usize, m: usize) -> Result<Vec<Segment>> {
    if m == 0 || m > len {
        return Err(Error::invalid(
            "segments",
            format!("need 1..={len} segments, got {m}"),
        ));
    }
    Ok((0..m)
        .map(|i| Segment {
            start: i * len / m,
            end: (i + 1) * len / m,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub method: Method,
    pub class: usize,
    /// One score per time step (Grad-CAM) or per segment (Shapley).
    pub scores: Vec<f64>,
    /// Empty for per-time-step scores.
    pub segments: Vec<Segment>,
    pub baseline: Option<BaselineKind>,
    /// Game value with every segment present, `f(N)`.
    pub full_value: Option<f64>,
    /// Game value with every segment absent, `f(∅)`.
    pub empty_value: Option<f64>,
    pub draws: Option<usize>,
    pub seed: Option<u64>,
    /// Sampled scores are estimates.
    pub estimate: bool,
}

impl Attribution {
    /// Scores spread over the `len` time steps of the beat.
    pub fn per_timestep(&self, len: usize) -> Vec<f64> {
        if self.segments.is_empty() {
            return self.scores.clone();
        }
        let mut out = vec![0.0; len];
        for (seg, &s) in self.segments.iter().zip(&self.scores) {
            for v in &mut out[seg.start.min(len)..seg.end.min(len)] {
                *v = s;
            }
        }
        out
    }

    /// `f(N) - f(∅) - Σφ`; zero up to rounding for Shapley attributions.
    pub fn efficiency_gap(&self) -> Option<f64> {
        Some(self.full_value? - self.empty_value? - self.scores.iter().sum::<f64>())
    }
}

// ---------------------------------------------------------------- Grad-CAM

/// Class activation map on the feature timeline: `ReLU(Σ_k α_k A^k)` with `α_k` the
/// temporal mean of `∂y^c/∂A^k`. Both inputs are `[channel][time]`.
pub fn grad_cam_from_maps(features: &[Vec<f64>], grads: &[Vec<f64>]) -> Result<Vec<f64>> {
    if features.len() != grads.len() || features.is_empty() {
        return Err(Error::Shape {
            op: "grad_cam",
            dim: "feature channels",
            expected: features.len(),
            actual: grads.len(),
        });
    }
    let len = features[0].len();
    if len == 0 || features.iter().chain(grads).any(|m| m.len() != len) {
        return Err(Error::invalid(
            "grad_cam",
            "feature maps and gradients must share one non-zero length",
        ));
    }
    let mut map = vec![0.0; len];
    for (a, g) in features.iter().zip(grads) {
        let alpha = g.iter().sum::<f64>() / len as f64;
        for (m, &v) in map.iter_mut().zip(a) {
            *m += alpha * v;
        }
    }
    Ok(map.into_iter().map(|v| v.max(0.0)).collect())
}

/// Linear interpolation with end points aligned: sample `t` of the output
/// reads position `t (n-1)/(len-1)` of the input.
pub fn upsample_linear(map: &[f64], len: usize) -> Vec<f64> {
    match (map.len(), len) {
        (_, 0) => Vec::new(),
        (0, _) => vec![0.0; len],
        (1, _) => vec![map[0]; len],
        (_, 1) => vec![map[0]],
        (n, _) => (0..len)
            .map(|t| {
                let x = t as f64 * (n - 1) as f64 / (len - 1) as f64;
                let i = (x.floor() as usize).min(n - 2);
                let f = x - i as f64;
                map[i] * (1.0 - f) + map[i + 1] * f
            })
            .collect(),
    }
}

/// Scales to [0, 1]; a constant map becomes all zeros.
pub fn min_max_normalize(map: &[f64]) -> Vec<f64> {
    let lo = map.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; map.len()];
    }
    map.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

fn beat_tensor<T: Scalar>(beat: &[f64]) -> Result<Tensor<T>> {
    Tensor::from_vec(
        Shape::new(1, 1, beat.len()),
        beat.iter().map(|&v| T::from_f64_lossy(v)).collect(),
    )
}

fn check_class<T: Scalar>(model: &Model<T>, class: usize) -> Result<()> {
    if class >= model.num_classes() {
        return Err(Error::invalid(
            "explain",
            format!(
                "class index {class} out of range (model has {} classes)",
                model.num_classes()
            ),
        ));
    }
    Ok(())
}

/// Grad-CAM heatmap for one beat, upsampled to the beat length and min-max
/// normalised.
pub fn grad_cam<T: Scalar>(model: &Model<T>, beat: &[f64], class: usize) -> Result<Attribution> {
    check_class(model, class)?;
    let pass = model.forward_eval(&beat_tensor::<T>(beat)?)?;
    let mut seed = ClassScores::zeros(1, model.num_classes());
    seed.row_mut(0)[class] = T::one();
    let (_, feature_grad) = model.backward_head(&pass, &seed)?;
    let rows = |t: &Tensor<T>| -> Vec<Vec<f64>> {
        (0..t.channels())
            .map(|c| t.row(0, c).iter().map(|v| v.to_f64_lossy()).collect())
            .collect()
    };
    let raw = grad_cam_from_maps(&rows(&pass.features), &rows(&feature_grad))?;
    let scores = min_max_normalize(&upsample_linear(&raw, beat.len()));
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "grad-cam heatmap".into(),
        });
    }
    Ok(Attribution {
        method: Method::Gradcam,
        class,
        scores,
        segments: Vec::new(),
        baseline: None,
        full_value: None,
        empty_value: None,
        draws: None,
        seed: None,
        estimate: false,
    })
}

// ----------------------------------------------------------------- Shapley

/// A cooperative game over `players()` players. Coalitions are membership
/// masks; values are computed in batches so model games can vectorise.
pub trait CoalitionGame {
    fn players(&self) -> usize;
    fn values(&self, coalitions: &[Vec<bool>]) -> Result<Vec<f64>>;
}

/// Game defined by a closure over membership masks.
pub struct FnGame<F> {
    pub players: usize,
    pub value: F,
}

impl<F: Fn(&[bool]) -> f64> CoalitionGame for FnGame<F> {
    fn players(&self) -> usize {
        self.players
    }

    fn values(&self, coalitions: &[Vec<bool>]) -> Result<Vec<f64>> {
        Ok(coalitions.iter().map(|c| (self.value)(c)).collect())
    }
}

/// Class probability of a beat whose absent segments take baseline values.
pub struct ModelGame<'a, T> {
    model: &'a Model<T>,
    beat: Vec<f64>,
    baseline: Vec<f64>,
    segments: Vec<Segment>,
    class: usize,
    threads: usize,
}

impl<'a, T: Scalar> ModelGame<'a, T> {
    pub fn new(
        model: &'a Model<T>,
        beat: &[f64],
        class: usize,
        m: usize,
        baseline: &Baseline,
        threads: usize,
    ) -> Result<Self> {
        check_class(model, class)?;
        Ok(ModelGame {
            model,
            beat: beat.to_vec(),
            baseline: baseline.values(beat.len())?,
            segments: segments(beat.len(), m)?,
            class,
            threads: threads.max(1),
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    fn masked(&self, coalition: &[bool]) -> Vec<f64> {
        let mut x = self.baseline.clone();
        for (seg, _) in self
            .segments
            .iter()
            .zip(coalition)
            .filter(|(_, &present)| present)
        {
            x[seg.start..seg.end].copy_from_slice(&self.beat[seg.start..seg.end]);
        }
        x
    }

    fn eval_chunk(&self, chunk: &[Vec<bool>]) -> Result<Vec<f64>> {
        let len = self.beat.len();
        let mut data = Vec::with_capacity(chunk.len() * len);
        for c in chunk {
            data.extend(self.masked(c).into_iter().map(T::from_f64_lossy));
        }
        let probs = self
            .model
            .predict(&Tensor::from_vec(Shape::new(chunk.len(), 1, len), data)?)?;
        Ok(probs.rows().map(|r| r[self.class].to_f64_lossy()).collect())
    }
}

impl<T: Scalar> CoalitionGame for ModelGame<'_, T> {
    fn players(&self) -> usize {
        self.segments.len()
    }

    fn values(&self, coalitions: &[Vec<bool>]) -> Result<Vec<f64>> {
        let chunks: Vec<&[Vec<bool>]> = coalitions.chunks(EVAL_BATCH).collect();
        let threads = self.threads.min(chunks.len().max(1));
        let mut out = Vec::with_capacity(coalitions.len());
        if threads <= 1 {
            for c in chunks {
                out.extend(self.eval_chunk(c)?);
            }
            return Ok(out);
        }
        let per = chunks.len().div_ceil(threads);
        let results: Vec<Result<Vec<f64>>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunks
                .chunks(per)
                .map(|group| {
                    s.spawn(move || {
                        let mut v = Vec::new();
                        for c in group {
                            v.extend(self.eval_chunk(c)?);
                        }
                        Ok(v)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("coalition thread panicked"))
                .collect()
        });
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }
}

fn mask_of(bits: usize, m: usize) -> Vec<bool> {
    (0..m).map(|i| bits >> i & 1 == 1).collect()
}

/// Exact Shapley values by enumerating all `2^m` coalitions.
/// Returns `(φ, f(N), f(∅))`.
pub fn shapley_exact<G: CoalitionGame>(game: &G) -> Result<(Vec<f64>, f64, f64)> {
    let m = game.players();
    if m == 0 {
        return Err(Error::invalid("shap_exact", "game has no players"));
    }
    if m > MAX_EXACT_SEGMENTS {
        return Err(Error::Config(format!(
            "exact Shapley enumeration is limited to {MAX_EXACT_SEGMENTS} segments (got {m}); use sampled mode for more"
        )));
    }
    let n = 1usize << m;
    let coalitions: Vec<Vec<bool>> = (0..n).map(|b| mask_of(b, m)).collect();
    let v = game.values(&coalitions)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            context: "coalition value".into(),
        });
    }
    // weight(s) = s! (m - s - 1)! / m!
    let mut weight = vec![0.0; m];
    for (s, w) in weight.iter_mut().enumerate() {
        let mut x = 1.0 / m as f64;
        for j in 1..=s {
            x *= j as f64 / (m - j) as f64;
        }
        *w = x;
    }
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1 << i;
        let mut acc = 0.0;
        for s in (0..n).filter(|s| s & bit == 0) {
            acc += weight[s.count_ones() as usize] * (v[s | bit] - v[s]);
        }
        *p = acc;
    }
    Ok((phi, v[n - 1], v[0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Draws {
    /// Uniformly random permutations.
    Random(usize),
    /// Every one of the `m!` orderings once.
    AllPermutations,
}

/// Permutation-sampling Shapley estimate. Returns `(φ, f(N), f(∅), draws)`.
pub fn shapley_sampled<G: CoalitionGame>(
    game: &G,
    draws: Draws,
    seed: u64,
) -> Result<(Vec<f64>, f64, f64, usize)> {
    let m = game.players();
    if m == 0 {
        return Err(Error::invalid("shap_sampled", "game has no players"));
    }
    let orders: Box<dyn Iterator<Item = Vec<usize>>> = match draws {
        Draws::Random(0) => return Err(Error::invalid("shap_sampled", "draws must be at least 1")),
        Draws::Random(k) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..m).collect();
            Box::new((0..k).map(move |_| {
                perm.shuffle(&mut rng);
                perm.clone()
            }))
        }
        Draws::AllPermutations => {
            if m > MAX_EXHAUSTIVE_SEGMENTS {
                return Err(Error::Config(format!(
                    "enumerating all permutations is limited to {MAX_EXHAUSTIVE_SEGMENTS} segments (got {m})"
                )));
            }
            Box::new(Permutations::new(m))
        }
    };
    let mut cache: HashMap<Vec<bool>, f64> = HashMap::new();
    let use_cache = m <= CACHE_PLAYERS;
    let mut phi = vec![0.0; m];
    let mut count = 0usize;
    let mut pending: Vec<Vec<usize>> = Vec::new();
    let batch_orders = (EVAL_BATCH / (m + 1)).max(1);

    let mut flush = |pending: &mut Vec<Vec<usize>>, phi: &mut [f64]| -> Result<()> {
        let chains: Vec<Vec<Vec<bool>>> = pending
            .iter()
            .map(|order| {
                let mut mask = vec![false; m];
                let mut chain = vec![mask.clone()];
                for &p in order {
                    mask[p] = true;
                    chain.push(mask.clone());
                }
                chain
            })
            .collect();
        let mut todo: Vec<Vec<bool>> = Vec::new();
        for c in chains.iter().flatten() {
            if !use_cache || !cache.contains_key(c) {
                todo.push(c.clone());
            }
        }
        if use_cache {
            todo.sort();
            todo.dedup();
        }
        let vals = game.values(&todo)?;
        if vals.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "coalition value".into(),
            });
        }
        let local: HashMap<&Vec<bool>, f64> = todo.iter().zip(vals.iter().copied()).collect();
        let lookup = |c: &Vec<bool>| {
            local
                .get(c)
                .copied()
                .or_else(|| cache.get(c).copied())
                .expect("coalition evaluated")
        };
        for (order, chain) in pending.iter().zip(&chains) {
            for (step, &p) in order.iter().enumerate() {
                phi[p] += lookup(&chain[step + 1]) - lookup(&chain[step]);
            }
        }
        if use_cache {
            for (c, v) in todo.iter().zip(vals) {
                cache.insert(c.clone(), v);
            }
        }
        pending.clear();
        Ok(())
    };

    for order in orders {
        pending.push(order);
        count += 1;
        if pending.len() == batch_orders {
            flush(&mut pending, &mut phi)?;
        }
    }
    flush(&mut pending, &mut phi)?;
    let ends = game.values(&[vec![true; m], vec![false; m]])?;
    for p in &mut phi {
        *p /= count as f64;
    }
    Ok((phi, ends[0], ends[1], count))
}

/// Lexicographic enumeration of all orderings of `0..m`.
struct Permutations {
    next: Option<Vec<usize>>,
}

impl Permutations {
    fn new(m: usize) -> Self {
        Permutations {
            next: Some((0..m).collect()),
        }
    }
}

impl Iterator for Permutations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.next.take()?;
        let mut p = cur.clone();
        if let Some(i) = (0..p.len().saturating_sub(1))
            .rev()
            .find(|&i| p[i] < p[i + 1])
        {
            let j = (i + 1..p.len())
                .rev()
                .find(|&j| p[j] > p[i])
                .expect("successor exists");
            p.swap(i, j);
            p[i + 1..].reverse();
            self.next = Some(p);
        }
        Some(cur)
    }
}

/// Exact segment Shapley values of the class probability.
pub fn shap_exact<T: Scalar>(
    model: &Model<T>,
    beat: &[f64],
    class: usize,
    m: usize,
    baseline: &Baseline,
    threads: usize,
) -> Result<Attribution> {
    if m > MAX_EXACT_SEGMENTS {
        return Err(Error::Config(format!(
            "exact Shapley enumeration is limited to {MAX_EXACT_SEGMENTS} segments (got {m}); use sampled mode for more"
        )));
    }
    let game = ModelGame::new(model, beat, class, m, baseline, threads)?;
    let (scores, full, empty) = shapley_exact(&game)?;
    Ok(Attribution {
        method: Method::ShapExact,
        class,
        scores,
        segments: game.segments().to_vec(),
        baseline: Some(baseline.kind()),
        full_value: Some(full),
        empty_value: Some(empty),
        draws: None,
        seed: None,
        estimate: false,
    })
}

/// Sampled segment Shapley values; `m = beat.len()` gives per-time-step
/// estimates.
#[allow(clippy::too_many_arguments)]
pub fn shap_sampled<T: Scalar>(
    model: &Model<T>,
    beat: &[f64],
    class: usize,
    m: usize,
    baseline: &Baseline,
    draws: Draws,
    seed: u64,
    threads: usize,
) -> Result<Attribution> {
    let game = ModelGame::new(model, beat, class, m, baseline, threads)?;
    let (scores, full, empty, count) = shapley_sampled(&game, draws, seed)?;
    Ok(Attribution {
        method: Method::ShapSampled,
        class,
        scores,
        segments: game.segments().to_vec(),
        baseline: Some(baseline.kind()),
        full_value: Some(full),
        empty_value: Some(empty),
        draws: Some(count),
        seed: matches!(draws, Draws::Random(_)).then_some(seed),
        estimate: true,
    })
}

// ------------------------------------------------------------------ export

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
    Svg,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
            ExportFormat::Svg => "svg",
        }
    }
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            "svg" => Ok(ExportFormat::Svg),
            other => Err(Error::Config(format!(
                "unknown attribution format {other:?} (csv, json, svg)"
            ))),
        }
    }
}

/// JSON document: the attribution plus the beat it explains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionFile {
    pub attribution: Attribution,
    pub beat: Vec<f64>,
}

/// `t,beat,score` rows, one per time step.
pub fn attribution_csv(attr: &Attribution, beat: &[f64]) -> String {
    let mut s = String::from("t,beat,score\n");
    for (t, (b, v)) in beat.iter().zip(attr.per_timestep(beat.len())).enumerate() {
        let _ = writeln!(s, "{t},{b},{v}");
    }
    s
}

pub fn attribution_json(attr: &Attribution, beat: &[f64]) -> String {
    let doc = AttributionFile {
        attribution: attr.clone(),
        beat: beat.to_vec(),
    };
    serde_json::to_string_pretty(&doc).expect("attribution serialises") + "\n"
}

/// Beat trace over a colour band: red for positive scores, blue for negative,
/// opacity proportional to magnitude.
pub fn attribution_svg(attr: &Attribution, beat: &[f64]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 240.0;
    let n = beat.len().max(1);
    let dx = W / n as f64;
    let scores = attr.per_timestep(beat.len());
    let peak = scores.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let lo = beat.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = beat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        s,
        r#"<title>{} class {}</title>"#,
        attr.method.name(),
        attr.class
    );
    if peak > 0.0 {
        for (t, v) in scores.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            let colour = if *v > 0.0 { "#d62728" } else { "#1f77b4" };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="0" width="{:.2}" height="{H}" fill="{colour}" fill-opacity="{:.4}"/>"#,
                t as f64 * dx,
                dx,
                v.abs() / peak * 0.8
            );
        }
    }
    let points: Vec<String> = beat
        .iter()
        .enumerate()
        .map(|(t, b)| {
            format!(
                "{:.2},{:.2}",
                (t as f64 + 0.5) * dx,
                H - 10.0 - (b - lo) / span * (H - 20.0)
            )
        })
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="black" stroke-width="1.2" points="{}"/>"#,
        points.join(" ")
    );
    s.push_str("</svg>\n");
    s
}

/// Writes `<dir>/<stem>.<ext>` and returns its path.
pub fn export_attribution(
    attr: &Attribution,
    beat: &[f64],
    format: ExportFormat,
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<std::path::PathBuf> {
    let path = dir.as_ref().join(format!("{stem}.{}", format.extension()));
    let body = match format {
        ExportFormat::Csv => attribution_csv(attr, beat),
        ExportFormat::Json => attribution_json(attr, beat),
        ExportFormat::Svg => attribution_svg(attr, beat),
    };
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArchConfig, ModelSpec, V2Config};
    use proptest::prelude::*;
    use rand::Rng;

    fn game<F: Fn(&[bool]) -> f64>(players: usize, value: F) -> FnGame<F> {
        FnGame { players, value }
    }

    fn table_game(table: Vec<f64>) -> impl Fn(&[bool]) -> f64 {
        move |c: &[bool]| {
            table[c
                .iter()
                .enumerate()
                .map(|(i, &b)| (b as usize) << i)
                .sum::<usize>()]
        }
    }

    fn random_table(m: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..1 << m).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn two_player_game_by_orderings() {
        let g = game(2, table_game(vec![0.0, 1.0, 2.0, 4.0]));
        let (phi, full, empty) = shapley_exact(&g).unwrap();
        // Orderings (1,2): 1, 3; (2,1): 2, 2.
        let by_hand = [(1.0 + 2.0) / 2.0, (3.0 + 2.0) / 2.0];
        assert_eq!(phi, by_hand);
        assert_eq!((full, empty), (4.0, 0.0));
    }

    #[test]
    fn dummy_and_symmetric_players() {
        // Player 2 is a dummy; players 0 and 1 are symmetric.
        let g = game(3, |c: &[bool]| {
            let k = c[0] as u8 + c[1] as u8;
            [0.3, 1.1, 5.0][k as usize]
        });
        let (phi, ..) = shapley_exact(&g).unwrap();
        assert_eq!(phi[2], 0.0);
        assert!((phi[0] - phi[1]).abs() < 1e-12);
    }

    #[test]
    fn exact_rejects_too_many_segments() {
        let g = game(13, |_: &[bool]| 0.0);
        let msg = shapley_exact(&g).unwrap_err().to_string();
        assert!(msg.contains("sampled"), "{msg}");
    }

    #[test]
    fn all_permutations_equal_exact() {
        for m in 1..=5 {
            let g = game(m, table_game(random_table(m, m as u64)));
            let (exact, ..) = shapley_exact(&g).unwrap();
            let (sampled, _, _, count) = shapley_sampled(&g, Draws::AllPermutations, 0).unwrap();
            assert_eq!(count, (1..=m).product::<usize>());
            for (a, b) in exact.iter().zip(&sampled) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampled_is_deterministic_and_converges() {
        let g = game(4, table_game(random_table(4, 9)));
        let a = shapley_sampled(&g, Draws::Random(20_000), 3).unwrap();
        let b = shapley_sampled(&g, Draws::Random(20_000), 3).unwrap();
        assert_eq!(a, b);
        let (exact, ..) = shapley_exact(&g).unwrap();
        let mae = exact
            .iter()
            .zip(&a.0)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / 4.0;
        assert!(mae < 0.01, "{mae}");
        assert!(shapley_sampled(&g, Draws::Random(0), 0).is_err());
    }

    #[test]
    fn permutations_enumerated_once() {
        let all: Vec<Vec<usize>> = Permutations::new(4).collect();
        assert_eq!(all.len(), 24);
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, all);
    }

    #[test]
    fn grad_cam_hand_examples() {
        let one = grad_cam_from_maps(&[vec![0.0, 1.0, 2.0]], &[vec![1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(one, vec![0.0, 1.0, 2.0]);
        // Gradients averaging to 1 and -1.
        let a1 = vec![3.0, 1.0, 0.5];
        let a2 = vec![1.0, 2.0, 0.25];
        let two = grad_cam_from_maps(
            &[a1.clone(), a2.clone()],
            &[vec![2.0, 0.0, 1.0], vec![-1.0, -1.0, -1.0]],
        )
        .unwrap();
        let by_hand: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| (x - y).max(0.0)).collect();
        assert_eq!(by_hand, vec![2.0, 0.0, 0.25]);
        for (a, b) in two.iter().zip(&by_hand) {
            assert!((a - b).abs() < 1e-12);
        }
        let zero = grad_cam_from_maps(&[a1], &[vec![0.0; 3]]).unwrap();
        assert_eq!(
            min_max_normalize(&upsample_linear(&zero, 360)),
            vec![0.0; 360]
        );
    }

    #[test]
    fn upsampling_aligns_end_points() {
        let up = upsample_linear(&[0.0, 1.0, 2.0], 5);
        assert_eq!(up, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(upsample_linear(&[4.0], 3), vec![4.0; 3]);
        assert_eq!(min_max_normalize(&[1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.5]);
    }

    fn tiny_model() -> Model<f64> {
        let spec = ModelSpec::build(&ArchConfig::V2(V2Config {
            stem_channels: 8,
            expansion: 2,
            channels: vec![8, 8, 8, 8, 8, 8, 3],
            ..V2Config::default()
        }))
        .unwrap();
        Model::new(spec, 5).unwrap()
    }

    fn test_beat() -> Vec<f64> {
        (0..360)
            .map(|t| ((t as f64) / 20.0).sin() + if (170..190).contains(&t) { 3.0 } else { 0.0 })
            .collect()
    }

    #[test]
    fn grad_cam_on_model() {
        let mut model = tiny_model();
        let beat = test_beat();
        let attr = grad_cam(&model, &beat, 2).unwrap();
        assert_eq!(attr.scores.len(), 360);
        assert!(attr.scores.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(grad_cam(&model, &beat, 5).is_err());

        // Class 0 scores a positive multiple of feature map 1's mean: the
        // heatmap peaks where that map peaks.
        let k = model.head.in_features;
        model.head.weight.iter_mut().for_each(|w| *w = 0.0);
        model.head.weight[1] = 2.5;
        let pass = model
            .forward_eval(&beat_tensor::<f64>(&beat).unwrap())
            .unwrap();
        let map = pass.features.row(0, 1).to_vec();
        let len = map.len();
        let argmax = map
            .iter()
            .enumerate()
            .fold(0, |b, (i, v)| if *v > map[b] { i } else { b });
        let attr = grad_cam(&model, &beat, 0).unwrap();
        let peak = attr
            .scores
            .iter()
            .enumerate()
            .fold(0, |b, (i, v)| if *v > attr.scores[b] { i } else { b });
        let expected = argmax as f64 * 359.0 / (len - 1) as f64;
        assert!(
            (peak as f64 - expected).abs() <= 359.0 / (len - 1) as f64,
            "{peak} vs {expected}"
        );
        assert_eq!(k, model.head.in_features);

        // Class 1 has zero head weights: zero gradient, zero map.
        let zero = grad_cam(&model, &beat, 1).unwrap();
        assert!(zero.scores.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn model_shap_efficiency_and_convergence() {
        let model = tiny_model();
        let beat = test_beat();
        let exact = shap_exact(&model, &beat, 1, 4, &Baseline::Zeros, 1).unwrap();
        assert!(exact.efficiency_gap().unwrap().abs() < 1e-9);
        let sampled = shap_sampled(
            &model,
            &beat,
            1,
            4,
            &Baseline::Zeros,
            Draws::Random(20_000),
            11,
            2,
        )
        .unwrap();
        let mae = exact
            .scores
            .iter()
            .zip(&sampled.scores)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 4.0;
        assert!(mae < 0.01, "{mae}");
        assert_eq!(sampled.full_value, exact.full_value);
        assert!(shap_exact(&model, &beat, 1, 20, &Baseline::Zeros, 1).is_err());
        assert!(shap_exact(&model, &beat, 1, 4, &Baseline::Mean(vec![0.0; 10]), 1).is_err());
    }

    #[test]
    fn threads_do_not_change_values() {
        let model = tiny_model();
        let beat = test_beat();
        let a = shap_exact(&model, &beat, 3, 6, &Baseline::Zeros, 1).unwrap();
        let b = shap_exact(&model, &beat, 3, 6, &Baseline::Zeros, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exports() {
        let beat = test_beat();
        let attr = Attribution {
            method: Method::ShapExact,
            class: 0,
            scores: vec![0.5, -0.25, 0.0, 0.1],
            segments: segments(360, 4).unwrap(),
            baseline: Some(BaselineKind::Zeros),
            full_value: Some(0.9),
            empty_value: Some(0.55),
            draws: None,
            seed: None,
            estimate: false,
        };
        let csv = attribution_csv(&attr, &beat);
        assert_eq!(csv.lines().count(), 361);
        assert!(csv.lines().nth(100).unwrap().ends_with(",-0.25"));
        let doc: AttributionFile = serde_json::from_str(&attribution_json(&attr, &beat)).unwrap();
        assert_eq!(doc.attribution, attr);
        assert_eq!(doc.beat, beat);
        let svg = attribution_svg(&attr, &beat);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 270);
        let dir = tempfile::tempdir().unwrap();
        let p = export_attribution(&attr, &beat, ExportFormat::Svg, dir.path(), "x").unwrap();
        assert!(p.exists());
        assert!(export_attribution(
            &attr,
            &beat,
            ExportFormat::Csv,
            dir.path().join("missing"),
            "x"
        )
        .is_err());
    }

    #[test]
    fn segment_partition() {
        let s = segments(360, 7).unwrap();
        assert_eq!(s[0].start, 0);
        assert_eq!(s[6].end, 360);
        assert!(s.windows(2).all(|w| w[0].end == w[1].start));
        assert!(segments(360, 0).is_err());
    }

    proptest! {
        #[test]
        fn prop_axioms(m in 1usize..=6, seed in any::<u64>()) {
            let f = random_table(m, seed);
            let g_table = random_table(m, seed ^ 0xabcd);
            let (phi_f, full, empty) = shapley_exact(&game(m, table_game(f.clone()))).unwrap();
            prop_assert!((phi_f.iter().sum::<f64>() - (full - empty)).abs() < 1e-9);
            let (phi_g, ..) = shapley_exact(&game(m, table_game(g_table.clone()))).unwrap();
            let sum: Vec<f64> = f.iter().zip(&g_table).map(|(a, b)| a + b).collect();
            let (phi_sum, ..) = shapley_exact(&game(m, table_game(sum))).unwrap();
            for i in 0..m {
                prop_assert!((phi_sum[i] - phi_f[i] - phi_g[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn prop_grad_cam_non_negative(
            maps in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 1..5),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grads: Vec<Vec<f64>> = maps.iter().map(|m| m.iter().map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let raw = grad_cam_from_maps(&maps, &grads).unwrap();
            let norm = min_max_normalize(&upsample_linear(&raw, 360));
            prop_assert!(raw.iter().all(|&v| v >= 0.0));
            prop_assert!(norm.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
