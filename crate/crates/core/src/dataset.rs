//! Beat segmentation, class balancing, train/test splitting and the packed
//! beats file.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavelet;
use crate::wfdb::Record;
use crate::{BEAT_LEN, NUM_CLASSES};

/// Samples taken before the annotation; the window is `[t - 179, t + 180]`.
pub const WINDOW_BEFORE: usize = 179;
pub const WINDOW_AFTER: usize = 180;
pub const DEFAULT_TARGET_PER_CLASS: usize = 6000;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
pub const BEATS_MAGIC: &[u8; 5] = b"BEAT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BeatClass {
    #[serde(rename = "NSR")]
    Nsr,
    #[serde(rename = "LBBB")]
    Lbbb,
    #[serde(rename = "RBBB")]
    Rbbb,
    #[serde(rename = "APC")]
    Apc,
    #[serde(rename = "PVC")]
    Pvc,
}

impl BeatClass {
    pub const ALL: [BeatClass; NUM_CLASSES] = [
        BeatClass::Nsr,
        BeatClass::Lbbb,
        BeatClass::Rbbb,
        BeatClass::Apc,
        BeatClass::Pvc,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BeatClass::Nsr => "NSR",
            BeatClass::Lbbb => "LBBB",
            BeatClass::Rbbb => "RBBB",
            BeatClass::Apc => "APC",
            BeatClass::Pvc => "PVC",
        }
    }

    /// Annotation symbol mapped to this class.
    pub fn symbol(self) -> &'static str {
        match self {
            BeatClass::Nsr => "N",
            BeatClass::Lbbb => "L",
            BeatClass::Rbbb => "R",
            BeatClass::Apc => "A",
            BeatClass::Pvc => "V",
        }
    }

    /// `N -> NSR, L -> LBBB, R -> RBBB, A -> APC, V -> PVC`; anything else is excluded.
    pub fn from_symbol(symbol: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.symbol() == symbol)
    }
}

impl fmt::Display for BeatClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BeatClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown class {s:?} (expected NSR, LBBB, RBBB, APC or PVC)"
                ))
            })
    }
}

/// Where a beat came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub record: String,
    pub annotation_index: usize,
    pub sample: u64,
}

/// Beats stored row-major as `n x BEAT_LEN`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BeatDataset {
    beats: Vec<f32>,
    labels: Vec<BeatClass>,
    provenance: Vec<Provenance>,
}

impl BeatDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, beat: &[f64], label: BeatClass, provenance: Provenance) -> Result<()> {
        if beat.len() != BEAT_LEN {
            return Err(Error::Shape {
                op: "BeatDataset::push",
                dim: "beat length",
                expected: BEAT_LEN,
                actual: beat.len(),
            });
        }
        self.beats.extend(beat.iter().map(|&v| v as f32));
        self.labels.push(label);
        self.provenance.push(provenance);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn beat(&self, i: usize) -> &[f32] {
        &self.beats[i * BEAT_LEN..(i + 1) * BEAT_LEN]
    }

    pub fn beats(&self) -> &[f32] {
        &self.beats
    }

    pub fn labels(&self) -> &[BeatClass] {
        &self.labels
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|c| c.index()).collect()
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn class_counts(&self) -> ClassCounts {
        let mut counts = ClassCounts::default();
        for &l in &self.labels {
            counts.0[l.index()] += 1;
        }
        counts
    }

    /// Indices of the beats with the given label, in dataset order.
    pub fn indices_of(&self, class: BeatClass) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i] == class)
            .collect()
    }

    /// New dataset holding rows `indices` in that order (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = BeatDataset {
            beats: Vec::with_capacity(indices.len() * BEAT_LEN),
            labels: Vec::with_capacity(indices.len()),
            provenance: Vec::with_capacity(indices.len()),
        };
        for &i in indices {
            out.beats.extend_from_slice(self.beat(i));
            out.labels.push(self.labels[i]);
            out.provenance.push(self.provenance[i].clone());
        }
        out
    }

    pub fn extend(&mut self, other: BeatDataset) {
        self.beats.extend(other.beats);
        self.labels.extend(other.labels);
        self.provenance.extend(other.provenance);
    }

    /// Applies `f` to every beat in place.
    pub fn map_beats(&mut self, mut f: impl FnMut(&[f64]) -> Vec<f64>) {
        let mut buf = vec![0.0f64; BEAT_LEN];
        for row in self.beats.chunks_exact_mut(BEAT_LEN) {
            for (b, &v) in buf.iter_mut().zip(row.iter()) {
                *b = v as f64;
            }
            let out = f(&buf);
            debug_assert_eq!(out.len(), BEAT_LEN);
            for (r, v) in row.iter_mut().zip(out) {
                *r = v as f32;
            }
        }
    }

    /// Wavelet denoising followed by z-score normalisation, per beat.
    pub fn preprocess(&mut self) {
        self.map_beats(preprocess_beat);
    }

    pub fn preprocess_with(&mut self, params: &Preprocessing) {
        self.map_beats(|b| params.apply(b));
    }
}

/// Per-beat preprocessing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocessing {
    pub wavelet_levels: usize,
    /// Fixed soft threshold; `None` uses the universal threshold.
    pub threshold: Option<f64>,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Preprocessing {
            wavelet_levels: wavelet::DEFAULT_LEVELS,
            threshold: None,
        }
    }
}

impl Preprocessing {
    pub fn validate(&self) -> Result<()> {
        if self.wavelet_levels == 0 || self.wavelet_levels > wavelet::max_level(BEAT_LEN) {
            return Err(Error::Config(format!(
                "wavelet levels must be in 1..={} for {BEAT_LEN}-sample beats, got {}",
                wavelet::max_level(BEAT_LEN),
                self.wavelet_levels
            )));
        }
        if let Some(t) = self.threshold {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::Config(format!(
                    "threshold must be finite and non-negative, got {t}"
                )));
            }
        }
        Ok(())
    }

    /// Denoise then z-score one beat.
    pub fn apply(&self, beat: &[f64]) -> Vec<f64> {
        let denoised = match self.threshold {
            Some(t) => wavelet::denoise_with_threshold(beat, self.wavelet_levels, t),
            None => wavelet::denoise_levels(beat, self.wavelet_levels).0,
        };
        wavelet::normalize(&denoised)
    }

    pub fn describe(&self) -> String {
        let threshold = match self.threshold {
            Some(t) => format!("fixed threshold {t}"),
            None => "universal threshold".to_string(),
        };
        format!(
            "sym4 soft-threshold denoise (J={}, {threshold}) then z-score, per beat",
            self.wavelet_levels
        )
    }
}

/// The per-beat preprocessing chain with default parameters.
pub fn preprocess_beat(beat: &[f64]) -> Vec<f64> {
    Preprocessing::default().apply(beat)
}

/// Per-class counts; serialised as a `{"NSR": n, ...}` map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "BTreeMap<String, usize>", try_from = "BTreeMap<String, usize>")]
pub struct ClassCounts(pub [usize; NUM_CLASSES]);

impl From<ClassCounts> for BTreeMap<String, usize> {
    fn from(c: ClassCounts) -> Self {
        c.as_map()
    }
}

impl TryFrom<BTreeMap<String, usize>> for ClassCounts {
    type Error = Error;

    fn try_from(map: BTreeMap<String, usize>) -> Result<Self> {
        let mut counts = ClassCounts::default();
        for (name, n) in map {
            counts.0[name.parse::<BeatClass>()?.index()] = n;
        }
        Ok(counts)
    }
}

impl ClassCounts {
    pub fn get(&self, class: BeatClass) -> usize {
        self.0[class.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn as_map(&self) -> BTreeMap<String, usize> {
        BeatClass::ALL
            .iter()
            .map(|c| (c.name().to_string(), self.get(*c)))
            .collect()
    }

    pub fn add(&mut self, other: &ClassCounts) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SegmentReport {
    pub record: String,
    pub extracted: ClassCounts,
    /// Class beats whose window crosses a record boundary.
    pub skipped_boundary: usize,
    /// Annotations whose symbol is outside the five classes.
    pub excluded_symbols: BTreeMap<String, usize>,
}

/// Cuts a window around every annotation of the five classes from
/// `channel`, in physical units. Windows crossing the record edge are skipped.
pub fn segment_beats(record: &Record, channel: usize) -> Result<(BeatDataset, SegmentReport)> {
    let signal = record.physical(channel)?;
    let mut data = BeatDataset::new();
    let mut report = SegmentReport {
        record: record.name().to_string(),
        ..Default::default()
    };
    for (i, ann) in record.annotations.iter().enumerate() {
        let symbol = ann.symbol().unwrap_or("?");
        let Some(class) = BeatClass::from_symbol(symbol) else {
            *report
                .excluded_symbols
                .entry(symbol.to_string())
                .or_default() += 1;
            continue;
        };
        let t = ann.sample as usize;
        if t < WINDOW_BEFORE || t + WINDOW_AFTER >= signal.len() {
            report.skipped_boundary += 1;
            continue;
        }
        data.push(
            &signal[t - WINDOW_BEFORE..=t + WINDOW_AFTER],
            class,
            Provenance {
                record: record.name().to_string(),
                annotation_index: i,
                sample: ann.sample,
            },
        )?;
        report.extracted.0[class.index()] += 1;
    }
    Ok((data, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Balance the pooled beats, then split: duplicates can land on both sides.
    PaperFaithful,
    /// Split unique beats first, then balance the training fold only.
    #[default]
    LeakageSafe,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::PaperFaithful => "paper-faithful",
            SplitMode::LeakageSafe => "leakage-safe",
        })
    }
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-faithful" => Ok(SplitMode::PaperFaithful),
            "leakage-safe" => Ok(SplitMode::LeakageSafe),
            other => Err(Error::Config(format!(
                "unknown split mode {other:?} (expected paper-faithful or leakage-safe)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceConfig {
    pub mode: SplitMode,
    pub target_per_class: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig {
            mode: SplitMode::default(),
            target_per_class: DEFAULT_TARGET_PER_CLASS,
            test_fraction: DEFAULT_TEST_FRACTION,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub mode: SplitMode,
    pub seed: u64,
    pub target_per_class: usize,
    pub test_fraction: f64,
    /// Unique beats available per class before balancing.
    pub available: ClassCounts,
    pub train: ClassCounts,
    pub test: ClassCounts,
    /// Beats added by duplication, per class (training fold only in leakage-safe mode).
    pub duplicated: ClassCounts,
    /// Beats dropped by undersampling, per class.
    pub dropped: ClassCounts,
    /// Provenances present in both folds.
    pub shared_provenance: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: BeatDataset,
    pub test: BeatDataset,
    pub report: SplitReport,
}

/// Draws exactly `target` indices from `pool`: without replacement when the
/// pool is large enough, otherwise every index once plus random duplicates.
fn resample(pool: &[usize], target: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, usize, usize) {
    let mut shuffled = pool.to_vec();
    shuffled.shuffle(rng);
    if pool.len() >= target {
        shuffled.truncate(target);
        (shuffled, 0, pool.len() - target)
    } else {
        let extra = target - pool.len();
        for _ in 0..extra {
            shuffled.push(pool[rng.gen_range(0..pool.len())]);
        }
        shuffled.shuffle(rng);
        (shuffled, extra, 0)
    }
}

fn test_count(n: usize, fraction: f64) -> usize {
    let k = (n as f64 * fraction).round() as usize;
    if n >= 2 {
        k.clamp(1, n - 1)
    } else {
        k.min(n)
    }
}

/// Balances classes to `target_per_class` and splits into train and test.
pub fn balance_and_split(data: &BeatDataset, config: &BalanceConfig) -> Result<Split> {
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must be in (0, 1), got {}",
            config.test_fraction
        )));
    }
    if config.target_per_class == 0 {
        return Err(Error::Config("target per class must be positive".into()));
    }
    let available = data.class_counts();
    let empty: Vec<&str> = BeatClass::ALL
        .iter()
        .filter(|c| available.get(**c) == 0)
        .map(|c| c.name())
        .collect();
    if empty.len() == BeatClass::ALL.len() {
        return Err(Error::Dataset("no beats of any class to balance".into()));
    }
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    let mut duplicated = ClassCounts::default();
    let mut dropped = ClassCounts::default();
    let mut notes = Vec::new();
    if !empty.is_empty() {
        notes.push(format!("no beats for {}; left out of both folds", empty.join(", ")));
    }
    for class in BeatClass::ALL {
        if available.get(class) == 0 {
            continue;
        }
        // independent stream per class so one class's size cannot shift another's draw
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(class.index() as u64 + 1);
        let pool = data.indices_of(class);
        let c = class.index();
        match config.mode {
            SplitMode::PaperFaithful => {
                let (balanced, dup, drop) = resample(&pool, config.target_per_class, &mut rng);
                duplicated.0[c] = dup;
                dropped.0[c] = drop;
                let n_test = test_count(balanced.len(), config.test_fraction);
                test_idx.extend_from_slice(&balanced[..n_test]);
                train_idx.extend_from_slice(&balanced[n_test..]);
            }
            SplitMode::LeakageSafe => {
                let mut unique = pool.clone();
                unique.shuffle(&mut rng);
                let n_test = test_count(unique.len(), config.test_fraction);
                let (test_pool, train_pool) = unique.split_at(n_test);
                let test_target = test_count(config.target_per_class, config.test_fraction);
                let train_target = config.target_per_class - test_target;
                let test_take = test_pool.len().min(test_target.max(1));
                test_idx.extend_from_slice(&test_pool[..test_take]);
                if train_pool.is_empty() {
                    notes.push(format!("{class}: only one beat, placed in the test fold"));
                    dropped.0[c] = test_pool.len() - test_take;
                    continue;
                }
                let (balanced, dup, drop) = resample(train_pool, train_target, &mut rng);
                duplicated.0[c] = dup;
                dropped.0[c] = drop + test_pool.len() - test_take;
                train_idx.extend(balanced);
            }
        }
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    train_idx.shuffle(&mut shuffle_rng);
    let train = data.subset(&train_idx);
    let test = data.subset(&test_idx);
    let train_prov: HashSet<&Provenance> = train.provenance().iter().collect();
    let shared_provenance = test
        .provenance()
        .iter()
        .filter(|p| train_prov.contains(p))
        .collect::<HashSet<_>>()
        .len();
    if config.mode == SplitMode::PaperFaithful && duplicated.total() > 0 {
        notes.push(format!(
            "paper-faithful mode duplicates minority beats before splitting; {shared_provenance} beats appear in both folds"
        ));
    }
    let report = SplitReport {
        mode: config.mode,
        seed: config.seed,
        target_per_class: config.target_per_class,
        test_fraction: config.test_fraction,
        available,
        train: train.class_counts(),
        test: test.class_counts(),
        duplicated,
        dropped,
        shared_provenance,
        notes,
    };
    Ok(Split {
        train,
        test,
        report,
    })
}

/// Summary written next to a prepared dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<String>,
    pub channel: usize,
    pub window: [i64; 2],
    pub preprocessing: String,
    pub segments: Vec<SegmentReport>,
    pub extracted: ClassCounts,
    pub skipped_boundary: usize,
    pub split: SplitReport,
}

impl DatasetManifest {
    pub fn new(
        segments: Vec<SegmentReport>,
        channel: usize,
        preprocessing: &Preprocessing,
        split: SplitReport,
    ) -> Self {
        let mut extracted = ClassCounts::default();
        let mut skipped_boundary = 0;
        for s in &segments {
            extracted.add(&s.extracted);
            skipped_boundary += s.skipped_boundary;
        }
        DatasetManifest {
            records: segments.iter().map(|s| s.record.clone()).collect(),
            channel,
            window: [-(WINDOW_BEFORE as i64), WINDOW_AFTER as i64],
            preprocessing: preprocessing.describe(),
            segments,
            extracted,
            skipped_boundary,
            split,
        }
    }
}

/// Segments, preprocesses and merges records in name order.
pub fn ingest_records(
    records: &[Record],
    channel: usize,
) -> Result<(BeatDataset, Vec<SegmentReport>)> {
    ingest_records_with(records, channel, &Preprocessing::default())
}

pub fn ingest_records_with(
    records: &[Record],
    channel: usize,
    preprocessing: &Preprocessing,
) -> Result<(BeatDataset, Vec<SegmentReport>)> {
    preprocessing.validate()?;
    let mut sorted: Vec<&Record> = records.iter().collect();
    sorted.sort_by(|a, b| a.name().cmp(b.name()));
    let mut all = BeatDataset::new();
    let mut reports = Vec::with_capacity(sorted.len());
    for r in sorted {
        let (mut beats, report) = segment_beats(r, channel)?;
        beats.preprocess_with(preprocessing);
        all.extend(beats);
        reports.push(report);
    }
    Ok((all, reports))
}

/// Encodes `BEAT1`, count (u32), beat length (u32), `f32` beats, `u8`
/// labels, then a length-prefixed JSON array of provenances.
pub fn encode_beats(data: &BeatDataset) -> Vec<u8> {
    let prov = serde_json::to_vec(&data.provenance).expect("provenance serialises");
    let mut out = Vec::with_capacity(13 + data.beats.len() * 4 + data.len() + 4 + prov.len());
    out.extend_from_slice(BEATS_MAGIC);
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out.extend_from_slice(&(BEAT_LEN as u32).to_le_bytes());
    for v in &data.beats {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend(data.labels.iter().map(|l| l.index() as u8));
    out.extend_from_slice(&(prov.len() as u32).to_le_bytes());
    out.extend_from_slice(&prov);
    out
}

pub fn decode_beats(bytes: &[u8]) -> Result<BeatDataset> {
    let take = |at: usize, n: usize, what: &'static str| -> Result<&[u8]> {
        bytes.get(at..at + n).ok_or(Error::Truncated {
            what,
            offset: bytes.len(),
            needed: (at + n).saturating_sub(bytes.len()),
        })
    };
    let magic = take(0, 5, "beats file")?;
    if magic != BEATS_MAGIC {
        return Err(Error::Dataset(format!("beats file: bad magic {magic:?}")));
    }
    let u32_at = |at: usize| -> Result<usize> {
        Ok(u32::from_le_bytes(take(at, 4, "beats file")?.try_into().expect("4 bytes")) as usize)
    };
    let n = u32_at(5)?;
    let len = u32_at(9)?;
    if len != BEAT_LEN {
        return Err(Error::Dataset(format!(
            "beats file: beat length {len}, expected {BEAT_LEN}"
        )));
    }
    let mut at = 13;
    let floats = take(at, n * len * 4, "beats file samples")?;
    let beats: Vec<f32> = floats
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    at += n * len * 4;
    let labels = take(at, n, "beats file labels")?
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            BeatClass::from_index(b as usize)
                .ok_or_else(|| Error::Dataset(format!("beats file: label {b} at beat {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    at += n;
    let prov_len = u32_at(at)?;
    at += 4;
    let provenance: Vec<Provenance> =
        serde_json::from_slice(take(at, prov_len, "beats file provenance")?)?;
    if provenance.len() != n {
        return Err(Error::Dataset(format!(
            "beats file: {} provenance entries for {n} beats",
            provenance.len()
        )));
    }
    if at + prov_len != bytes.len() {
        return Err(Error::Dataset("beats file: trailing bytes".into()));
    }
    Ok(BeatDataset {
        beats,
        labels,
        provenance,
    })
}

pub fn save_beats(data: &BeatDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_beats(data)).map_err(|e| Error::io(path, e))
}

pub fn load_beats(path: impl AsRef<Path>) -> Result<BeatDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_beats(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wfdb::{encode_212, parse_header, Annotation};
    use proptest::prelude::*;

    fn record(n: usize, anns: &[(u64, u8)]) -> Record {
        let h = parse_header(format!("r 1 360 {n}\nr.dat 212 200 11 0 0 0 0 MLII\n").as_bytes())
            .unwrap();
        let samples: Vec<i32> = (0..n).map(|i| (i % 1000) as i32 - 500).collect();
        let bytes = encode_212(&[samples]).unwrap();
        Record::from_parts(
            h,
            &bytes,
            anns.iter().map(|&(s, c)| Annotation::new(s, c)).collect(),
        )
        .unwrap()
    }

    fn toy_dataset(counts: [usize; 5]) -> BeatDataset {
        let mut d = BeatDataset::new();
        let mut k = 0;
        for (c, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                let beat = vec![k as f64; BEAT_LEN];
                d.push(
                    &beat,
                    BeatClass::from_index(c).unwrap(),
                    Provenance {
                        record: format!("r{}", k % 3),
                        annotation_index: k,
                        sample: 1000 + k as u64,
                    },
                )
                .unwrap();
                k += 1;
            }
        }
        d
    }

    #[test]
    fn preprocessing_params() {
        let beat: Vec<f64> = (0..BEAT_LEN).map(|t| (t as f64 * 0.07).sin() + 0.01 * (t % 7) as f64).collect();
        assert_eq!(Preprocessing::default().apply(&beat), preprocess_beat(&beat));
        // A zero threshold keeps every coefficient, so only the z-score remains.
        let kept = Preprocessing { threshold: Some(0.0), ..Default::default() }.apply(&beat);
        for (a, b) in kept.iter().zip(wavelet::normalize(&beat)) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(Preprocessing { wavelet_levels: 0, ..Default::default() }.validate().is_err());
        assert!(Preprocessing { wavelet_levels: 9, ..Default::default() }.validate().is_err());
        assert!(Preprocessing { threshold: Some(-1.0), ..Default::default() }.validate().is_err());
        assert!(Preprocessing::default().describe().contains("J=4"));
    }

    #[test]
    fn class_map() {
        assert_eq!(BeatClass::from_symbol("N"), Some(BeatClass::Nsr));
        assert_eq!(BeatClass::from_symbol("L"), Some(BeatClass::Lbbb));
        assert_eq!(BeatClass::from_symbol("R"), Some(BeatClass::Rbbb));
        assert_eq!(BeatClass::from_symbol("A"), Some(BeatClass::Apc));
        assert_eq!(BeatClass::from_symbol("V"), Some(BeatClass::Pvc));
        assert_eq!(BeatClass::from_symbol("/"), None);
        assert_eq!(BeatClass::from_symbol("a"), None);
        assert_eq!("pvc".parse::<BeatClass>().unwrap(), BeatClass::Pvc);
        assert!("X".parse::<BeatClass>().is_err());
    }

    #[test]
    fn segmentation_windows_and_skips() {
        // N at 100 underflows, '/' excluded, V at 1000 kept, N at 1900 overflows
        let r = record(2000, &[(100, 1), (500, 12), (1000, 5), (1900, 1)]);
        let (d, rep) = segment_beats(&r, 0).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.labels(), &[BeatClass::Pvc]);
        assert_eq!(rep.skipped_boundary, 2);
        assert_eq!(rep.excluded_symbols.get("/"), Some(&1));
        let expected_first = ((1000 - 179) % 1000) as f32 - 500.0;
        assert_eq!(d.beat(0)[0], expected_first / 200.0);
        assert_eq!(d.beat(0).len(), 360);
        assert_eq!(d.provenance()[0].annotation_index, 2);
    }

    #[test]
    fn window_edges_inclusive() {
        // t = 179 is the first centre whose window starts at 0; t = n - 181 the last
        let r = record(1000, &[(178, 1), (179, 1), (819, 1), (820, 1)]);
        let (d, rep) = segment_beats(&r, 0).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(rep.skipped_boundary, 2);
    }

    #[test]
    fn paper_faithful_balances_then_splits() {
        let data = toy_dataset([50, 8, 20, 3, 12]);
        let cfg = BalanceConfig {
            mode: SplitMode::PaperFaithful,
            target_per_class: 30,
            test_fraction: 0.2,
            seed: 4,
        };
        let s = balance_and_split(&data, &cfg).unwrap();
        for c in BeatClass::ALL {
            assert_eq!(s.report.train.get(c), 24);
            assert_eq!(s.report.test.get(c), 6);
        }
        assert_eq!(s.report.duplicated.get(BeatClass::Apc), 27);
        assert_eq!(s.report.dropped.get(BeatClass::Nsr), 20);
        assert!(s.report.shared_provenance > 0);
        assert!(!s.report.notes.is_empty());
    }

    #[test]
    fn leakage_safe_folds_are_disjoint() {
        let data = toy_dataset([50, 8, 20, 3, 12]);
        let cfg = BalanceConfig {
            mode: SplitMode::LeakageSafe,
            target_per_class: 30,
            test_fraction: 0.2,
            seed: 4,
        };
        let s = balance_and_split(&data, &cfg).unwrap();
        assert_eq!(s.report.shared_provenance, 0);
        let train: HashSet<_> = s.train.provenance().iter().collect();
        assert!(s.test.provenance().iter().all(|p| !train.contains(p)));
        for c in BeatClass::ALL {
            assert_eq!(s.report.train.get(c), 24);
            let n = data.class_counts().get(c);
            assert_eq!(s.report.test.get(c), test_count(n, 0.2).min(6));
        }
    }

    #[test]
    fn empty_class_left_out_with_note() {
        for mode in [SplitMode::PaperFaithful, SplitMode::LeakageSafe] {
            let cfg = BalanceConfig { mode, target_per_class: 10, ..Default::default() };
            let s = balance_and_split(&toy_dataset([5, 5, 0, 5, 5]), &cfg).unwrap();
            assert_eq!(s.report.train.get(BeatClass::Rbbb) + s.report.test.get(BeatClass::Rbbb), 0);
            assert!(s.report.train.get(BeatClass::Nsr) > 0);
            assert!(s.report.notes.iter().any(|n| n.contains("RBBB")), "{:?}", s.report.notes);
        }
        let err = balance_and_split(&toy_dataset([0; 5]), &BalanceConfig::default()).unwrap_err();
        assert!(err.to_string().contains("no beats"));
    }

    #[test]
    fn same_seed_same_split() {
        let data = toy_dataset([40, 9, 20, 5, 12]);
        for mode in [SplitMode::PaperFaithful, SplitMode::LeakageSafe] {
            let cfg = BalanceConfig {
                mode,
                target_per_class: 25,
                test_fraction: 0.2,
                seed: 11,
            };
            let a = balance_and_split(&data, &cfg).unwrap();
            let b = balance_and_split(&data, &cfg).unwrap();
            assert_eq!(a.train, b.train);
            assert_eq!(a.test, b.test);
            let other = balance_and_split(
                &data,
                &BalanceConfig {
                    seed: 12,
                    ..cfg.clone()
                },
            )
            .unwrap();
            assert_ne!(a.train.provenance(), other.train.provenance());
        }
    }

    #[test]
    fn class_counts_serialise_as_map() {
        let c = ClassCounts([1, 2, 3, 4, 5]);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"{"APC":4,"LBBB":2,"NSR":1,"PVC":5,"RBBB":3}"#);
        assert_eq!(serde_json::from_str::<ClassCounts>(&json).unwrap(), c);
        assert!(serde_json::from_str::<ClassCounts>(r#"{"X":1}"#).is_err());
    }

    #[test]
    fn beats_file_round_trip_and_errors() {
        let data = toy_dataset([2, 1, 1, 1, 1]);
        let bytes = encode_beats(&data);
        assert_eq!(decode_beats(&bytes).unwrap(), data);
        assert!(decode_beats(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_beats(&bad).is_err());
        let mut bad_label = bytes.clone();
        bad_label[13 + 6 * BEAT_LEN * 4] = 9;
        assert!(decode_beats(&bad_label).is_err());
    }

    #[test]
    fn preprocess_normalises_each_beat() {
        let mut d = BeatDataset::new();
        let beat: Vec<f64> = (0..BEAT_LEN)
            .map(|i| (i as f64 * 0.1).sin() * 3.0 + 1.0)
            .collect();
        let p = Provenance {
            record: "x".into(),
            annotation_index: 0,
            sample: 0,
        };
        d.push(&beat, BeatClass::Nsr, p.clone()).unwrap();
        d.push(&[2.0; BEAT_LEN], BeatClass::Nsr, p).unwrap();
        d.preprocess();
        let b = d.beat(0);
        let mean: f64 = b.iter().map(|&v| v as f64).sum::<f64>() / BEAT_LEN as f64;
        assert!(mean.abs() < 1e-5);
        assert!(d.beat(1).iter().all(|&v| v == 0.0));
        assert!(d
            .push(&[0.0; 10], BeatClass::Nsr, d.provenance()[0].clone())
            .is_err());
    }

    proptest! {
        #[test]
        fn prop_split_stratified(counts in prop::array::uniform5(1usize..40), target in 5usize..60, seed in any::<u64>()) {
            let data = toy_dataset(counts);
            let cfg = BalanceConfig { mode: SplitMode::PaperFaithful, target_per_class: target, test_fraction: 0.2, seed };
            let s = balance_and_split(&data, &cfg).unwrap();
            for c in BeatClass::ALL {
                let test = s.report.test.get(c) as f64;
                prop_assert!((test - 0.2 * target as f64).abs() <= 1.0);
                prop_assert_eq!(s.report.train.get(c) + s.report.test.get(c), target);
            }
            prop_assert!(s.train.labels().iter().chain(s.test.labels()).all(|l| l.index() < NUM_CLASSES));
            let safe = balance_and_split(&data, &BalanceConfig { mode: SplitMode::LeakageSafe, ..cfg }).unwrap();
            prop_assert_eq!(safe.report.shared_provenance, 0);
        }
    }
}
