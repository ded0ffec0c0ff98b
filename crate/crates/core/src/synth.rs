//! Synthetic annotated ECG records.
//!
//! Beats are sums of Gaussian waves (P, Q, R, S, T) with class-specific
//! morphology, per-record and per-beat jitter, baseline wander and white
//! noise. Records are written in the same WFDB layout as the real database,
//! so they exercise the full ingest path. They stand in for MIT-BIH when the
//! real files are not available and carry no clinical meaning.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::BeatClass;
use crate::error::{Error, Result};
use crate::wfdb::{symbol_code, Annotation, Record, MITBIH_SAMPLING_RATE};

pub const SYNTH_GAIN: f64 = 200.0;
pub const SYNTH_BASELINE: i32 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub records: usize,
    pub beats_per_record: usize,
    /// Share of each record's beats drawn from its dominant class; the rest
    /// are spread evenly over the other classes.
    pub dominant_share: f64,
    /// White noise standard deviation in mV.
    pub noise_mv: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            records: 10,
            beats_per_record: 400,
            dominant_share: 0.6,
            noise_mv: 0.04,
            seed: 0,
        }
    }
}

/// One Gaussian bump: amplitude (mV), centre and width (s) relative to the R peak.
#[derive(Debug, Clone, Copy)]
struct Wave {
    amp: f64,
    mu: f64,
    sigma: f64,
}

const fn w(amp: f64, mu: f64, sigma: f64) -> Wave {
    Wave { amp, mu, sigma }
}

const NSR: [Wave; 5] = [
    w(0.15, -0.20, 0.025),
    w(-0.12, -0.035, 0.010),
    w(1.20, 0.0, 0.012),
    w(-0.25, 0.035, 0.010),
    w(0.30, 0.28, 0.045),
];

// Broad notched ("M") QRS, discordant T.
const LBBB: [Wave; 5] = [
    w(0.12, -0.22, 0.025),
    w(0.80, -0.028, 0.020),
    w(0.90, 0.035, 0.022),
    w(-0.10, 0.09, 0.015),
    w(-0.32, 0.34, 0.050),
];

// rSR': small R, deep S, late broad R'.
const RBBB: [Wave; 5] = [
    w(0.14, -0.21, 0.025),
    w(0.85, -0.012, 0.011),
    w(-0.45, 0.030, 0.012),
    w(0.60, 0.075, 0.018),
    w(-0.15, 0.30, 0.050),
];

// Early, inverted P with a normal QRS.
const APC: [Wave; 5] = [
    w(-0.14, -0.13, 0.020),
    w(-0.10, -0.035, 0.010),
    w(1.15, 0.0, 0.012),
    w(-0.22, 0.035, 0.010),
    w(0.26, 0.26, 0.045),
];

// No P, wide tall QRS, large opposite T.
const PVC: [Wave; 3] = [
    w(-0.30, -0.05, 0.020),
    w(1.50, 0.0, 0.035),
    w(-0.50, 0.30, 0.070),
];

fn template(class: BeatClass) -> &'static [Wave] {
    match class {
        BeatClass::Nsr => &NSR,
        BeatClass::Lbbb => &LBBB,
        BeatClass::Rbbb => &RBBB,
        BeatClass::Apc => &APC,
        BeatClass::Pvc => &PVC,
    }
}

/// Per-record morphology: one scale per wave amplitude and width, one shift per centre.
#[derive(Debug, Clone)]
struct RecordStyle {
    amp: [f64; 5],
    width: [f64; 5],
    shift: [f64; 5],
    gain: f64,
}

impl RecordStyle {
    fn sample<R: Rng>(rng: &mut R) -> Self {
        let mut s = RecordStyle {
            amp: [1.0; 5],
            width: [1.0; 5],
            shift: [0.0; 5],
            gain: rng.gen_range(0.7..1.3),
        };
        for i in 0..5 {
            s.amp[i] = rng.gen_range(0.8..1.2);
            s.width[i] = rng.gen_range(0.9..1.1);
            s.shift[i] = rng.gen_range(-0.008..0.008);
        }
        s
    }
}

fn beat_waves<R: Rng>(class: BeatClass, style: &RecordStyle, rng: &mut R) -> Vec<Wave> {
    template(class)
        .iter()
        .enumerate()
        .map(|(i, t)| Wave {
            amp: t.amp * style.amp[i] * style.gain * rng.gen_range(0.93..1.07),
            mu: t.mu + style.shift[i] + rng.gen_range(-0.004..0.004),
            sigma: t.sigma * style.width[i] * rng.gen_range(0.95..1.05),
        })
        .collect()
}

fn add_waves(signal: &mut [f64], r_peak: usize, waves: &[Wave], fs: f64) {
    for wv in waves {
        let centre = r_peak as f64 + wv.mu * fs;
        let reach = (5.0 * wv.sigma * fs).ceil() as isize;
        let lo = (centre as isize - reach).max(0) as usize;
        let hi = ((centre as isize + reach).max(0) as usize).min(signal.len());
        for (t, v) in signal.iter_mut().enumerate().take(hi).skip(lo) {
            let z = (t as f64 - centre) / (wv.sigma * fs);
            *v += wv.amp * (-0.5 * z * z).exp();
        }
    }
}

/// An isolated, noise-free beat of `len` samples with its R peak at sample 179.
pub fn template_beat(class: BeatClass, len: usize) -> Vec<f64> {
    let mut x = vec![0.0; len];
    add_waves(&mut x, 179, template(class), MITBIH_SAMPLING_RATE);
    x
}

fn pick_class<R: Rng>(dominant: BeatClass, share: f64, rng: &mut R) -> BeatClass {
    if rng.gen_bool(share.clamp(0.0, 1.0)) {
        return dominant;
    }
    let others: Vec<BeatClass> = BeatClass::ALL
        .into_iter()
        .filter(|&c| c != dominant)
        .collect();
    others[rng.gen_range(0..others.len())]
}

/// A two-channel record whose beats are drawn around `dominant`.
pub fn synth_record(
    name: &str,
    dominant: BeatClass,
    config: &SynthConfig,
    seed: u64,
) -> Result<Record> {
    if config.beats_per_record == 0 {
        return Err(Error::Config("beats_per_record must be at least 1".into()));
    }
    let fs = MITBIH_SAMPLING_RATE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let style = RecordStyle::sample(&mut rng);
    let base_rr: f64 = rng.gen_range(0.7..1.0);

    let mut classes = Vec::with_capacity(config.beats_per_record);
    let mut peaks = Vec::with_capacity(config.beats_per_record);
    let mut t = (0.6 * fs) as usize;
    for _ in 0..config.beats_per_record {
        let class = pick_class(dominant, config.dominant_share, &mut rng);
        let factor = match class {
            BeatClass::Apc => 0.72,
            BeatClass::Pvc => 0.68,
            _ => 1.0,
        };
        // Premature beats arrive early; the next interval compensates.
        let rr = base_rr * factor * rng.gen_range(0.95..1.05);
        if !peaks.is_empty() {
            t += (rr * fs) as usize;
        }
        if let Some(&BeatClass::Apc | &BeatClass::Pvc) = classes.last() {
            t += ((1.0 - factor) * base_rr * 0.8 * fs) as usize;
        }
        classes.push(class);
        peaks.push(t);
    }
    let len = t + (0.8 * fs) as usize;
    let mut signal = vec![0.0; len];
    for (&class, &peak) in classes.iter().zip(&peaks) {
        let waves = beat_waves(class, &style, &mut rng);
        add_waves(&mut signal, peak, &waves, fs);
    }
    let wander_f = rng.gen_range(0.15..0.4);
    let wander_a = rng.gen_range(0.05..0.2);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let noise =
        Normal::new(0.0, config.noise_mv.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut ch0 = Vec::with_capacity(len);
    let mut ch1 = Vec::with_capacity(len);
    for (i, v) in signal.iter().enumerate() {
        let wander = wander_a * (std::f64::consts::TAU * wander_f * i as f64 / fs + phase).sin();
        let a = v + wander + noise.sample(&mut rng);
        let b = -0.4 * v + 0.5 * wander + noise.sample(&mut rng);
        ch0.push(to_adc(a));
        ch1.push(to_adc(b));
    }
    let annotations = classes
        .iter()
        .zip(&peaks)
        .map(|(c, &p)| {
            Annotation::new(
                p as u64,
                symbol_code(c.symbol()).expect("beat symbols are in the table"),
            )
        })
        .collect();
    Record::from_adc(
        name,
        fs,
        SYNTH_GAIN,
        SYNTH_BASELINE,
        &["MLII", "V1"],
        vec![ch0, ch1],
        annotations,
    )
}

fn to_adc(mv: f64) -> i32 {
    ((mv * SYNTH_GAIN).round() as i32 + SYNTH_BASELINE).clamp(-1024, 1023)
}

/// `config.records` records named `s000`, `s001`, ... with dominant
/// classes cycling through the five classes.
pub fn synth_database(config: &SynthConfig) -> Result<Vec<Record>> {
    let mut seeder = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.records)
        .map(|i| {
            let dominant = BeatClass::ALL[i % BeatClass::ALL.len()];
            synth_record(&format!("s{i:03}"), dominant, config, seeder.gen())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::segment_beats;

    #[test]
    fn deterministic_and_annotated() {
        let cfg = SynthConfig {
            records: 5,
            beats_per_record: 40,
            ..SynthConfig::default()
        };
        let a = synth_database(&cfg).unwrap();
        assert_eq!(a, synth_database(&cfg).unwrap());
        assert_eq!(a.len(), 5);
        let mut total = [0usize; 5];
        for r in &a {
            assert_eq!(r.annotations.len(), 40);
            assert!(r.checksums_match());
            let (beats, report) = segment_beats(r, 0).unwrap();
            assert!(beats.len() >= 38, "{}", beats.len());
            assert!(report.excluded_symbols.is_empty());
            for (t, c) in total.iter_mut().zip(report.extracted.0) {
                *t += c;
            }
        }
        assert!(total.iter().all(|&c| c > 10), "{total:?}");
    }

    #[test]
    fn templates_peak_at_r() {
        for class in BeatClass::ALL {
            let b = template_beat(class, 360);
            let peak = b
                .iter()
                .enumerate()
                .fold(0, |m, (i, v)| if v.abs() > b[m].abs() { i } else { m });
            assert!((peak as isize - 179).abs() <= 20, "{class}: {peak}");
        }
    }

    #[test]
    fn writes_loadable_records() {
        let cfg = SynthConfig {
            records: 1,
            beats_per_record: 10,
            ..SynthConfig::default()
        };
        let r = &synth_database(&cfg).unwrap()[0];
        let dir = tempfile::tempdir().unwrap();
        r.save(dir.path()).unwrap();
        assert_eq!(&Record::load(dir.path(), r.name()).unwrap(), r);
    }
}
