//! Symlet-4 wavelet denoising and per-beat normalisation.
//!
//! The transform is a periodised orthogonal filter bank. A level whose input
//! has odd length transforms the even prefix and carries the final sample
//! through unchanged as the last approximation coefficient, so every level
//! stays orthogonal: energy is preserved exactly and soft thresholding can
//! only remove energy. For even lengths the coefficients coincide with the
//! usual `periodization` convention.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symlet-4 analysis low-pass filter.
pub const SYM4_DEC_LO: [f64; 8] = [
    -0.075_765_714_789_273_33,
    -0.029_635_527_645_998_51,
    0.497_618_667_632_015_45,
    0.803_738_751_805_916_1,
    0.297_857_795_605_277_36,
    -0.099_219_543_576_847_22,
    -0.012_603_967_262_037_833,
    0.032_223_100_604_042_7,
];

pub const FILTER_LEN: usize = SYM4_DEC_LO.len();
pub const DEFAULT_LEVELS: usize = 4;
/// Median absolute deviation to standard deviation for Gaussian noise.
pub const MAD_SCALE: f64 = 0.6745;
/// Beats whose variance falls at or below this normalise to zeros.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    Periodic,
}

/// Result of the orthogonality checks on a low-pass filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterCheck {
    pub sum_error: f64,
    pub energy_error: f64,
    pub max_shift_product: f64,
}

impl FilterCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.sum_error < tol && self.energy_error < tol && self.max_shift_product < tol
    }
}

/// Checks `sum h = sqrt 2`, `sum h^2 = 1` and `sum h[n] h[n + 2m] = 0` for `m != 0`.
pub fn check_filter(h: &[f64]) -> FilterCheck {
    let sum_error = (h.iter().sum::<f64>() - std::f64::consts::SQRT_2).abs();
    let energy_error = (h.iter().map(|v| v * v).sum::<f64>() - 1.0).abs();
    let mut max_shift_product: f64 = 0.0;
    for shift in (2..h.len()).step_by(2) {
        let p: f64 = h.iter().zip(&h[shift..]).map(|(a, b)| a * b).sum();
        max_shift_product = max_shift_product.max(p.abs());
    }
    FilterCheck {
        sum_error,
        energy_error,
        max_shift_product,
    }
}

#[derive(Debug)]
struct FilterBank {
    lo: [f64; FILTER_LEN],
    hi: [f64; FILTER_LEN],
}

fn filter_bank() -> &'static FilterBank {
    static BANK: OnceLock<FilterBank> = OnceLock::new();
    BANK.get_or_init(|| {
        let check = check_filter(&SYM4_DEC_LO);
        assert!(
            check.passes(1e-10),
            "sym4 coefficients fail orthogonality checks: {check:?}"
        );
        let lo = SYM4_DEC_LO;
        let mut hi = [0.0; FILTER_LEN];
        for (i, v) in hi.iter_mut().enumerate() {
            let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
            *v = sign * lo[FILTER_LEN - 1 - i];
        }
        FilterBank { lo, hi }
    })
}

/// Multi-level decomposition. `details[0]` is level 1 (finest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletDecomposition {
    pub approximation: Vec<f64>,
    pub details: Vec<Vec<f64>>,
    /// Input length of each level; `level_lengths[0]` is the signal length.
    pub level_lengths: Vec<usize>,
    pub mode: BoundaryMode,
}

impl WaveletDecomposition {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn signal_len(&self) -> usize {
        self.level_lengths.first().copied().unwrap_or(0)
    }

    /// Sum of squares over every coefficient.
    pub fn energy(&self) -> f64 {
        energy(&self.approximation) + self.details.iter().map(|d| energy(d)).sum::<f64>()
    }

    pub fn scale(&mut self, a: f64) {
        self.approximation.iter_mut().for_each(|v| *v *= a);
        self.details.iter_mut().flatten().for_each(|v| *v *= a);
    }

    fn validate(&self) -> Result<()> {
        let j = self.levels();
        if j == 0 || self.level_lengths.len() != j {
            return Err(Error::invalid(
                "idwt",
                "level bookkeeping does not match detail count",
            ));
        }
        for (level, (&n, d)) in self.level_lengths.iter().zip(&self.details).enumerate() {
            if d.len() != n / 2 {
                return Err(Error::Shape {
                    op: "idwt",
                    dim: "detail length",
                    expected: n / 2,
                    actual: d.len(),
                });
            }
            let next = n / 2 + n % 2;
            let expected_next = self
                .level_lengths
                .get(level + 1)
                .copied()
                .unwrap_or(self.approximation.len());
            if next != expected_next {
                return Err(Error::Shape {
                    op: "idwt",
                    dim: "approximation length",
                    expected: next,
                    actual: expected_next,
                });
            }
        }
        Ok(())
    }
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Number of levels for which every level input has at least `FILTER_LEN` samples.
pub fn max_level(n: usize) -> usize {
    let mut levels = 0;
    let mut len = n;
    while len >= FILTER_LEN {
        levels += 1;
        len = len / 2 + len % 2;
    }
    levels
}

fn analysis_step(x: &[f64], approx: &mut Vec<f64>, detail: &mut Vec<f64>) {
    let bank = filter_bank();
    let n = x.len() - x.len() % 2;
    let half = n / 2;
    let offset = FILTER_LEN / 2;
    approx.clear();
    detail.clear();
    for k in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        // The high-pass taps sum to zero only up to rounding; measuring
        // against one sample of the window keeps flat stretches exactly zero.
        let reference = x[(2 * k + offset) % n];
        for j in 0..FILTER_LEN {
            let idx = (2 * k + offset + n * FILTER_LEN - j) % n;
            a += bank.lo[j] * x[idx];
            d += bank.hi[j] * (x[idx] - reference);
        }
        approx.push(a);
        detail.push(d);
    }
    if x.len() % 2 == 1 {
        approx.push(x[x.len() - 1]);
    }
}

fn synthesis_step(approx: &[f64], detail: &[f64], n_out: usize) -> Vec<f64> {
    let bank = filter_bank();
    let n = n_out - n_out % 2;
    let offset = FILTER_LEN / 2;
    let mut x = vec![0.0; n_out];
    for (k, &d) in detail.iter().enumerate() {
        let a = approx[k];
        for j in 0..FILTER_LEN {
            let idx = (2 * k + offset + n * FILTER_LEN - j) % n;
            x[idx] += bank.lo[j] * a + bank.hi[j] * d;
        }
    }
    if n_out % 2 == 1 {
        x[n_out - 1] = approx[approx.len() - 1];
    }
    x
}

/// Forward transform with `levels` levels.
pub fn dwt(signal: &[f64], levels: usize) -> Result<WaveletDecomposition> {
    if levels == 0 {
        return Err(Error::invalid("dwt", "level count must be at least 1"));
    }
    let available = max_level(signal.len());
    if levels > available {
        return Err(Error::invalid(
            "dwt",
            format!(
                "signal of length {} supports at most {available} levels with an {FILTER_LEN}-tap filter, {levels} requested",
                signal.len()
            ),
        ));
    }
    let mut current = signal.to_vec();
    let mut details = Vec::with_capacity(levels);
    let mut level_lengths = Vec::with_capacity(levels);
    let mut approx = Vec::new();
    for _ in 0..levels {
        let mut detail = Vec::new();
        level_lengths.push(current.len());
        analysis_step(&current, &mut approx, &mut detail);
        details.push(detail);
        std::mem::swap(&mut current, &mut approx);
    }
    Ok(WaveletDecomposition {
        approximation: current,
        details,
        level_lengths,
        mode: BoundaryMode::Periodic,
    })
}

/// Inverse transform.
pub fn idwt(decomposition: &WaveletDecomposition) -> Result<Vec<f64>> {
    decomposition.validate()?;
    let mut current = decomposition.approximation.clone();
    for (detail, &n) in decomposition
        .details
        .iter()
        .zip(&decomposition.level_lengths)
        .rev()
    {
        current = synthesis_step(&current, detail, n);
    }
    Ok(current)
}

pub fn soft_threshold(value: f64, threshold: f64) -> f64 {
    let shrunk = value.abs() - threshold;
    if shrunk > 0.0 {
        shrunk.copysign(value)
    } else {
        0.0
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

/// Noise level estimated from the finest detail band, `median(|d1|) / 0.6745`.
pub fn noise_sigma(finest_detail: &[f64]) -> f64 {
    let abs: Vec<f64> = finest_detail.iter().map(|v| v.abs()).collect();
    median(&abs) / MAD_SCALE
}

/// Universal threshold `sigma * sqrt(2 ln n)`.
pub fn universal_threshold(sigma: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    sigma * (2.0 * (n as f64).ln()).sqrt()
}

/// Soft-thresholds every detail band in place; the approximation is untouched.
pub fn threshold_details(decomposition: &mut WaveletDecomposition, threshold: f64) {
    for v in decomposition.details.iter_mut().flatten() {
        *v = soft_threshold(*v, threshold);
    }
}

/// Denoising parameters and the threshold that was actually applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiseSummary {
    pub levels: usize,
    pub sigma: f64,
    pub threshold: f64,
}

/// Denoises with an explicit threshold. Levels are capped at what the
/// signal length supports; signals too short for one level pass through.
pub fn denoise_with_threshold(signal: &[f64], levels: usize, threshold: f64) -> Vec<f64> {
    let levels = levels.min(max_level(signal.len()));
    if levels == 0 {
        return signal.to_vec();
    }
    let mut dec = dwt(signal, levels).expect("level count capped to signal length");
    threshold_details(&mut dec, threshold);
    idwt(&dec).expect("decomposition produced by dwt")
}

/// Universal soft-threshold denoising with `levels` levels.
pub fn denoise_levels(signal: &[f64], levels: usize) -> (Vec<f64>, DenoiseSummary) {
    let levels = levels.min(max_level(signal.len()));
    if levels == 0 {
        return (
            signal.to_vec(),
            DenoiseSummary {
                levels: 0,
                sigma: 0.0,
                threshold: 0.0,
            },
        );
    }
    let mut dec = dwt(signal, levels).expect("level count capped to signal length");
    let sigma = noise_sigma(&dec.details[0]);
    let threshold = universal_threshold(sigma, signal.len());
    threshold_details(&mut dec, threshold);
    let out = idwt(&dec).expect("decomposition produced by dwt");
    (
        out,
        DenoiseSummary {
            levels,
            sigma,
            threshold,
        },
    )
}

/// Universal soft-threshold denoising with the default four levels.
pub fn denoise(signal: &[f64]) -> Vec<f64> {
    denoise_levels(signal, DEFAULT_LEVELS).0
}

/// Z-score normalisation. A beat with variance at or below the floor maps to zeros.
pub fn normalize(beat: &[f64]) -> Vec<f64> {
    if beat.is_empty() {
        return Vec::new();
    }
    let n = beat.len() as f64;
    let mean = beat.iter().sum::<f64>() / n;
    let var = beat.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= VARIANCE_FLOOR {
        return vec![0.0; beat.len()];
    }
    let inv = 1.0 / var.sqrt();
    beat.iter().map(|v| (v - mean) * inv).collect()
}
