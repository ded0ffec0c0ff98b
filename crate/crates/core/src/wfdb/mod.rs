//! Reading WFDB records: `.hea` header, format-212 `.dat` signal and
//! MIT-format `.atr` annotations.

pub mod annotation;
pub mod fmt212;
pub mod header;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub use annotation::{code_symbol, parse_annotations, symbol_code, write_annotations, Annotation};
pub use fmt212::{decode_212, encode_212};
pub use header::{format_header, parse_header, Header, SignalSpec};

/// Sampling rate of the MIT-BIH Arrhythmia Database.
pub const MITBIH_SAMPLING_RATE: f64 = 360.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub header: Header,
    /// Raw ADC samples, one vector per channel.
    pub samples: Vec<Vec<i32>>,
    pub annotations: Vec<Annotation>,
}

impl Record {
    /// Assembles a record from already-parsed parts and checks consistency.
    pub fn from_parts(
        header: Header,
        signal_bytes: &[u8],
        annotations: Vec<Annotation>,
    ) -> Result<Self> {
        let n_channels = header.n_signals;
        if n_channels == 0 {
            return Err(Error::Dataset(format!(
                "record {}: no signals",
                header.record_name
            )));
        }
        let first = &header.signals[0];
        if let Some(other) = header
            .signals
            .iter()
            .find(|s| s.file_name != first.file_name || s.byte_offset != first.byte_offset)
        {
            return Err(Error::Dataset(format!(
                "record {}: signals stored in separate files ({} and {}) are not supported",
                header.record_name, first.file_name, other.file_name
            )));
        }
        let body = signal_bytes.get(first.byte_offset..).unwrap_or_default();
        let n_samples = match header.n_samples {
            Some(n) => n,
            None => body.len() * 2 / 3 / n_channels,
        };
        let samples = decode_212(body, n_samples, n_channels)?;
        let record = Record {
            header,
            samples,
            annotations,
        };
        record.validate_annotations()?;
        Ok(record)
    }

    /// Loads `<dir>/<name>.hea`, its signal file and, when present, `<name>.atr`.
    pub fn load(dir: impl AsRef<Path>, name: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let hea_path = dir.join(format!("{name}.hea"));
        let hea = fs::read(&hea_path).map_err(|e| Error::io(&hea_path, e))?;
        let header = parse_header(&hea)?;
        let dat_name = header
            .signals
            .first()
            .map(|s| s.file_name.clone())
            .ok_or_else(|| Error::Dataset(format!("record {name}: no signals")))?;
        let dat_path = dir.join(&dat_name);
        let dat = fs::read(&dat_path).map_err(|e| Error::io(&dat_path, e))?;
        let atr_path = dir.join(format!("{name}.atr"));
        let annotations = if atr_path.exists() {
            let atr = fs::read(&atr_path).map_err(|e| Error::io(&atr_path, e))?;
            parse_annotations(&atr)?
        } else {
            Vec::new()
        };
        Record::from_parts(header, &dat, annotations)
    }

    /// Builds a format-212 record from raw ADC samples. Every channel uses
    /// `gain` ADC units per mV around `baseline`; checksums and initial
    /// values are filled in.
    pub fn from_adc(
        name: &str,
        sampling_rate: f64,
        gain: f64,
        baseline: i32,
        descriptions: &[&str],
        samples: Vec<Vec<i32>>,
        annotations: Vec<Annotation>,
    ) -> Result<Self> {
        if samples.is_empty() || samples.len() != descriptions.len() {
            return Err(Error::invalid(
                "Record::from_adc",
                "need one description per channel and at least one channel",
            ));
        }
        let n = samples[0].len();
        if samples.iter().any(|c| c.len() != n) {
            return Err(Error::invalid(
                "Record::from_adc",
                "channels differ in length",
            ));
        }
        let file_name = format!("{name}.dat");
        let signals = descriptions
            .iter()
            .zip(&samples)
            .map(|(d, ch)| SignalSpec {
                file_name: file_name.clone(),
                format: header::SUPPORTED_FORMAT,
                byte_offset: 0,
                gain,
                gain_defaulted: false,
                baseline,
                units: "mV".into(),
                adc_resolution: 11,
                adc_zero: 1024,
                initial_value: ch.first().copied(),
                checksum: Some(ch.iter().fold(0i32, |a, &v| a.wrapping_add(v)) as i16 as i32),
                description: d.to_string(),
            })
            .collect();
        let header = Header {
            record_name: name.to_string(),
            n_signals: samples.len(),
            sampling_rate,
            sampling_rate_defaulted: false,
            n_samples: Some(n),
            signals,
            comments: Vec::new(),
            warnings: Vec::new(),
        };
        let record = Record {
            header,
            samples,
            annotations,
        };
        record.validate_annotations()?;
        Ok(record)
    }

    /// Writes `<name>.hea`, the signal file and, if there are annotations,
    /// `<name>.atr` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let write = |file: &str, bytes: &[u8]| -> Result<()> {
            let path = dir.join(file);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
        };
        write(
            &format!("{}.hea", self.name()),
            format_header(&self.header).as_bytes(),
        )?;
        let dat = self
            .header
            .signals
            .first()
            .map(|s| s.file_name.clone())
            .ok_or_else(|| Error::Dataset(format!("record {}: no signals", self.name())))?;
        write(&dat, &encode_212(&self.samples)?)?;
        if !self.annotations.is_empty() {
            write(
                &format!("{}.atr", self.name()),
                &write_annotations(&self.annotations)?,
            )?;
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.header.record_name
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sampling_rate(&self) -> f64 {
        self.header.sampling_rate
    }

    /// Channel `channel` in physical units, `(adc - baseline) / gain`.
    pub fn physical(&self, channel: usize) -> Result<Vec<f64>> {
        let spec = self.header.signals.get(channel).ok_or_else(|| {
            Error::Dataset(format!("record {}: no channel {channel}", self.name()))
        })?;
        Ok(self.samples[channel]
            .iter()
            .map(|&v| spec.to_physical(v))
            .collect())
    }

    /// WFDB checksum of each channel: the 16-bit sum of its samples.
    pub fn checksums(&self) -> Vec<i32> {
        self.samples
            .iter()
            .map(|ch| ch.iter().fold(0i32, |acc, &v| acc.wrapping_add(v)) as i16 as i32)
            .collect()
    }

    /// Whether every channel's checksum matches the header, where recorded.
    /// Compared modulo 2^16 since writers differ in signedness.
    pub fn checksums_match(&self) -> bool {
        self.header
            .signals
            .iter()
            .zip(self.checksums())
            .all(|(s, c)| s.checksum.map_or(true, |h| h as u16 == c as u16))
    }

    fn validate_annotations(&self) -> Result<()> {
        let len = self.len() as u64;
        let mut prev = 0;
        for (i, a) in self.annotations.iter().enumerate() {
            if a.sample < prev {
                return Err(Error::Dataset(format!(
                    "record {}: annotation {i} at sample {} precedes the previous one at {prev}",
                    self.name(),
                    a.sample
                )));
            }
            if a.sample >= len {
                return Err(Error::Dataset(format!(
                    "record {}: annotation {i} at sample {} is beyond the record length {len}",
                    self.name(),
                    a.sample
                )));
            }
            prev = a.sample;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_header(n: usize) -> Header {
        parse_header(
            format!("t 2 360 {n}\nt.dat 212 200 11 1024 0 0 0 MLII\nt.dat 212 100 11 0 0 0 0 V1\n")
                .as_bytes(),
        )
        .unwrap()
    }

    #[test]
    fn physical_units_and_checksum() {
        let bytes = encode_212(&[vec![1224, 1024, 824], vec![100, -100, 0]]).unwrap();
        let r = Record::from_parts(tiny_header(3), &bytes, vec![Annotation::new(1, 1)]).unwrap();
        assert_eq!(r.physical(0).unwrap(), vec![1.0, 0.0, -1.0]);
        assert_eq!(r.physical(1).unwrap(), vec![1.0, -1.0, 0.0]);
        assert_eq!(r.checksums(), vec![3072, 0]);
        assert!(r.physical(2).is_err());
    }

    #[test]
    fn annotations_validated_against_length() {
        let bytes = encode_212(&[vec![0; 4], vec![0; 4]]).unwrap();
        assert!(Record::from_parts(tiny_header(4), &bytes, vec![Annotation::new(4, 1)]).is_err());
        let unordered = vec![Annotation::new(3, 1), Annotation::new(1, 1)];
        assert!(Record::from_parts(tiny_header(4), &bytes, unordered).is_err());
    }

    #[test]
    fn save_and_load_round_trip() {
        let samples = vec![
            (0..400).map(|i| i % 97 - 40).collect::<Vec<i32>>(),
            vec![3; 400],
        ];
        let anns = vec![Annotation::new(10, 1), Annotation::new(300, 5)];
        let r = Record::from_adc("s1", 360.0, 200.0, 0, &["MLII", "V1"], samples, anns).unwrap();
        let dir = tempfile::tempdir().unwrap();
        r.save(dir.path()).unwrap();
        let back = Record::load(dir.path(), "s1").unwrap();
        assert_eq!(back.samples, r.samples);
        assert_eq!(back.annotations, r.annotations);
        assert!(back.checksums_match());
        assert_eq!(back.header.signals[1].description, "V1");
    }

    #[test]
    fn sample_count_inferred_from_file() {
        let mut h = tiny_header(0);
        h.n_samples = None;
        let bytes = encode_212(&[vec![5; 6], vec![7; 6]]).unwrap();
        let r = Record::from_parts(h, &bytes, vec![]).unwrap();
        assert_eq!(r.len(), 6);
    }
}
