//! WFDB `.hea` header parsing.
//!
//! Record line: `name[/segments] nsig [fs[/counter[(base)]] [nsamp [time [date]]]]`.
//! Signal line: `file format[xspf][:skew][+offset] [gain[(baseline)][/units]
//! [adcres [adczero [initval [checksum [blocksize [description]]]]]]]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLING_RATE: f64 = 250.0;
pub const DEFAULT_GAIN: f64 = 200.0;
pub const SUPPORTED_FORMAT: u32 = 212;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub file_name: String,
    pub format: u32,
    pub byte_offset: usize,
    /// ADC units per physical unit.
    pub gain: f64,
    pub gain_defaulted: bool,
    pub baseline: i32,
    pub units: String,
    pub adc_resolution: u32,
    pub adc_zero: i32,
    pub initial_value: Option<i32>,
    pub checksum: Option<i32>,
    pub description: String,
}

impl SignalSpec {
    /// `(adc - baseline) / gain`
    pub fn to_physical(&self, adc: i32) -> f64 {
        (adc - self.baseline) as f64 / self.gain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub record_name: String,
    pub n_signals: usize,
    pub sampling_rate: f64,
    pub sampling_rate_defaulted: bool,
    pub n_samples: Option<usize>,
    pub signals: Vec<SignalSpec>,
    pub comments: Vec<String>,
    /// Non-fatal issues such as defaulted fields.
    pub warnings: Vec<String>,
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::HeaderParse {
        line,
        reason: reason.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, field: &str, text: &str) -> Result<T> {
    text.parse()
        .map_err(|_| parse_err(line, format!("invalid {field} {text:?}")))
}

/// Parses a WFDB header. Line numbers in errors are 1-based.
pub fn parse_header(bytes: &[u8]) -> Result<Header> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = 1 + bytes[..e.valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count();
        parse_err(line, "not valid UTF-8 text")
    })?;
    let mut comments = Vec::new();
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if let Some(c) = trimmed.strip_prefix('#') {
            comments.push(c.trim().to_string());
        } else if !trimmed.is_empty() {
            lines.push((i + 1, trimmed));
        }
    }
    let (record_line_no, record_line) = *lines
        .first()
        .ok_or_else(|| parse_err(1, "missing record line"))?;
    let mut warnings = Vec::new();
    let fields: Vec<&str> = record_line.split_whitespace().collect();
    let record_name = fields[0].split('/').next().unwrap_or_default().to_string();
    if fields[0].contains('/') {
        return Err(parse_err(
            record_line_no,
            "multi-segment records are not supported",
        ));
    }
    if record_name.is_empty()
        || !record_name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        return Err(parse_err(
            record_line_no,
            format!("invalid record name {:?}", fields[0]),
        ));
    }
    let n_signals: usize = match fields.get(1) {
        Some(f) => parse_num(record_line_no, "signal count", f)?,
        None => return Err(parse_err(record_line_no, "missing signal count")),
    };
    let (sampling_rate, sampling_rate_defaulted) = match fields.get(2) {
        Some(f) => {
            let fs_text = f.split(['/', '(']).next().unwrap_or_default();
            let fs: f64 = parse_num(record_line_no, "sampling frequency", fs_text)?;
            if !(fs.is_finite() && fs > 0.0) {
                return Err(parse_err(
                    record_line_no,
                    format!("sampling frequency must be positive, got {fs}"),
                ));
            }
            (fs, false)
        }
        None => {
            let msg = format!("record {record_name}: sampling frequency missing, using default {DEFAULT_SAMPLING_RATE} Hz");
            log::warn!("{msg}");
            warnings.push(msg);
            (DEFAULT_SAMPLING_RATE, true)
        }
    };
    let n_samples = match fields.get(3) {
        Some(f) => Some(parse_num(record_line_no, "sample count", f)?),
        None => None,
    };

    let signal_lines = &lines[1..];
    if signal_lines.len() < n_signals {
        let line = signal_lines.last().map_or(record_line_no, |l| l.0) + 1;
        return Err(parse_err(
            line,
            format!(
                "expected {n_signals} signal lines, found {}",
                signal_lines.len()
            ),
        ));
    }
    let mut signals = Vec::with_capacity(n_signals);
    for &(line_no, line) in &signal_lines[..n_signals] {
        let spec = parse_signal_line(line_no, line, &record_name, &mut warnings)?;
        signals.push(spec);
    }
    if let Some(&(line_no, _)) = signal_lines.get(n_signals) {
        return Err(parse_err(
            line_no,
            "unexpected line after signal specifications",
        ));
    }
    Ok(Header {
        record_name,
        n_signals,
        sampling_rate,
        sampling_rate_defaulted,
        n_samples,
        signals,
        comments,
        warnings,
    })
}

fn parse_signal_line(
    line_no: usize,
    line: &str,
    record: &str,
    warnings: &mut Vec<String>,
) -> Result<SignalSpec> {
    let mut fields = line
        .splitn(9, char::is_whitespace)
        .filter(|s| !s.is_empty());
    let file_name = fields
        .next()
        .ok_or_else(|| parse_err(line_no, "missing file name"))?
        .to_string();
    let fmt_field = fields
        .next()
        .ok_or_else(|| parse_err(line_no, "missing format"))?;
    let (fmt_part, byte_offset) = match fmt_field.split_once('+') {
        Some((f, off)) => (f, parse_num(line_no, "byte offset", off)?),
        None => (fmt_field, 0usize),
    };
    let fmt_part = fmt_part.split(':').next().unwrap_or_default();
    let (fmt_text, spf_text) = fmt_part.split_once('x').unwrap_or((fmt_part, "1"));
    let format: u32 = parse_num(line_no, "format", fmt_text)?;
    let spf: u32 = parse_num(line_no, "samples per frame", spf_text)?;
    if format != SUPPORTED_FORMAT {
        return Err(Error::UnsupportedFormat(format));
    }
    if spf != 1 {
        return Err(parse_err(
            line_no,
            format!("{spf} samples per frame not supported"),
        ));
    }

    let mut gain = 0.0;
    let mut baseline = None;
    let mut units = "mV".to_string();
    if let Some(g) = fields.next() {
        let (g, u) = match g.split_once('/') {
            Some((g, u)) => (g, Some(u)),
            None => (g, None),
        };
        if let Some(u) = u {
            units = u.to_string();
        }
        let (g, b) = match g.split_once('(') {
            Some((g, b)) => (
                g,
                Some(
                    b.strip_suffix(')')
                        .ok_or_else(|| parse_err(line_no, "unclosed baseline"))?,
                ),
            ),
            None => (g, None),
        };
        gain = parse_num(line_no, "gain", g)?;
        if let Some(b) = b {
            baseline = Some(parse_num(line_no, "baseline", b)?);
        }
    }
    let gain_defaulted = gain == 0.0;
    if gain_defaulted {
        warnings.push(format!(
            "record {record}, line {line_no}: gain missing or zero, using {DEFAULT_GAIN}"
        ));
        gain = DEFAULT_GAIN;
    }
    if !(gain.is_finite() && gain > 0.0) {
        return Err(parse_err(
            line_no,
            format!("gain must be positive, got {gain}"),
        ));
    }
    let adc_resolution = match fields.next() {
        Some(f) => parse_num(line_no, "ADC resolution", f)?,
        None => 12,
    };
    let adc_zero = match fields.next() {
        Some(f) => parse_num(line_no, "ADC zero", f)?,
        None => 0,
    };
    let initial_value = fields
        .next()
        .map(|f| parse_num(line_no, "initial value", f))
        .transpose()?;
    let checksum = fields
        .next()
        .map(|f| parse_num(line_no, "checksum", f))
        .transpose()?;
    let _block_size: Option<i64> = fields
        .next()
        .map(|f| parse_num(line_no, "block size", f))
        .transpose()?;
    let description = fields.next().unwrap_or_default().trim().to_string();
    Ok(SignalSpec {
        file_name,
        format,
        byte_offset,
        gain,
        gain_defaulted,
        baseline: baseline.unwrap_or(adc_zero),
        units,
        adc_resolution,
        adc_zero,
        initial_value,
        checksum,
        description,
    })
}

/// Renders a header in the same grammar `parse_header` reads.
pub fn format_header(header: &Header) -> String {
    let mut s = format!(
        "{} {} {}",
        header.record_name, header.n_signals, header.sampling_rate
    );
    if let Some(n) = header.n_samples {
        s.push_str(&format!(" {n}"));
    }
    s.push('\n');
    for sig in &header.signals {
        s.push_str(&format!(
            "{} {}{} {}({})/{} {} {} {} {} 0 {}\n",
            sig.file_name,
            sig.format,
            if sig.byte_offset > 0 {
                format!("+{}", sig.byte_offset)
            } else {
                String::new()
            },
            sig.gain,
            sig.baseline,
            sig.units,
            sig.adc_resolution,
            sig.adc_zero,
            sig.initial_value.unwrap_or(0),
            sig.checksum.unwrap_or(0),
            sig.description
        ));
    }
    for c in &header.comments {
        s.push_str(&format!("# {c}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER_100: &str = "100 2 360 650000\n\
        100.dat 212 200 11 1024 995 -22131 0 MLII\n\
        100.dat 212 200 11 1024 1011 20052 0 V5\n\
        # 69 M 1085 1629 x1\n\
        # Aldomet, Inderal\n";

    #[test]
    fn record_100_header() {
        let h = parse_header(HEADER_100.as_bytes()).unwrap();
        assert_eq!(h.record_name, "100");
        assert_eq!(h.n_signals, 2);
        assert_eq!(h.sampling_rate, 360.0);
        assert_eq!(h.n_samples, Some(650_000));
        assert_eq!(h.signals[0].description, "MLII");
        assert_eq!(h.signals[1].description, "V5");
        assert_eq!(h.signals[0].gain, 200.0);
        assert_eq!(h.signals[0].baseline, 1024);
        assert_eq!(h.signals[0].adc_resolution, 11);
        assert_eq!(h.signals[0].initial_value, Some(995));
        assert_eq!(h.signals[0].checksum, Some(-22131));
        assert_eq!(h.comments, vec!["69 M 1085 1629 x1", "Aldomet, Inderal"]);
        assert!(h.warnings.is_empty());
        assert_eq!(h.signals[0].to_physical(1224), 1.0);
    }

    #[test]
    fn explicit_baseline_and_units() {
        let h = parse_header(b"r1 1 360 10\nr1.dat 212 100(5)/uV 12 0 0 0 0 lead\n").unwrap();
        assert_eq!(h.signals[0].baseline, 5);
        assert_eq!(h.signals[0].units, "uV");
        assert_eq!(h.signals[0].gain, 100.0);
    }

    #[test]
    fn missing_sampling_rate_defaults_with_warning() {
        let h = parse_header(b"rec 1\nrec.dat 212\n").unwrap();
        assert_eq!(h.sampling_rate, DEFAULT_SAMPLING_RATE);
        assert!(h.sampling_rate_defaulted);
        assert_eq!(h.n_samples, None);
        assert!(h.signals[0].gain_defaulted);
        assert_eq!(h.warnings.len(), 2);
        assert!(h.warnings[0].contains("250"));
    }

    #[test]
    fn unsupported_format_rejected() {
        let err = parse_header(b"rec 1 360 10\nrec.dat 16 200 11 1024 0 0 0 I\n").unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(16)));
        assert!(err.to_string().contains("212"));
    }

    #[test]
    fn garbage_names_line_number() {
        let err = parse_header(b"# comment\n100 2 360 650000\n100.dat 212 200\n100.dat xyz 200\n")
            .unwrap_err();
        match err {
            Error::HeaderParse { line, reason } => {
                assert_eq!(line, 4);
                assert!(reason.contains("format"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_header(&[0xff, 0xfe, 0x00]).unwrap_err();
        assert!(matches!(err, Error::HeaderParse { line: 1, .. }));
        let err = parse_header(b"100 two 360\n").unwrap_err();
        assert!(matches!(err, Error::HeaderParse { line: 1, .. }), "{err}");
        let err = parse_header(b"100 2 360\n100.dat 212 200\n").unwrap_err();
        assert!(matches!(err, Error::HeaderParse { line: 3, .. }), "{err}");
        assert!(parse_header(b"").is_err());
    }

    #[test]
    fn format_then_parse_round_trips() {
        let h = parse_header(HEADER_100.as_bytes()).unwrap();
        let again = parse_header(format_header(&h).as_bytes()).unwrap();
        assert_eq!(again.signals, h.signals);
        assert_eq!(again.n_samples, h.n_samples);
        assert_eq!(again.comments, h.comments);
    }
}
