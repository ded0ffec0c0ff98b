//! Reader checks against fixture records. `fx1` was written and read back by
//! an independent WFDB implementation (see `fixtures/make_synthetic_record.py`);
//! the expected values below come from that reader.

use std::path::PathBuf;

use ecgnet_core::wfdb::{parse_annotations, write_annotations, Record};
use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn expected() -> Value {
    let text = std::fs::read_to_string(fixtures().join("synthetic/fx1_expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn ints(v: &Value) -> Vec<i64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_i64().unwrap())
        .collect()
}

#[test]
fn record_100_prefix_matches_reference_reader() {
    let r = Record::load(fixtures().join("mitdb100_prefix"), "100").unwrap();
    assert_eq!(r.name(), "100");
    assert_eq!(r.sampling_rate(), 360.0);
    assert_eq!(r.len(), 10);
    assert_eq!(
        r.samples[0],
        vec![995, 995, 995, 995, 995, 995, 995, 995, 1000, 997]
    );
    assert_eq!(
        r.samples[1],
        vec![1011, 1011, 1011, 1011, 1011, 1011, 1011, 1011, 1008, 1008]
    );
    let mlii = r.physical(0).unwrap();
    assert!((mlii[0] + 0.145).abs() < 1e-12);
    assert!((mlii[8] + 0.12).abs() < 1e-12);
    assert!((mlii[9] + 0.135).abs() < 1e-12);
    assert_eq!(r.header.signals[0].description, "MLII");
    // header checksums cover the full 650000-sample record
    assert!(!r.checksums_match());
    assert!(r.annotations.is_empty());
}

#[test]
fn synthetic_record_signal_matches_reference_reader() {
    let e = expected();
    let r = Record::load(fixtures().join("synthetic"), "fx1").unwrap();
    assert_eq!(r.len() as i64, e["sig_len"].as_i64().unwrap());
    assert_eq!(r.sampling_rate(), e["fs"].as_f64().unwrap());
    for c in 0..2 {
        let first: Vec<i64> = r.samples[c][..5].iter().map(|&v| v as i64).collect();
        assert_eq!(first, ints(&e["adc_first5"][c]));
        let last: Vec<i64> = r.samples[c][r.len() - 3..]
            .iter()
            .map(|&v| v as i64)
            .collect();
        assert_eq!(last, ints(&e["adc_last3"][c]));
    }
    let sums: Vec<i64> = r.checksums().iter().map(|&c| c as u16 as i64).collect();
    assert_eq!(sums, ints(&e["checksums"]));
    assert!(r.checksums_match());
}

#[test]
fn synthetic_record_annotations_match_reference_reader() {
    let e = expected();
    let r = Record::load(fixtures().join("synthetic"), "fx1").unwrap();
    assert_eq!(
        r.annotations.len() as i64,
        e["annotation_count"].as_i64().unwrap()
    );
    let samples: Vec<i64> = r.annotations.iter().map(|a| a.sample as i64).collect();
    assert_eq!(samples, ints(&e["annotation_samples"]));
    let symbols: Vec<&str> = r
        .annotations
        .iter()
        .map(|a| a.symbol().unwrap_or("?"))
        .collect();
    let want: Vec<&str> = e["annotation_symbols"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap())
        .collect();
    assert_eq!(symbols, want);
    for (idx, text) in e["aux"].as_object().unwrap() {
        let i: usize = idx.parse().unwrap();
        assert_eq!(r.annotations[i].aux.as_deref(), text.as_str());
    }
}

#[test]
fn annotation_writer_reproduces_reference_reader_view() {
    let bytes = std::fs::read(fixtures().join("synthetic/fx1.atr")).unwrap();
    let anns = parse_annotations(&bytes).unwrap();
    let rewritten = write_annotations(&anns).unwrap();
    assert_eq!(parse_annotations(&rewritten).unwrap(), anns);
}

#[test]
fn synthetic_record_segmentation_matches_reference_windows() {
    use ecgnet_core::dataset::{segment_beats, BeatClass};
    let e = expected();
    let r = Record::load(fixtures().join("synthetic"), "fx1").unwrap();
    let (beats, report) = segment_beats(&r, 0).unwrap();
    for class in BeatClass::ALL {
        let want = e["class_counts"][class.name()].as_u64().unwrap_or(0) as usize;
        assert_eq!(report.extracted.get(class), want, "{class}");
    }
    assert_eq!(
        report.skipped_boundary as i64,
        e["skipped_windows"].as_i64().unwrap()
    );
    let centres: Vec<i64> = beats.provenance().iter().map(|p| p.sample as i64).collect();
    assert_eq!(centres, ints(&e["window_centres"]));
    let first = beats.beat(0);
    let sum: f64 = first.iter().map(|&v| v as f64).sum();
    assert!((sum - e["first_window_sum"].as_f64().unwrap()).abs() < 1e-3);
    assert!((first[0] as f64 - e["first_window_first"].as_f64().unwrap()).abs() < 1e-6);
    assert!((first[359] as f64 - e["first_window_last"].as_f64().unwrap()).abs() < 1e-6);
    assert!(report.excluded_symbols.contains_key("/"));
}
