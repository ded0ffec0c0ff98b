use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use ecgnet_core::dataset::{
    balance_and_split, ingest_records_with, save_beats, BalanceConfig, DatasetManifest,
};
use ecgnet_core::wfdb::{parse_header, Record};
use log::info;
use serde_json::json;

use super::{create_dir, pretty_json, write, DATASET_MANIFEST, TEST_FILE, TRAIN_FILE};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

/// Record names with a `.hea` file in `dir`, sorted.
fn discover(dir: &Path) -> CliResult<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let mut names = BTreeSet::new();
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "hea") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                names.insert(stem.to_string());
            }
        }
    }
    if names.is_empty() {
        return Err(CliError::data(format!("no WFDB records (*.hea) in {}", dir.display())));
    }
    Ok(names.into_iter().collect())
}

/// Every file the records need: header, signal files named in the header, annotations.
fn record_files(dir: &Path, names: &[String]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut missing = Vec::new();
    for name in names {
        let hea = dir.join(format!("{name}.hea"));
        let atr = dir.join(format!("{name}.atr"));
        match fs::read(&hea) {
            Ok(bytes) => {
                let header = parse_header(&bytes)?;
                let signal_files: BTreeSet<&str> =
                    header.signals.iter().map(|s| s.file_name.as_str()).collect();
                files.push(hea);
                for f in signal_files {
                    let p = dir.join(f);
                    if p.is_file() {
                        files.push(p);
                    } else {
                        missing.push(p);
                    }
                }
            }
            Err(_) => missing.push(hea),
        }
        if atr.is_file() {
            files.push(atr);
        } else {
            missing.push(atr);
        }
    }
    if !missing.is_empty() {
        return Err(CliError::missing_files(&missing));
    }
    Ok(files)
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let data_dir = cfg.data_dir()?;
    let out = cfg.out_dir()?;
    cfg.preprocessing.validate()?;
    if !data_dir.is_dir() {
        return Err(CliError::missing_files(&[data_dir.to_path_buf()]));
    }
    let names = if cfg.ingest.records.is_empty() {
        discover(data_dir)?
    } else {
        cfg.ingest.records.clone()
    };
    let files = record_files(data_dir, &names)?;

    let records = names
        .iter()
        .map(|n| {
            info!("reading record {n}");
            Record::load(data_dir, n)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (beats, segments) = ingest_records_with(&records, cfg.ingest.channel, &cfg.preprocessing)?;
    info!("{} beats extracted from {} records", beats.len(), records.len());
    let split = balance_and_split(
        &beats,
        &BalanceConfig {
            mode: cfg.ingest.split_mode,
            target_per_class: cfg.ingest.target_per_class,
            test_fraction: cfg.ingest.test_fraction,
            seed: cfg.seed,
        },
    )?;
    let dataset = DatasetManifest::new(segments, cfg.ingest.channel, &cfg.preprocessing, split.report.clone());

    create_dir(out)?;
    save_beats(&split.train, out.join(TRAIN_FILE))?;
    save_beats(&split.test, out.join(TEST_FILE))?;
    write(out, DATASET_MANIFEST, pretty_json(&dataset))?;

    let mut manifest = RunManifest::new(cfg);
    for f in &files {
        manifest.add_input(f)?;
    }
    for name in [TRAIN_FILE, TEST_FILE, DATASET_MANIFEST] {
        manifest.add_output(out, name)?;
    }
    manifest.summary = json!({
        "records": names,
        "extracted": dataset.extracted,
        "skipped_boundary": dataset.skipped_boundary,
        "train": split.report.train,
        "test": split.report.test,
        "notes": split.report.notes,
    });
    manifest.write(out)?;

    println!("records:   {}", names.join(","));
    println!("extracted: {}", counts_line(&dataset.extracted));
    println!("train:     {}", counts_line(&split.report.train));
    println!("test:      {}", counts_line(&split.report.test));
    for note in &split.report.notes {
        println!("note: {note}");
    }
    Ok(())
}

fn counts_line(c: &ecgnet_core::dataset::ClassCounts) -> String {
    ecgnet_core::dataset::BeatClass::ALL
        .iter()
        .map(|k| format!("{k} {}", c.get(*k)))
        .collect::<Vec<_>>()
        .join(", ")
}
