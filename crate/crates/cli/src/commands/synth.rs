use ecgnet_core::dataset::{segment_beats, ClassCounts};
use ecgnet_core::synth::{synth_database, SynthConfig};
use serde_json::json;

use super::create_dir;
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::manifest::RunManifest;

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let out = cfg.out_dir()?;
    let s = &cfg.synth;
    let records = synth_database(&SynthConfig {
        records: s.records,
        beats_per_record: s.beats_per_record,
        dominant_share: s.dominant_share,
        noise_mv: s.noise_mv,
        seed: cfg.seed,
    })?;
    create_dir(out)?;
    let mut manifest = RunManifest::new(cfg);
    let mut annotated = ClassCounts::default();
    for r in &records {
        r.save(out)?;
        for ext in ["hea", "dat", "atr"] {
            manifest.add_output(out, &format!("{}.{ext}", r.name()))?;
        }
        annotated.add(&segment_beats(r, 0)?.1.extracted);
    }
    manifest.summary = json!({
        "records": records.iter().map(|r| r.name()).collect::<Vec<_>>(),
        "segmentable_beats": annotated,
    });
    manifest.write(out)?;
    println!("wrote {} synthetic records to {}", records.len(), out.display());
    Ok(())
}
