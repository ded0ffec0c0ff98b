use ecgnet_core::model::count_macs;
use ecgnet_core::{ModelSpec, BEAT_LEN};
use serde_json::json;

use super::train::{COST_JSON, COST_TEXT};
use super::{create_dir, pretty_json, write};
use crate::args::InspectFormat;
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::manifest::RunManifest;

pub fn run(cfg: &RunConfig, format: InspectFormat) -> CliResult<()> {
    let spec = ModelSpec::default_for(cfg.variant);
    let cost = count_macs(&spec, BEAT_LEN)?;
    match format {
        InspectFormat::Text => print!("{}", cost.to_text()),
        InspectFormat::Json => print!("{}", pretty_json(&cost)),
    }
    if let Some(out) = cfg.paths.out.as_deref() {
        create_dir(out)?;
        write(out, COST_JSON, pretty_json(&cost))?;
        write(out, COST_TEXT, cost.to_text())?;
        let mut manifest = RunManifest::new(cfg);
        manifest.add_output(out, COST_JSON)?;
        manifest.add_output(out, COST_TEXT)?;
        manifest.summary = json!({
            "variant": spec.variant,
            "spec_hash": spec.hash(),
            "blocks": cost.block_count(),
            "trainable_params": cost.totals.trainable,
            "macs": cost.totals.macs,
            "serialized_kb": cost.serialized_kb,
        });
        manifest.write(out)?;
    }
    Ok(())
}
