use ecgnet_core::dataset::BeatDataset;
use ecgnet_core::model::{count_macs, io as model_io};
use ecgnet_core::train::train;
use ecgnet_core::{Model, ModelSpec, BEAT_LEN};
use serde_json::json;

use super::{create_dir, load_fold, pretty_json, write, DATASET_MANIFEST, MODEL_FILE};
use crate::config::{Fold, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

pub const HISTORY_FILE: &str = "history.csv";
pub const COST_JSON: &str = "cost_report.json";
pub const COST_TEXT: &str = "cost_report.txt";

/// The model must accept the dataset's beats and cover its labels.
pub(crate) fn check_compatible(spec: &ModelSpec, data: &BeatDataset) -> CliResult<()> {
    if spec.input_channels != 1 || spec.input_length != BEAT_LEN {
        return Err(CliError::data(format!(
            "{} expects {}x{} input, dataset beats are 1x{BEAT_LEN}",
            spec.variant, spec.input_channels, spec.input_length
        )));
    }
    if let Some(max) = data.label_indices().into_iter().max() {
        if max >= spec.head.out_features {
            return Err(CliError::data(format!(
                "{} has {} outputs, dataset has label {max}",
                spec.variant, spec.head.out_features
            )));
        }
    }
    Ok(())
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let dataset_dir = cfg.dataset_dir()?;
    let out = cfg.out_dir()?;
    let config = cfg.train_config();
    config.validate()?;
    let (train_path, data) = load_fold(dataset_dir, Fold::Train)?;
    let spec = ModelSpec::default_for(cfg.variant);
    check_compatible(&spec, &data)?;
    if data.is_empty() {
        return Err(CliError::data(format!("{}: training fold is empty", train_path.display())));
    }
    let mut model = Model::<f32>::new(spec.clone(), cfg.seed)?;
    let history = train(&mut model, &data, &config)?;


    create_dir(out)?;
    let bytes = model_io::save(&model, out.join(MODEL_FILE))?;
    let cost = count_macs(&spec, BEAT_LEN)?;
    if cost.serialized_bytes != bytes {
        return Err(CliError {
            kind: crate::error::Kind::Internal,
            message: format!(
                "model file is {bytes} bytes, cost report predicts {}",
                cost.serialized_bytes
            ),
        });
    }
    write(out, HISTORY_FILE, history.to_csv())?;
    write(out, COST_JSON, pretty_json(&cost))?;
    write(out, COST_TEXT, cost.to_text())?;

    let mut manifest = RunManifest::new(cfg);
    manifest.add_input(&train_path)?;
    let dataset_manifest = dataset_dir.join(DATASET_MANIFEST);
    if dataset_manifest.is_file() {
        manifest.add_input(&dataset_manifest)?;
    }
    for name in [MODEL_FILE, HISTORY_FILE, COST_JSON, COST_TEXT] {
        manifest.add_output(out, name)?;
    }
    let last = history.epochs.last();
    manifest.summary = json!({
        "variant": spec.variant,
        "spec_hash": spec.hash(),
        "train_beats": data.len(),
        "steps": history.step_losses.len(),
        "final_loss": last.map(|e| e.loss),
        "final_train_accuracy": last.map(|e| e.accuracy),
        "trainable_params": cost.totals.trainable,
        "macs": cost.totals.macs,
        "serialized_bytes": bytes,
        "serialized_kb": cost.serialized_kb,
        "blocks": cost.block_count(),
    });
    manifest.write(out)?;

    print!("{}", cost.to_text());
    if let Some(e) = last {
        println!("final epoch {}: loss {:.4}, train accuracy {:.4}", e.epoch, e.loss, e.accuracy);
    }
    Ok(())
}
