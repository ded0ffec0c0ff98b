use std::path::Path;

use ecgnet_core::metrics::{emit_report, evaluate};
use ecgnet_core::Model;
use serde_json::json;

use super::{create_dir, load_fold, load_model};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{FileDigest, RunManifest, MANIFEST_FILE};

/// When the model sits next to the manifest of the run that trained it,
/// its bytes and spec hash must match what that run recorded.
pub(crate) fn check_training_manifest(model_path: &Path, model: &Model<f32>) -> CliResult<()> {
    let Some(dir) = model_path.parent() else {
        return Ok(());
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Ok(());
    }
    let manifest = RunManifest::read(&manifest_path)?;
    if manifest.subcommand != "train" {
        return Ok(());
    }
    let name = model_path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    if let Some(recorded) = manifest.outputs.iter().find(|o| o.path == name) {
        let actual = FileDigest::of(model_path, name)?;
        if actual.sha256 != recorded.sha256 {
            return Err(CliError::data(format!(
                "{}: sha256 {} differs from {} recorded in {}",
                model_path.display(),
                actual.sha256,
                recorded.sha256,
                manifest_path.display()
            )));
        }
    }
    if let Some(recorded) = manifest.summary.get("spec_hash").and_then(|h| h.as_str()) {
        let computed = model.spec().hash();
        if recorded != computed {
            return Err(CliError::data(format!(
                "model spec hash {computed} differs from {recorded} recorded in {}",
                manifest_path.display()
            )));
        }
    }
    Ok(())
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let model_path = cfg.model_path()?;
    let dataset_dir = cfg.dataset_dir()?;
    let out = cfg.out_dir()?;
    if cfg.evaluate.formats.is_empty() {
        return Err(CliError::config("no report formats selected"));
    }
    let model = load_model(model_path)?;
    check_training_manifest(model_path, &model)?;
    let (fold_path, data) = load_fold(dataset_dir, cfg.evaluate.fold)?;
    super::train::check_compatible(model.spec(), &data)?;
    let report = evaluate(&model, &data, cfg.threads)?;

    create_dir(out)?;
    let mut manifest = RunManifest::new(cfg);
    manifest.add_input(model_path)?;
    manifest.add_input(&fold_path)?;
    let mut formats = Vec::new();
    for f in &cfg.evaluate.formats {
        if !formats.contains(f) {
            formats.push(*f);
        }
    }
    for format in formats {
        for path in emit_report(&report, format, out)? {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            manifest.add_output(out, name)?;
        }
    }
    manifest.summary = json!({
        "variant": model.spec().variant,
        "spec_hash": model.spec().hash(),
        "fold": cfg.evaluate.fold,
        "beats": report.total,
        "accuracy": report.accuracy,
        "macro_f1": report.macro_avg.f1,
        "weighted_f1": report.weighted_avg.f1,
    });
    manifest.write(out)?;
    print!("{}", report.to_text());
    Ok(())
}
