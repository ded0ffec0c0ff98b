use ecgnet_core::dataset::{BeatClass, BeatDataset};
use ecgnet_core::train::batch_tensor;
use ecgnet_core::xai::{
    export_attribution, grad_cam, mean_beat, shap_exact, shap_sampled, Attribution, Baseline, Draws,
};
use serde_json::json;

use super::{create_dir, load_fold, load_model, pretty_json, write};
use crate::config::{BaselineChoice, ExplainMethod, Fold, RunConfig, ShapMode};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

pub const SUMMARY_FILE: &str = "explanation.json";

fn select_beat(cfg: &RunConfig, data: &BeatDataset) -> CliResult<usize> {
    let x = &cfg.explain;
    let n = data.len();
    if let Some(class) = x.class {
        let of_class = data.indices_of(class);
        return of_class.get(x.sample).copied().ok_or_else(|| {
            CliError::config(format!(
                "sample {} of class {class} out of range ({} {class} beats in the {} fold)",
                x.sample,
                of_class.len(),
                x.fold
            ))
        });
    }
    let index = x.index.unwrap_or(0);
    if index >= n {
        return Err(CliError::config(format!(
            "beat index {index} out of range ({n} beats in the {} fold)",
            x.fold
        )));
    }
    Ok(index)
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate_explain()?;
    let x = &cfg.explain;
    let model_path = cfg.model_path()?;
    let dataset_dir = cfg.dataset_dir()?;
    let out = cfg.out_dir()?;
    let model = load_model(model_path)?;
    super::evaluate::check_training_manifest(model_path, &model)?;
    let (fold_path, data) = load_fold(dataset_dir, x.fold)?;
    super::train::check_compatible(model.spec(), &data)?;
    let index = select_beat(cfg, &data)?;
    let beat: Vec<f64> = data.beat(index).iter().map(|&v| v as f64).collect();
    let probs: Vec<f64> = model
        .predict(&batch_tensor::<f32>(&data, &[index]))?
        .row(0)
        .iter()
        .map(|&p| p as f64)
        .collect();
    let predicted = probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map_or(0, |(i, _)| i);
    let target = x.target.map_or(predicted, BeatClass::index);

    let mut manifest = RunManifest::new(cfg);
    manifest.add_input(model_path)?;
    manifest.add_input(&fold_path)?;

    let mut attributions: Vec<Attribution> = Vec::new();
    for method in &x.methods {
        match method {
            ExplainMethod::Gradcam => attributions.push(grad_cam(&model, &beat, target)?),
            ExplainMethod::Shap => {
                let baseline = match x.baseline {
                    BaselineChoice::Zeros => Baseline::Zeros,
                    BaselineChoice::Mean => {
                        let (train_path, train) = load_fold(dataset_dir, Fold::Train)?;
                        manifest.add_input(&train_path)?;
                        Baseline::Mean(mean_beat(&train)?)
                    }
                };
                let attr = match x.mode {
                    ShapMode::Exact => {
                        shap_exact(&model, &beat, target, x.segments, &baseline, cfg.threads)?
                    }
                    ShapMode::Sampled => shap_sampled(
                        &model,
                        &beat,
                        target,
                        x.segments,
                        &baseline,
                        Draws::Random(x.draws),
                        cfg.seed,
                        cfg.threads,
                    )?,
                };
                attributions.push(attr);
            }
        }
    }

    create_dir(out)?;
    let mut files = Vec::new();
    for attr in &attributions {
        let stem = format!("beat{index:05}_{}", attr.method.name());
        for &format in &x.formats {
            let path = export_attribution(attr, &beat, format, out, &stem)?;
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            manifest.add_output(out, &name)?;
            files.push(name);
        }
    }
    let class_name = |i: usize| BeatClass::from_index(i).map(BeatClass::name);
    let summary = json!({
        "fold": x.fold,
        "index": index,
        "provenance": data.provenance()[index],
        "true_class": data.labels()[index],
        "predicted_class": class_name(predicted),
        "target_class": class_name(target),
        "probabilities": probs,
        "attributions": attributions.iter().map(|a| json!({
            "method": a.method,
            "segments": a.segments.len(),
            "full_value": a.full_value,
            "empty_value": a.empty_value,
            "efficiency_gap": a.efficiency_gap(),
            "draws": a.draws,
        })).collect::<Vec<_>>(),
        "files": files,
    });
    write(out, SUMMARY_FILE, pretty_json(&summary))?;
    manifest.add_output(out, SUMMARY_FILE)?;
    manifest.summary = summary;
    manifest.write(out)?;

    println!(
        "beat {index} ({} fold): true {}, predicted {}, explaining {}",
        x.fold,
        data.labels()[index],
        class_name(predicted).unwrap_or("?"),
        class_name(target).unwrap_or("?"),
    );
    for f in &manifest.summary["files"].as_array().cloned().unwrap_or_default() {
        println!("wrote {}", f.as_str().unwrap_or_default());
    }
    Ok(())
}
