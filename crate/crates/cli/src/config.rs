//! The effective run configuration. Precedence: command-line flags, then
//! the config file, then defaults. The data directory flag also reads
//! `ECGNET_MITBIH_DIR`, which beats the file.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use ecgnet_core::dataset::{BeatClass, Preprocessing, SplitMode, DEFAULT_TARGET_PER_CLASS, DEFAULT_TEST_FRACTION};
use ecgnet_core::metrics::ReportFormat;
use ecgnet_core::ops::optim::OptimizerConfig;
use ecgnet_core::train::TrainConfig;
use ecgnet_core::xai::{ExportFormat, DEFAULT_SEGMENTS, MAX_EXACT_SEGMENTS};
use ecgnet_core::Variant;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::manifest::MANIFEST_SCHEMA;

pub const DATA_DIR_ENV: &str = "ECGNET_MITBIH_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: String,
    pub paths: Paths,
    pub variant: Variant,
    pub seed: u64,
    /// 1 gives bit-reproducible results; inference and Shapley evaluation
    /// are also thread-count independent.
    pub threads: usize,
    pub ingest: IngestParams,
    pub preprocessing: Preprocessing,
    pub train: TrainParams,
    pub evaluate: EvaluateParams,
    pub explain: ExplainParams,
    pub synth: SynthParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            subcommand: String::new(),
            paths: Paths::default(),
            variant: Variant::V1,
            seed: 0,
            threads: 1,
            ingest: IngestParams::default(),
            preprocessing: Preprocessing::default(),
            train: TrainParams::default(),
            evaluate: EvaluateParams::default(),
            explain: ExplainParams::default(),
            synth: SynthParams::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// WFDB records (preprocess).
    pub data_dir: Option<PathBuf>,
    /// Prepared dataset directory (train, evaluate, explain).
    pub dataset: Option<PathBuf>,
    /// Model file (evaluate, explain).
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestParams {
    /// Record names; empty means every `.hea` in the data directory.
    pub records: Vec<String>,
    pub channel: usize,
    pub split_mode: SplitMode,
    pub target_per_class: usize,
    pub test_fraction: f64,
}

impl Default for IngestParams {
    fn default() -> Self {
        IngestParams {
            records: Vec::new(),
            channel: 0,
            split_mode: SplitMode::default(),
            target_per_class: DEFAULT_TARGET_PER_CLASS,
            test_fraction: DEFAULT_TEST_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainParams {
            epochs: d.epochs,
            batches_per_epoch: d.batches_per_epoch,
            batch_size: d.batch_size,
            learning_rate: d.optimizer.learning_rate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Fold {
    Train,
    #[default]
    Test,
}

impl Fold {
    pub fn file_name(self) -> &'static str {
        match self {
            Fold::Train => crate::commands::TRAIN_FILE,
            Fold::Test => crate::commands::TEST_FILE,
        }
    }
}

impl std::fmt::Display for Fold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Fold::Train => "train",
            Fold::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateParams {
    pub fold: Fold,
    pub formats: Vec<ReportFormat>,
}

impl Default for EvaluateParams {
    fn default() -> Self {
        EvaluateParams {
            fold: Fold::Test,
            formats: vec![ReportFormat::Json, ReportFormat::Csv, ReportFormat::TextTable],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExplainMethod {
    Gradcam,
    Shap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ShapMode {
    #[default]
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BaselineChoice {
    #[default]
    Zeros,
    /// Per-sample mean of the training fold.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainParams {
    pub fold: Fold,
    /// Beat index within the fold.
    pub index: Option<usize>,
    /// Alternatively, the `sample`-th beat of this true class.
    pub class: Option<BeatClass>,
    pub sample: usize,
    /// Class to explain; the predicted class when absent.
    pub target: Option<BeatClass>,
    pub methods: Vec<ExplainMethod>,
    pub mode: ShapMode,
    pub segments: usize,
    pub baseline: BaselineChoice,
    /// Permutations for sampled mode.
    pub draws: usize,
    pub formats: Vec<ExportFormat>,
}

impl Default for ExplainParams {
    fn default() -> Self {
        ExplainParams {
            fold: Fold::Test,
            index: None,
            class: None,
            sample: 0,
            target: None,
            methods: vec![ExplainMethod::Gradcam, ExplainMethod::Shap],
            mode: ShapMode::Exact,
            segments: DEFAULT_SEGMENTS,
            baseline: BaselineChoice::Zeros,
            draws: 2000,
            formats: vec![ExportFormat::Csv, ExportFormat::Json, ExportFormat::Svg],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub records: usize,
    pub beats_per_record: usize,
    pub dominant_share: f64,
    pub noise_mv: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        let d = ecgnet_core::synth::SynthConfig::default();
        SynthParams {
            records: d.records,
            beats_per_record: d.beats_per_record,
            dominant_share: d.dominant_share,
            noise_mv: d.noise_mv,
        }
    }
}

impl RunConfig {
    /// Reads a TOML config, a JSON config, or the `config` member of a run
    /// manifest written by an earlier run.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let bad = |e: String| CliError::config(format!("{}: {e}", path.display()));
        if path.extension().is_some_and(|e| e == "json") {
            let mut value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            if value.get("schema").and_then(|s| s.as_str()) == Some(MANIFEST_SCHEMA) {
                value = value
                    .get_mut("config")
                    .map(serde_json::Value::take)
                    .ok_or_else(|| bad("run manifest has no config".into()))?;
            }
            serde_json::from_value(value).map_err(|e| bad(e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| bad(e.to_string()))
        }
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::from_file)
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.paths
            .out
            .as_deref()
            .ok_or_else(|| CliError::config("no output directory (--out or paths.out)"))
    }

    pub fn dataset_dir(&self) -> CliResult<&Path> {
        self.paths
            .dataset
            .as_deref()
            .ok_or_else(|| CliError::config("no dataset directory (--dataset or paths.dataset)"))
    }

    pub fn model_path(&self) -> CliResult<&Path> {
        self.paths
            .model
            .as_deref()
            .ok_or_else(|| CliError::config("no model file (--model or paths.model)"))
    }

    pub fn data_dir(&self) -> CliResult<&Path> {
        self.paths.data_dir.as_deref().ok_or_else(|| {
            CliError::config(format!(
                "no WFDB data directory (--data-dir, {DATA_DIR_ENV} or paths.data_dir)"
            ))
        })
    }

    pub fn validate_threads(&self) -> CliResult<()> {
        if self.threads == 0 {
            return Err(CliError::config("threads must be at least 1"));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            variant: self.variant,
            epochs: self.train.epochs,
            batches_per_epoch: self.train.batches_per_epoch,
            batch_size: self.train.batch_size,
            optimizer: OptimizerConfig::adam(self.train.learning_rate),
            seed: self.seed,
        }
    }

    /// Rejects explain settings that cannot run before any model is loaded.
    pub fn validate_explain(&self) -> CliResult<()> {
        let x = &self.explain;
        if x.methods.is_empty() || x.formats.is_empty() {
            return Err(CliError::config("explain needs at least one method and one format"));
        }
        if x.index.is_some() && x.class.is_some() {
            return Err(CliError::config("select a beat by --index or by --class, not both"));
        }
        if x.methods.contains(&ExplainMethod::Shap) {
            if x.segments == 0 {
                return Err(CliError::config("segments must be at least 1"));
            }
            if x.mode == ShapMode::Exact && x.segments > MAX_EXACT_SEGMENTS {
                return Err(CliError::config(format!(
                    "exact Shapley mode enumerates 2^{} coalitions; it is limited to {MAX_EXACT_SEGMENTS} segments. \
                     Use --mode sampled (with --draws) for {} segments, or lower --segments",
                    x.segments, x.segments
                )));
            }
            if x.mode == ShapMode::Sampled && x.draws == 0 {
                return Err(CliError::config("sampled mode needs --draws of at least 1"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg: RunConfig = toml::from_str(
            "seed = 9\nvariant = \"v2\"\n[train]\nepochs = 3\n[preprocessing]\nwavelet_levels = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.variant, Variant::V2);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 48);
        assert_eq!(cfg.preprocessing.wavelet_levels, 3);
        assert_eq!(cfg.ingest, IngestParams::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("[train]\nepoch = 3\n").is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.explain.class = Some(BeatClass::Pvc);
        cfg.paths.out = Some("x".into());
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn exact_mode_segment_guard() {
        let mut cfg = RunConfig::default();
        cfg.explain.segments = 20;
        let err = cfg.validate_explain().unwrap_err();
        assert!(err.message.contains("--mode sampled"), "{}", err.message);
        cfg.explain.mode = ShapMode::Sampled;
        cfg.validate_explain().unwrap();
        cfg.explain.methods = vec![ExplainMethod::Gradcam];
        cfg.explain.mode = ShapMode::Exact;
        cfg.validate_explain().unwrap();
    }
}
