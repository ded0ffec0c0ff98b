use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecgnet_core::dataset::{BeatClass, SplitMode};
use ecgnet_core::metrics::ReportFormat;
use ecgnet_core::xai::ExportFormat;
use ecgnet_core::Variant;

use crate::config::{BaselineChoice, ExplainMethod, Fold, RunConfig, ShapMode, DATA_DIR_ENV};

#[derive(Debug, Parser)]
#[command(name = "ecgnet", version, about = "ECG beat classification with lightweight 1D CNNs")]
pub struct Cli {
    /// TOML or JSON config file, or a run-manifest.json from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for inference and explanations (1 = bit-reproducible).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Denoise, segment, balance and split WFDB records into a dataset.
    Preprocess(PreprocessArgs),
    /// Train a model on a prepared dataset.
    Train(TrainArgs),
    /// Classification report, confusion matrix and error analysis.
    Evaluate(EvaluateArgs),
    /// Grad-CAM and Shapley attributions for selected beats.
    Explain(ExplainArgs),
    /// Print the parameter, MAC and size report of a variant.
    Inspect(InspectArgs),
    /// Write synthetic annotated WFDB records (for smoke tests without MIT-BIH).
    Synth(SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Preprocess(_) => "preprocess",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Explain(_) => "explain",
            Command::Inspect(_) => "inspect",
            Command::Synth(_) => "synth",
        }
    }

    /// Overlays the flags that were given onto `cfg`.
    pub fn apply(&self, cfg: &mut RunConfig) {
        cfg.subcommand = self.name().to_string();
        match self {
            Command::Preprocess(a) => a.apply(cfg),
            Command::Train(a) => a.apply(cfg),
            Command::Evaluate(a) => a.apply(cfg),
            Command::Explain(a) => a.apply(cfg),
            Command::Inspect(a) => a.apply(cfg),
            Command::Synth(a) => a.apply(cfg),
        }
    }
}

fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
    if let Some(v) = src {
        *dst = v.clone();
    }
}

fn set_opt<T: Clone>(dst: &mut Option<T>, src: &Option<T>) {
    if src.is_some() {
        dst.clone_from(src);
    }
}

fn set_list<T: Clone>(dst: &mut Vec<T>, src: &[T]) {
    if !src.is_empty() {
        *dst = src.to_vec();
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Directory holding the WFDB records.
    #[arg(long, env = DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
    /// Record names, comma separated (default: every .hea in the directory).
    #[arg(long, value_delimiter = ',')]
    pub records: Vec<String>,
    #[arg(long)]
    pub channel: Option<usize>,
    /// leakage-safe or paper-faithful.
    #[arg(long)]
    pub split_mode: Option<SplitMode>,
    #[arg(long)]
    pub target_per_class: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub wavelet_levels: Option<usize>,
    /// Fixed soft threshold instead of the universal threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl PreprocessArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.paths.data_dir, &self.data_dir);
        set_opt(&mut cfg.paths.out, &self.out);
        set_list(&mut cfg.ingest.records, &self.records);
        set(&mut cfg.ingest.channel, &self.channel);
        set(&mut cfg.ingest.split_mode, &self.split_mode);
        set(&mut cfg.ingest.target_per_class, &self.target_per_class);
        set(&mut cfg.ingest.test_fraction, &self.test_fraction);
        set(&mut cfg.preprocessing.wavelet_levels, &self.wavelet_levels);
        set_opt(&mut cfg.preprocessing.threshold, &self.threshold);
        set(&mut cfg.seed, &self.seed);
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `preprocess`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batches_per_epoch: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl TrainArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.paths.dataset, &self.dataset);
        set_opt(&mut cfg.paths.out, &self.out);
        set(&mut cfg.variant, &self.variant);
        set(&mut cfg.train.epochs, &self.epochs);
        set(&mut cfg.train.batches_per_epoch, &self.batches_per_epoch);
        set(&mut cfg.train.batch_size, &self.batch_size);
        set(&mut cfg.train.learning_rate, &self.learning_rate);
        set(&mut cfg.seed, &self.seed);
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub fold: Option<Fold>,
    /// json, csv, text-table; comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    pub format: Vec<ReportFormat>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl EvaluateArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.paths.model, &self.model);
        set_opt(&mut cfg.paths.dataset, &self.dataset);
        set_opt(&mut cfg.paths.out, &self.out);
        set(&mut cfg.evaluate.fold, &self.fold);
        set_list(&mut cfg.evaluate.formats, &self.format);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Gradcam,
    Shap,
    All,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub fold: Option<Fold>,
    /// Beat index within the fold.
    #[arg(long)]
    pub index: Option<usize>,
    /// Pick a beat of this true class instead (NSR, LBBB, RBBB, APC, PVC).
    #[arg(long)]
    pub class: Option<BeatClass>,
    /// Which beat of --class, counting from 0.
    #[arg(long)]
    pub sample: Option<usize>,
    /// Class to explain (default: the predicted class).
    #[arg(long)]
    pub target: Option<BeatClass>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub method: Vec<MethodArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ShapMode>,
    #[arg(long)]
    pub segments: Option<usize>,
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineChoice>,
    /// Permutations drawn in sampled mode.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// csv, json, svg; comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    pub format: Vec<ExportFormat>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ExplainArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let x = &mut cfg.explain;
        set_opt(&mut cfg.paths.model, &self.model);
        set_opt(&mut cfg.paths.dataset, &self.dataset);
        set_opt(&mut cfg.paths.out, &self.out);
        set(&mut x.fold, &self.fold);
        if self.index.is_some() || self.class.is_some() {
            x.index = self.index;
            x.class = self.class;
        }
        set(&mut x.sample, &self.sample);
        set_opt(&mut x.target, &self.target);
        if !self.method.is_empty() {
            x.methods = if self.method.contains(&MethodArg::All) {
                vec![ExplainMethod::Gradcam, ExplainMethod::Shap]
            } else {
                let mut m: Vec<ExplainMethod> = self
                    .method
                    .iter()
                    .map(|m| match m {
                        MethodArg::Gradcam => ExplainMethod::Gradcam,
                        _ => ExplainMethod::Shap,
                    })
                    .collect();
                m.dedup();
                m
            };
        }
        set(&mut x.mode, &self.mode);
        set(&mut x.segments, &self.segments);
        set(&mut x.baseline, &self.baseline);
        set(&mut x.draws, &self.draws);
        set_list(&mut x.formats, &self.format);
        set(&mut cfg.seed, &self.seed);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InspectFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: InspectFormat,
    /// Also write the cost report and a run manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl InspectArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.variant, &self.variant);
        set_opt(&mut cfg.paths.out, &self.out);
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub records: Option<usize>,
    #[arg(long)]
    pub beats_per_record: Option<usize>,
    #[arg(long)]
    pub dominant_share: Option<f64>,
    #[arg(long)]
    pub noise_mv: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SynthArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.synth.records, &self.records);
        set(&mut cfg.synth.beats_per_record, &self.beats_per_record);
        set(&mut cfg.synth.dominant_share, &self.dominant_share);
        set(&mut cfg.synth.noise_mv, &self.noise_mv);
        set(&mut cfg.seed, &self.seed);
        set_opt(&mut cfg.paths.out, &self.out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("ecgnet").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_file_values() {
        let mut cfg = RunConfig::default();
        cfg.seed = 5;
        cfg.train.epochs = 7;
        cfg.train.batch_size = 16;
        let cli = parse(&["train", "--epochs", "2", "--dataset", "d", "--out", "o"]);
        cli.command.apply(&mut cfg);
        assert_eq!(cfg.subcommand, "train");
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.train.batch_size, 16);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.paths.dataset.as_deref(), Some(std::path::Path::new("d")));
    }

    #[test]
    fn explain_selectors_and_methods() {
        let mut cfg = RunConfig::default();
        cfg.explain.index = Some(3);
        let cli = parse(&["explain", "--class", "PVC", "--method", "shap", "--format", "csv,svg"]);
        cli.command.apply(&mut cfg);
        assert_eq!(cfg.explain.index, None);
        assert_eq!(cfg.explain.class, Some(BeatClass::Pvc));
        assert_eq!(cfg.explain.methods, [ExplainMethod::Shap]);
        assert_eq!(cfg.explain.formats, [ExportFormat::Csv, ExportFormat::Svg]);
        let cli = parse(&["explain", "--method", "all"]);
        cli.command.apply(&mut cfg);
        assert_eq!(cfg.explain.methods.len(), 2);
    }

    #[test]
    fn bad_values_are_usage_errors() {
        for args in [
            &["train", "--variant", "v3"][..],
            &["preprocess", "--split-mode", "random"],
            &["explain", "--mode", "fast"],
            &["evaluate", "--format", "xml"],
        ] {
            let err = Cli::try_parse_from(std::iter::once("ecgnet").chain(args.iter().copied()))
                .unwrap_err();
            assert_eq!(err.exit_code(), 2, "{args:?}");
        }
    }
}
