pub mod evaluate;
pub mod explain;
pub mod inspect;
pub mod preprocess;
pub mod synth;
pub mod train;

use std::fs;
use std::path::{Path, PathBuf};

use ecgnet_core::dataset::{load_beats, BeatDataset};
use ecgnet_core::model::io as model_io;
use ecgnet_core::Model;

use crate::config::Fold;
use crate::error::{CliError, CliResult};

pub const TRAIN_FILE: &str = "train.beats";
pub const TEST_FILE: &str = "test.beats";
pub const DATASET_MANIFEST: &str = "dataset.json";
pub const MODEL_FILE: &str = "model.anet";

pub(crate) fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub(crate) fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Fails with every missing path listed.
pub(crate) fn require_files(paths: &[PathBuf]) -> CliResult<()> {
    let missing: Vec<PathBuf> = paths.iter().filter(|p| !p.is_file()).cloned().collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::missing_files(&missing))
    }
}

pub(crate) fn load_fold(dataset_dir: &Path, fold: Fold) -> CliResult<(PathBuf, BeatDataset)> {
    let path = dataset_dir.join(fold.file_name());
    require_files(std::slice::from_ref(&path))?;
    let data = load_beats(&path)?;
    Ok((path, data))
}

pub(crate) fn load_model(path: &Path) -> CliResult<Model<f32>> {
    require_files(&[path.to_path_buf()])?;
    Ok(model_io::load(path)?)
}

pub(crate) fn pretty_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serialises");
    s.push('\n');
    s
}
