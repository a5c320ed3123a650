use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Hyperparams, TrainedModel};
use super::spec::ArchitectureSpec;
use crate::dataio::json;
use crate::error::{Error, Result};

const FORMAT: &str = "coxplain-model-v1";
pub const MANIFEST_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "model.bin";

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    spec: ArchitectureSpec,
    seed: u64,
    hyperparams: Hyperparams,
    parameter_count: usize,
    byte_order: String,
    parameters: Vec<ParamEntry>,
    epochs_run: usize,
    #[serde(serialize_with = "json::opt::serialize")]
    best_val_cindex: Option<f64>,
}

/// Writes `model.json` and `model.bin` into `dir`, creating it if needed.
pub fn save_checkpoint(model: &TrainedModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        format: FORMAT.into(),
        spec: model.spec.clone(),
        seed: model.seed,
        hyperparams: model.hyperparams,
        parameter_count: model.parameter_count(),
        byte_order: "little-endian IEEE-754 f64, layers in forward order, weights row-major then bias".into(),
        parameters: model
            .param_decls()
            .iter()
            .map(|d| ParamEntry {
                name: d.name.clone(),
                rows: d.rows,
                cols: d.cols,
            })
            .collect(),
        epochs_run: model.epochs_run,
        best_val_cindex: model.best_val_cindex,
    };
    json::write(&dir.join(MANIFEST_FILE), &manifest)?;
    let bytes: Vec<u8> = model.flat_params().iter().flat_map(|x| x.to_le_bytes()).collect();
    let path = dir.join(WEIGHTS_FILE);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<TrainedModel> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = json::read(&manifest_path)?;
    if manifest.format != FORMAT {
        return Err(Error::format(
            &manifest_path,
            format!("format `{}`, expected `{FORMAT}`", manifest.format),
        ));
    }
    let path = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() != manifest.parameter_count * 8 {
        return Err(Error::format(
            &path,
            format!(
                "{} bytes, expected {} for {} parameters",
                bytes.len(),
                manifest.parameter_count * 8,
                manifest.parameter_count
            ),
        ));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut model = TrainedModel::build(&manifest.spec, manifest.seed)?;
    let layout_matches = model.param_decls().len() == manifest.parameters.len()
        && model
            .param_decls()
            .iter()
            .zip(&manifest.parameters)
            .all(|(d, p)| d.name == p.name && d.rows == p.rows && d.cols == p.cols);
    if !layout_matches {
        return Err(Error::format(&manifest_path, "parameter layout does not match the architecture"));
    }
    model.set_flat(&flat)?;
    model.hyperparams = manifest.hyperparams;
    model.epochs_run = manifest.epochs_run;
    model.best_val_cindex = manifest.best_val_cindex;
    Ok(model)
}
