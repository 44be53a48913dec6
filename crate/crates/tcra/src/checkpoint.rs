//! Model checkpoints.
//!
//! A checkpoint is a directory:
//!
//! ```text
//! <dir>/model.json      format version, model config, parameter manifest
//! <dir>/<name>.tcra     one tensor container per parameter
//! ```
//!
//! Parameter files are named after the parameter (dots included), e.g.
//! `s1.att.w_h.tcra`. Loading builds a fresh model from the stored config
//! and overwrites every parameter value by name, so a round trip is
//! bit-exact on values and any mismatch — unknown name, wrong shape,
//! missing file, short file — fails before a model is returned.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use tcra_core::model::{Arch, Model, ModelConfig};

use crate::tensor_file;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const META_FILE: &str = "model.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    config: ModelConfig,
    params: Vec<ParamEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    file: String,
}

/// Writes the model to `dir`, creating it if needed.
pub fn save(model: &Model<f64>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(model.params().len());
    for (id, param) in model.params().iter() {
        let _ = id;
        let file = format!("{}.tcra", param.name());
        tensor_file::write_f64(&dir.join(&file), param.value())?;
        entries.push(ParamEntry {
            name: param.name().to_string(),
            file,
        });
    }
    let meta = Meta {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        params: entries,
    };
    let path = dir.join(META_FILE);
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn read_meta(dir: &Path) -> Result<Meta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: Meta = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::format(
            &path,
            0,
            format!(
                "unsupported checkpoint format {} (this build reads {FORMAT_VERSION})",
                meta.format_version
            ),
        ));
    }
    Ok(meta)
}

/// Reads the stored config without touching any tensor files.
pub fn peek_config(dir: &Path) -> Result<ModelConfig> {
    Ok(read_meta(dir)?.config)
}

/// Loads the full model.
pub fn load(dir: &Path) -> Result<Model<f64>> {
    load_with(dir, None)
}

/// Loads the full model, refusing a checkpoint of any other architecture.
pub fn load_expecting(dir: &Path, arch: Arch) -> Result<Model<f64>> {
    load_with(dir, Some(arch))
}

fn load_with(dir: &Path, expect: Option<Arch>) -> Result<Model<f64>> {
    let meta = read_meta(dir)?;
    if let Some(arch) = expect {
        if meta.config.arch != arch {
            return Err(Error::Core(tcra_core::Error::Config(format!(
                "checkpoint holds arch {}, requested {}",
                meta.config.arch.name(),
                arch.name()
            ))));
        }
    }
    // Seed value is irrelevant: every parameter is overwritten below, and a
    // missing one is an error.
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let mut model = Model::new(meta.config.clone(), &mut rng).map_err(Error::Core)?;
    if meta.params.len() != model.params().len() {
        return Err(Error::Core(tcra_core::Error::Config(format!(
            "checkpoint lists {} parameters, arch {} has {}",
            meta.params.len(),
            meta.config.arch.name(),
            model.params().len()
        ))));
    }
    for entry in &meta.params {
        let id = model.params().id_of(&entry.name).ok_or_else(|| {
            Error::Core(tcra_core::Error::Config(format!(
                "checkpoint parameter {} does not exist in arch {}",
                entry.name,
                meta.config.arch.name()
            )))
        })?;
        let tensor = tensor_file::read(&dir.join(&entry.file))?.into_f64();
        let current = model.params().value(id);
        if tensor.shape() != current.shape() {
            return Err(Error::Core(tcra_core::Error::Config(format!(
                "checkpoint parameter {} has shape {:?}, model wants {:?}",
                entry.name,
                tensor.shape(),
                current.shape()
            ))));
        }
        *model.params_mut().value_mut(id) = tensor;
    }
    Ok(model)
}

/// Copies a pre-trained global stream into `model` and sets whether it
/// keeps learning. Returns the number of parameters copied.
pub fn apply_pretrained_global(
    model: &mut Model<f64>,
    source_dir: &Path,
    finetune: bool,
) -> Result<usize> {
    let source = load(source_dir)?;
    let copied = model.adopt_named(source.params(), "g.").map_err(Error::Core)?;
    model.set_trainable_by_prefix("g.", finetune);
    Ok(copied)
}
