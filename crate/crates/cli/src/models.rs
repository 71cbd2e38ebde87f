use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use xprobe::imaging::make_grid;
use xprobe::oracle::{make_synthetic, Classifier, ConfidenceCache, RemoteClassifier};
use xprobe_onnx::{ModelConfig, OnnxClassifier};

use crate::config::{valid_name, ModelEntry, RunConfig};
use crate::error::CliError;

/// A classifier with its cache and the file the cache persists to.
pub struct Model {
    pub oracle: Box<dyn Classifier>,
    pub cache: ConfidenceCache,
    cache_file: Option<PathBuf>,
}

impl Model {
    pub fn name(&self) -> &str {
        self.oracle.name()
    }

    pub fn save_cache(&self) -> Result<(), CliError> {
        if let Some(path) = &self.cache_file {
            self.cache.save_jsonl(path)?;
        }
        Ok(())
    }
}

pub fn load_models(config: &RunConfig) -> Result<Vec<Model>, CliError> {
    let grid = make_grid(config.input_size, config.input_size, config.grid.rows, config.grid.cols)?;
    let download_dir = config
        .cache_dir
        .clone()
        .unwrap_or_else(|| config.output_dir.join("models"));
    let mut names = BTreeSet::new();
    let mut models = Vec::new();
    for entry in &config.models {
        let oracle: Box<dyn Classifier> = match entry {
            ModelEntry::Onnx { config: path } => Box::new(onnx(path, config.input_size, &download_dir)?),
            ModelEntry::Remote { name, url, class_count } => Box::new(RemoteClassifier::new(name, url, *class_count)),
            ModelEntry::Synthetic { name, spec } => Box::new(make_synthetic(name, spec, &grid)?),
        };
        if !names.insert(oracle.name().to_string()) {
            return Err(CliError::Config(format!("duplicate model name `{}`", oracle.name())));
        }
        let cache_file = config.cache_dir.as_ref().map(|d| d.join(format!("{}.jsonl", oracle.name())));
        let cache = ConfidenceCache::new();
        if let Some(path) = &cache_file {
            cache.load_jsonl(path)?;
        }
        models.push(Model {
            oracle,
            cache,
            cache_file,
        });
    }
    Ok(models)
}

fn onnx(path: &Path, input_size: usize, download_dir: &Path) -> Result<OnnxClassifier, CliError> {
    let model = ModelConfig::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if !valid_name(&model.name) {
        return Err(CliError::Config(format!("model name `{}` must be path-safe", model.name)));
    }
    if model.input_size != input_size {
        return Err(CliError::Config(format!(
            "model `{}` takes {}px inputs but the run uses input_size {input_size}",
            model.name, model.input_size
        )));
    }
    Ok(OnnxClassifier::load(model, download_dir)?)
}

/// Model names as the config declares them, without loading any weights.
pub fn model_names(config: &RunConfig) -> Result<Vec<String>, CliError> {
    config
        .models
        .iter()
        .map(|entry| match entry {
            ModelEntry::Onnx { config: path } => ModelConfig::from_path(path)
                .map(|m| m.name)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display()))),
            ModelEntry::Remote { name, .. } | ModelEntry::Synthetic { name, .. } => Ok(name.clone()),
        })
        .collect()
}
