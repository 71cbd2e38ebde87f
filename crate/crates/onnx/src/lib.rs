//! ONNX image classifiers for `xprobe`, run on CPU with tract.
//!
//! A model is described by a small JSON file:
//!
//! ```json
//! {
//!   "name": "resnet50",
//!   "path_or_url": "models/resnet50.onnx",
//!   "input_size": 224,
//!   "mean": [0.485, 0.456, 0.406],
//!   "std": [0.229, 0.224, 0.225],
//!   "class_count": 1000
//! }
//! ```
//!
//! Images handed to the classifier hold RGB values in `[0, 1]` at
//! `input_size`×`input_size`; the per-channel normalization happens here, so
//! masking and baselines stay in pixel space. Greyscale images are repeated
//! over three channels. Model outputs are logits unless `"output":
//! "probabilities"` is given.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tract_onnx::prelude::*;
use xprobe::imaging::ImageTensor;
use xprobe::oracle::{ClassLabel, Classifier};
use xprobe::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    /// Softmax is applied to the model output.
    #[default]
    Logits,
    Probabilities,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub path_or_url: String,
    #[serde(default = "default_input_size")]
    pub input_size: usize,
    #[serde(default = "default_mean")]
    pub mean: [f32; 3],
    #[serde(default = "default_std")]
    pub std: [f32; 3],
    pub class_count: usize,
    #[serde(default)]
    pub output: OutputKind,
}

fn default_input_size() -> usize {
    224
}

fn default_mean() -> [f32; 3] {
    [0.485, 0.456, 0.406]
}

fn default_std() -> [f32; 3] {
    [0.229, 0.224, 0.225]
}

impl ModelConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config: ModelConfig = serde_json::from_str(&text)?;
        // relative model paths are relative to the config file
        if !is_url(&config.path_or_url) && Path::new(&config.path_or_url).is_relative() {
            if let Some(dir) = path.parent() {
                config.path_or_url = dir.join(&config.path_or_url).to_string_lossy().into_owned();
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("model `{}`: {m}", self.name)));
        if self.name.is_empty() {
            return bad("empty name".into());
        }
        if self.input_size == 0 {
            return bad("input_size must be positive".into());
        }
        if self.class_count == 0 {
            return bad("class_count must be positive".into());
        }
        if self.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.mean.iter().any(|m| !m.is_finite()) {
            return bad("mean must be finite and std positive".into());
        }
        if !is_url(&self.path_or_url) && !Path::new(&self.path_or_url).is_file() {
            return bad(format!("model file `{}` does not exist", self.path_or_url));
        }
        Ok(())
    }
}

fn is_url(s: &str) -> bool {
    s.starts_with("http://") || s.starts_with("https://")
}

/// Local path of the model, downloading URLs into `download_dir` once.
pub fn resolve_model(path_or_url: &str, download_dir: &Path) -> Result<PathBuf> {
    if !is_url(path_or_url) {
        return Ok(PathBuf::from(path_or_url));
    }
    let file_name: String = path_or_url
        .rsplit('/')
        .next()
        .filter(|s| !s.is_empty())
        .unwrap_or("model.onnx")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' { c } else { '_' })
        .collect();
    let target = download_dir.join(file_name);
    if target.is_file() {
        return Ok(target);
    }
    std::fs::create_dir_all(download_dir)?;
    let mut response = ureq::get(path_or_url)
        .call()
        .map_err(|e| Error::oracle(path_or_url, format!("download failed: {e}")))?;
    let partial = target.with_extension("part");
    let mut file = std::fs::File::create(&partial)?;
    std::io::copy(&mut response.body_mut().as_reader(), &mut file)?;
    std::fs::rename(&partial, &target)?;
    Ok(target)
}

pub struct OnnxClassifier {
    config: ModelConfig,
    plan: Arc<TypedRunnableModel>,
}

impl std::fmt::Debug for OnnxClassifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxClassifier").field("config", &self.config).finish()
    }
}

impl OnnxClassifier {
    /// Loads and optimizes the model for a dynamic batch of
    /// `3 × input_size × input_size` inputs.
    pub fn load(config: ModelConfig, download_dir: &Path) -> Result<Self> {
        config.validate()?;
        let path = resolve_model(&config.path_or_url, download_dir)?;
        let fail = |e: TractError| Error::oracle(&config.name, format!("{e:#}"));
        let model = tract_onnx::onnx().model_for_path(&path).map_err(fail)?;
        let batch = model.symbols.sym("N");
        let size = config.input_size;
        let fact = f32::fact(&[batch.to_dim(), 3.to_dim(), size.to_dim(), size.to_dim()]);
        let plan = model
            .with_input_fact(0, fact.into())
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(fail)?;
        Ok(Self { config, plan })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn input(&self, images: &[ImageTensor]) -> Result<Tensor> {
        let size = self.config.input_size;
        for image in images {
            if image.height() != size || image.width() != size || !matches!(image.channels(), 1 | 3) {
                return Err(Error::DimensionMismatch(format!(
                    "model `{}` expects {size}x{size} RGB or greyscale, got {}x{}x{}",
                    self.config.name,
                    image.channels(),
                    image.height(),
                    image.width()
                )));
            }
        }
        let (mean, std) = (self.config.mean, self.config.std);
        let array = tract_ndarray::Array4::from_shape_fn((images.len(), 3, size, size), |(n, c, y, x)| {
            let image = &images[n];
            let channel = if image.channels() == 1 { 0 } else { c };
            (image.get(channel, y, x) - mean[c]) / std[c]
        });
        Ok(array.into())
    }

    /// Class probabilities for each image.
    pub fn probabilities(&self, images: &[ImageTensor]) -> Result<Vec<Vec<f64>>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let fail = |e: TractError| Error::oracle(&self.config.name, format!("{e:#}"));
        let outputs = self.plan.run(tvec!(self.input(images)?.into())).map_err(fail)?;
        let view = outputs[0].to_plain_array_view::<f32>().map_err(fail)?;
        let flat: Vec<f64> = view.iter().map(|v| *v as f64).collect();
        let k = self.config.class_count;
        if flat.len() != images.len() * k {
            return Err(Error::oracle(
                &self.config.name,
                format!("output has {} values, expected {} x {k}", flat.len(), images.len()),
            ));
        }
        Ok(flat
            .chunks(k)
            .map(|row| match self.config.output {
                OutputKind::Logits => softmax(row),
                OutputKind::Probabilities => row.iter().map(|p| p.clamp(0.0, 1.0)).collect(),
            })
            .collect())
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.iter().map(|e| e / sum).collect()
}

impl Classifier for OnnxClassifier {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn class_count(&self) -> usize {
        self.config.class_count
    }

    fn score_batch(&self, images: &[ImageTensor], class: ClassLabel) -> Result<Vec<f64>> {
        Ok(self
            .probabilities(images)?
            .into_iter()
            .map(|p| p[class.index()])
            .collect())
    }

    fn class_scores(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        Ok(self.probabilities(std::slice::from_ref(image))?.remove(0))
    }
}
