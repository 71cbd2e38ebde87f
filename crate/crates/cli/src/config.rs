//! Run configuration: one JSON file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xprobe::crosstest::{Channel, Kernel};
use xprobe::imaging::{BaselineStyle, Upsampling};
use xprobe::msesearch::BeamConfig;
use xprobe::oracle::SyntheticOracleSpec;
use xprobe::saliency::RandomizedMapConfig;
use xprobe::subexplain::CountConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    /// Label written into crosstest outputs; defaults to the config file stem.
    #[serde(default)]
    pub dataset_id: Option<String>,
    pub models: Vec<ModelEntry>,
    #[serde(default = "default_input_size")]
    pub input_size: usize,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub beam: BeamConfig,
    #[serde(default)]
    pub count: CountConfig,
    #[serde(default)]
    pub baseline: BaselineStyle,
    #[serde(default)]
    pub saliency: SaliencyConfig,
    #[serde(default)]
    pub crosstest: CrosstestConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses every logical CPU.
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_input_size() -> usize {
    224
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("xprobe-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Explicit image files.
    Images(Vec<PathBuf>),
    /// Every PNG or JPEG in a directory, sorted by name.
    Dir(PathBuf),
    /// Generated images; see [`crate::dataset::synthetic_dataset`].
    Synthetic(SyntheticDataset),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDataset {
    pub count: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    /// Up to this many grid patches per image are set to the grey baseline.
    #[serde(default)]
    pub blank_max: usize,
}

fn default_channels() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelEntry {
    /// `config` points at an ONNX model config file.
    Onnx { config: PathBuf },
    Remote {
        name: String,
        url: String,
        class_count: usize,
    },
    Synthetic {
        name: String,
        spec: SyntheticOracleSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { rows: 7, cols: 7 }
    }
}

impl std::str::FromStr for GridConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (r, c) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("grid `{s}` is not of the form RxC"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("grid `{s}`: {e}"));
        Ok(Self {
            rows: parse(r)?,
            cols: parse(c)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaliencyConfig {
    pub steps: usize,
    pub upsampling: Upsampling,
    pub maps: MapSource,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            steps: xprobe::saliency::DEFAULT_STEPS,
            upsampling: Upsampling::Nearest,
            maps: MapSource::Randomized(RandomizedMapConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum MapSource {
    /// Generated per model; the config seed is mixed in per image.
    Randomized(RandomizedMapConfig),
    /// `<dir>/<generator>/<image>.fmap` or `.png`.
    Files { dir: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrosstestConfig {
    pub channel: Channel,
    pub kernel: Kernel,
    pub dims: usize,
}

impl Default for CrosstestConfig {
    fn default() -> Self {
        Self {
            channel: Channel::Ins,
            kernel: Kernel::default(),
            dims: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub max_children: usize,
    /// Largest `n` on the percent-explained curve; `None` means the grid size.
    pub max_n: Option<usize>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            max_children: xprobe::report::DEFAULT_MAX_CHILDREN,
            max_n: None,
        }
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub baseline: Option<BaselineStyle>,
    pub beam_width: Option<usize>,
    pub p_h: Option<f64>,
    pub grid: Option<GridConfig>,
    pub steps: Option<usize>,
}

impl RunConfig {
    /// Reads, resolves relative paths against the file's directory, applies
    /// overrides and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        if config.dataset_id.is_none() {
            config.dataset_id = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        config.apply(overrides);
        if let Ok(dir) = std::env::var("XPROBE_CACHE_DIR") {
            if !dir.is_empty() {
                config.cache_dir = Some(PathBuf::from(dir));
            }
        }
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.dataset {
            DatasetConfig::Images(paths) => paths.iter_mut().for_each(fix),
            DatasetConfig::Dir(dir) => fix(dir),
            DatasetConfig::Synthetic(_) => {}
        }
        for model in &mut self.models {
            if let ModelEntry::Onnx { config } = model {
                fix(config);
            }
        }
        if let MapSource::Files { dir } = &mut self.saliency.maps {
            fix(dir);
        }
        fix(&mut self.output_dir);
        if let Some(dir) = &mut self.cache_dir {
            fix(dir);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(jobs) = o.jobs {
            self.jobs = Some(jobs);
        }
        if let Some(b) = o.baseline {
            self.baseline = b;
        }
        if let Some(w) = o.beam_width {
            self.beam.beam_width = w;
        }
        if let Some(p) = o.p_h {
            self.beam.p_h = p;
        }
        if let Some(g) = o.grid {
            self.grid = g;
        }
        if let Some(t) = o.steps {
            self.saliency.steps = t;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.models.is_empty() {
            return bad("no models configured".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for model in &self.models {
            match model {
                ModelEntry::Onnx { config } => {
                    if !config.is_file() {
                        return bad(format!("model config {} does not exist", config.display()));
                    }
                }
                ModelEntry::Remote { name, .. } | ModelEntry::Synthetic { name, .. } => {
                    if !names.insert(name.clone()) {
                        return bad(format!("duplicate model name `{name}`"));
                    }
                    if !valid_name(name) {
                        return bad(format!("model name `{name}` must be non-empty and path-safe"));
                    }
                }
            }
        }
        match &self.dataset {
            DatasetConfig::Images(paths) => {
                if paths.is_empty() {
                    return bad("dataset has no images".into());
                }
                if let Some(p) = paths.iter().find(|p| !p.is_file()) {
                    return bad(format!("image {} does not exist", p.display()));
                }
            }
            DatasetConfig::Dir(dir) => {
                if !dir.is_dir() {
                    return bad(format!("dataset directory {} does not exist", dir.display()));
                }
            }
            DatasetConfig::Synthetic(s) => {
                if s.count == 0 || !matches!(s.channels, 1 | 3) {
                    return bad("synthetic dataset needs count >= 1 and 1 or 3 channels".into());
                }
                if s.blank_max > self.grid.rows * self.grid.cols {
                    return bad("blank_max exceeds the number of patches".into());
                }
            }
        }
        if self.input_size == 0 {
            return bad("input_size must be positive".into());
        }
        if self.grid.rows == 0 || self.grid.cols == 0 || self.grid.rows * self.grid.cols > 64 {
            return bad(format!("grid {}x{} must have between 1 and 64 patches", self.grid.rows, self.grid.cols));
        }
        if self.grid.rows > self.input_size || self.grid.cols > self.input_size {
            return bad("grid is finer than the image".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        if self.saliency.steps == 0 {
            return bad("saliency steps must be at least 1".into());
        }
        if let MapSource::Randomized(r) = &self.saliency.maps {
            r.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.beam.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.count.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.baseline.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }
}

pub fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}
