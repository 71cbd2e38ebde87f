use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xprobe::imaging::{load_image, make_grid, ImageTensor};

use crate::config::{DatasetConfig, RunConfig, SyntheticDataset};
use crate::error::CliError;

pub struct Dataset {
    /// `(id, image)` in a fixed order.
    pub images: Vec<(String, ImageTensor)>,
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!("no PNG or JPEG images in {}", dir.display())));
    }
    Ok(paths)
}

pub fn load(config: &RunConfig) -> Result<Dataset, CliError> {
    let paths = match &config.dataset {
        DatasetConfig::Images(paths) => paths.clone(),
        DatasetConfig::Dir(dir) => list_dir(dir)?,
        DatasetConfig::Synthetic(s) => {
            return Ok(Dataset {
                images: synthetic_dataset(s, config)?,
            })
        }
    };
    let mut seen = BTreeSet::new();
    let mut images = Vec::with_capacity(paths.len());
    for path in paths {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !crate::config::valid_name(&id) || !seen.insert(id.clone()) {
            return Err(CliError::Config(format!(
                "image {} needs a unique, path-safe file name",
                path.display()
            )));
        }
        images.push((id, load_image(&path, config.input_size)?));
    }
    Ok(Dataset { images })
}

/// Random pixels in `[0.2, 1]` with up to `blank_max` grid patches zeroed,
/// seeded by the run seed and the image index.
pub fn synthetic_dataset(spec: &SyntheticDataset, config: &RunConfig) -> Result<Vec<(String, ImageTensor)>, CliError> {
    let size = config.input_size;
    let grid = make_grid(size, size, config.grid.rows, config.grid.cols)?;
    let width = spec.count.to_string().len().max(4);
    (0..spec.count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ i as u64);
            let mut data: Vec<f32> = (0..spec.channels * size * size)
                .map(|_| rng.random_range(0.2f32..=1.0))
                .collect();
            let blanks = rng.random_range(0..=spec.blank_max);
            for patch in sample(&mut rng, grid.patch_count(), blanks) {
                let r = grid.patch_rect(patch);
                for c in 0..spec.channels {
                    for y in r.top..r.top + r.height {
                        for x in r.left..r.left + r.width {
                            data[(c * size + y) * size + x] = 0.0;
                        }
                    }
                }
            }
            let image = ImageTensor::new(size, size, spec.channels, data)?;
            Ok((format!("syn{i:0width$}"), image))
        })
        .collect()
}

/// Image ids without decoding any pixels.
pub fn image_ids(config: &RunConfig) -> Result<Vec<String>, CliError> {
    let paths = match &config.dataset {
        DatasetConfig::Images(paths) => paths.clone(),
        DatasetConfig::Dir(dir) => list_dir(dir)?,
        DatasetConfig::Synthetic(s) => {
            let width = s.count.to_string().len().max(4);
            return Ok((0..s.count).map(|i| format!("syn{i:0width$}")).collect());
        }
    };
    Ok(paths
        .iter()
        .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
        .collect())
}
