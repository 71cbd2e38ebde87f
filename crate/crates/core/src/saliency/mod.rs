//! Insertion and deletion metrics for attribution maps.
//!
//! A map ranks pixels. The insertion curve starts from the baseline and
//! reveals the top `t/T` of the pixels at step `t`; the deletion curve starts
//! from the image and hides them. The metric is the trapezoid area under the
//! curve, `(1/2T) Σ (c_t + c_{t+1})`.
//!
//! Scores differ in scale between classifiers, so before comparing models a
//! score `s` is mapped to `(s - b) / (t - b)`, where `t` is the model's mean
//! top-1 confidence on the dataset and `b` its mean confidence on the fully
//! baselined images.

mod fmap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use fmap::{decode as decode_attribution, encode as encode_attribution, load_attribution, save_attribution};

use crate::error::{Error, Result};
use crate::imaging::{make_grid, Direction, PixelRanking, Upsampling};
use crate::oracle::{ClassLabel, Probe, Scorer, Subject};

pub const DEFAULT_STEPS: usize = 100;

/// Per-cell saliency in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
    source: String,
}

impl AttributionMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>, source: impl Into<String>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::MalformedAttribution(format!("zero size {height}x{width}")));
        }
        if values.len() != height * width {
            return Err(Error::MalformedAttribution(format!(
                "{} values for {height}x{width}",
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::AttributionRange {
                index,
                value: values[index],
            });
        }
        Ok(Self {
            height,
            width,
            values,
            source: source.into(),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    /// Digest of shape and values (not the source label).
    pub fn digest(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.height as u64).to_le_bytes());
        h.update((self.width as u64).to_le_bytes());
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub direction: Direction,
    pub steps: usize,
    /// `steps + 1` confidences; entry `t` is the score after `t` steps.
    pub confidences: Vec<f64>,
}

impl PerturbationCurve {
    pub fn new(direction: Direction, confidences: Vec<f64>) -> Result<Self> {
        if confidences.len() < 2 {
            return Err(Error::InvalidConfig("a curve needs at least two points".into()));
        }
        if confidences.iter().any(|c| !c.is_finite() || *c < 0.0 || *c > 1.0) {
            return Err(Error::InvalidConfig("curve confidences must lie in [0, 1]".into()));
        }
        Ok(Self {
            direction,
            steps: confidences.len() - 1,
            confidences,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurveOptions {
    pub steps: usize,
    pub upsampling: Upsampling,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            upsampling: Upsampling::Nearest,
        }
    }
}

fn ranking_key(map: &AttributionMap, upsampling: Upsampling) -> u64 {
    map.digest().rotate_left(1) ^ upsampling as u64
}

pub fn perturbation_curve(
    scorer: &Scorer<'_>,
    subject: &Subject,
    map: &AttributionMap,
    class: ClassLabel,
    direction: Direction,
    options: &CurveOptions,
) -> Result<PerturbationCurve> {
    if options.steps == 0 {
        return Err(Error::InvalidConfig("perturbation curve needs at least one step".into()));
    }
    let image = subject.image();
    let ranking = PixelRanking::new(map, image.height(), image.width(), options.upsampling);
    let key = ranking_key(map, options.upsampling);
    let probes: Vec<Probe> = (0..=options.steps)
        .map(|t| Probe::Ranked {
            map: key,
            kept: ranking.kept_for(t as f64 / options.steps as f64) as u32,
            direction,
        })
        .collect();
    let confidences = scorer.score_probes(subject, &probes, class, |probe| match probe {
        Probe::Ranked { kept, direction, .. } => {
            ranking.compose(subject.image(), subject.baseline(), *kept as usize, *direction)
        }
        Probe::Patches { .. } => unreachable!("ranked probes only"),
    })?;
    PerturbationCurve::new(direction, confidences)
}

/// Trapezoid area under a curve, normalized to the unit interval.
///
/// Summed as offsets from the first point so a flat curve returns its value
/// exactly.
pub fn auc(curve: &PerturbationCurve) -> f64 {
    let first = curve.confidences[0];
    let offsets: f64 = curve
        .confidences
        .windows(2)
        .map(|w| (w[0] + w[1]) / 2.0 - first)
        .sum();
    first + offsets / curve.steps as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCalibration {
    pub model: String,
    /// Mean top-1 confidence on full images.
    pub top1: f64,
    /// Mean confidence in that class on the fully baselined images.
    pub baseline: f64,
    pub dataset_id: String,
}

pub fn calibrate_model(scorer: &Scorer<'_>, dataset: &[Subject], dataset_id: &str) -> Result<ModelCalibration> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut top1, mut base) = (0.0, 0.0);
    for subject in dataset {
        let (class, _) = scorer.predicted_class(subject)?;
        let grid = subject.grid();
        let scores = scorer.score_subsets(subject, &[grid.full(), grid.empty()], class)?;
        top1 += scores[0];
        base += scores[1];
    }
    let n = dataset.len() as f64;
    Ok(ModelCalibration {
        model: scorer.oracle().name().to_string(),
        top1: top1 / n,
        baseline: base / n,
        dataset_id: dataset_id.to_string(),
    })
}

/// `(s - b) / (t - b)`; may exceed 1.
pub fn normalize_score(score: f64, calibration: &ModelCalibration) -> Result<f64> {
    let span = calibration.top1 - calibration.baseline;
    if !(span > 0.0) {
        return Err(Error::DegenerateCalibration {
            model: calibration.model.clone(),
            top1: calibration.top1,
            baseline: calibration.baseline,
        });
    }
    Ok((score - calibration.baseline) / span)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomizedMapConfig {
    pub n_masks: usize,
    pub cell_rows: usize,
    pub cell_cols: usize,
    pub keep_prob: f64,
    pub seed: u64,
}

impl Default for RandomizedMapConfig {
    fn default() -> Self {
        Self {
            n_masks: 2000,
            cell_rows: 7,
            cell_cols: 7,
            keep_prob: 0.5,
            seed: 0,
        }
    }
}

impl RandomizedMapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_prob > 0.0 && self.keep_prob < 1.0) {
            return Err(Error::InvalidConfig(format!("keep_prob must be in (0, 1), got {}", self.keep_prob)));
        }
        if self.n_masks == 0 {
            return Err(Error::InvalidConfig("need at least one mask".into()));
        }
        Ok(())
    }
}

/// Gradient-free saliency from random cell masks.
///
/// Each cell's raw score is the mean confidence over the masks that kept it
/// (the self-normalized form of `Σ score·mask / (n·keep_prob)`); cells no mask
/// kept get the overall mean. Raw scores are min-max scaled to `[0, 1]`; a
/// constant raw map becomes all 0.5. The map has one value per cell.
pub fn generate_randomized_map(
    scorer: &Scorer<'_>,
    subject: &Subject,
    class: ClassLabel,
    config: &RandomizedMapConfig,
) -> Result<AttributionMap> {
    config.validate()?;
    let image = subject.image();
    let cells = make_grid(image.height(), image.width(), config.cell_rows, config.cell_cols)?;
    let n = cells.patch_count();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let masks: Vec<_> = (0..config.n_masks)
        .map(|_| {
            let mut set = cells.empty();
            for i in 0..n {
                if rng.random::<f64>() < config.keep_prob {
                    set = set.with(i);
                }
            }
            set
        })
        .collect();
    let scores = scorer.score_subsets_on(subject, &cells, &masks, class)?;

    // Offsets from the first score keep a constant oracle's map exactly flat.
    let reference = scores[0];
    let mut total = vec![0.0f64; n];
    let mut kept = vec![0usize; n];
    for (mask, score) in masks.iter().zip(&scores) {
        for i in mask.iter() {
            total[i] += score - reference;
            kept[i] += 1;
        }
    }
    let overall = scores.iter().map(|s| s - reference).sum::<f64>() / scores.len() as f64;
    let raw: Vec<f64> = (0..n)
        .map(|i| if kept[i] == 0 { overall } else { total[i] / kept[i] as f64 })
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = if hi > lo {
        raw.iter().map(|r| ((r - lo) / (hi - lo)) as f32).collect()
    } else {
        vec![0.5; n]
    };
    AttributionMap::new(
        config.cell_rows,
        config.cell_cols,
        values,
        format!("{}:randomized", scorer.oracle().name()),
    )
}
