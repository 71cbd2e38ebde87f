//! Black-box classifiers and memoized scoring of masked images.
//!
//! A [`Classifier`] only has to answer "how confident are you in class `c`
//! for each of these images". Everything the search and metric code needs is
//! layered on top by a [`Scorer`], which composes masked images for a
//! [`Subject`], batches the uncached ones, and remembers every answer in a
//! [`ConfidenceCache`].

mod cache;
mod remote;
mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use cache::{CacheKey, ConfidenceCache, Probe};
pub use remote::RemoteClassifier;
pub use synthetic::{make_synthetic, Squash, SyntheticKind, SyntheticOracle, SyntheticOracleSpec};

use crate::error::{Error, Result};
use crate::imaging::{compose_masked, make_baseline, BaselineStyle, GridSpec, ImageTensor, PatchSet};

pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLabel(pub u32);

impl ClassLabel {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A black-box image classifier.
///
/// Implementations must be deterministic: the same image bytes always give
/// the same confidences, bit for bit. Every confidence lies in `[0, 1]`.
pub trait Classifier: Send + Sync {
    fn name(&self) -> &str;

    fn class_count(&self) -> usize;

    /// Confidence of `class` for each image, in order.
    fn score_batch(&self, images: &[ImageTensor], class: ClassLabel) -> Result<Vec<f64>>;

    /// Confidence of every class for one image.
    fn class_scores(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        (0..self.class_count())
            .map(|c| {
                let out = self.score_batch(std::slice::from_ref(image), ClassLabel(c as u32))?;
                out.first()
                    .copied()
                    .ok_or_else(|| Error::oracle(self.name(), "empty response"))
            })
            .collect()
    }

    /// Called once per (image, baseline) pair before masked versions of it
    /// are scored. Most classifiers ignore it.
    fn observe_baseline(&self, _image: &ImageTensor, _baseline: &ImageTensor) {}
}

fn check_confidences(model: &str, values: &[f64], expected: usize) -> Result<()> {
    if values.len() != expected {
        return Err(Error::oracle(
            model,
            format!("returned {} confidences for {expected} inputs", values.len()),
        ));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
        return Err(Error::oracle(model, format!("confidence {v} outside [0, 1]")));
    }
    Ok(())
}

/// Top class and its confidence; the lowest class id wins ties.
pub fn predicted_class(oracle: &dyn Classifier, image: &ImageTensor) -> Result<(ClassLabel, f64)> {
    let scores = oracle.class_scores(image)?;
    check_confidences(oracle.name(), &scores, oracle.class_count())?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok((ClassLabel(best as u32), scores[best]))
}

/// One image prepared for masked scoring: its baseline, patch grid and digest.
#[derive(Debug, Clone)]
pub struct Subject {
    id: String,
    image: ImageTensor,
    baseline: ImageTensor,
    style: BaselineStyle,
    grid: GridSpec,
    digest: u64,
}

impl Subject {
    pub fn new(id: impl Into<String>, image: ImageTensor, grid: GridSpec, style: BaselineStyle) -> Result<Self> {
        if !grid.matches(&image) {
            return Err(Error::DimensionMismatch(format!(
                "grid for {}x{} vs image {}x{}",
                grid.image_height(),
                grid.image_width(),
                image.height(),
                image.width()
            )));
        }
        let baseline = make_baseline(&image, style)?;
        let digest = image.content_hash();
        Ok(Self {
            id: id.into(),
            image,
            baseline,
            style,
            grid,
            digest,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn image(&self) -> &ImageTensor {
        &self.image
    }

    pub fn baseline(&self) -> &ImageTensor {
        &self.baseline
    }

    pub fn style(&self) -> BaselineStyle {
        self.style
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn masked(&self, patches: PatchSet) -> Result<ImageTensor> {
        compose_masked(&self.image, &self.baseline, &self.grid, patches)
    }

    fn masked_on(&self, grid: &GridSpec, patches: PatchSet) -> Result<ImageTensor> {
        compose_masked(&self.image, &self.baseline, grid, patches)
    }

    pub(crate) fn key(&self, probe: Probe, class: ClassLabel) -> CacheKey {
        CacheKey {
            image: self.digest,
            baseline: self.style.key(),
            probe,
            class: class.0,
        }
    }
}

/// Memoizing, batching front end to a [`Classifier`].
pub struct Scorer<'a> {
    oracle: &'a dyn Classifier,
    cache: &'a ConfidenceCache,
    batch_size: usize,
    observed: Mutex<HashSet<(u64, u64)>>,
    evaluations: AtomicU64,
}

impl fmt::Debug for Scorer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scorer")
            .field("oracle", &self.oracle.name())
            .field("batch_size", &self.batch_size)
            .field("evaluations", &self.evaluations())
            .finish()
    }
}

impl<'a> Scorer<'a> {
    pub fn new(oracle: &'a dyn Classifier, cache: &'a ConfidenceCache) -> Self {
        Self {
            oracle,
            cache,
            batch_size: DEFAULT_BATCH_SIZE,
            observed: Mutex::new(HashSet::new()),
            evaluations: AtomicU64::new(0),
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn oracle(&self) -> &dyn Classifier {
        self.oracle
    }

    pub fn cache(&self) -> &ConfidenceCache {
        self.cache
    }

    /// Number of images this scorer has sent to the classifier.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn predicted_class(&self, subject: &Subject) -> Result<(ClassLabel, f64)> {
        predicted_class(self.oracle, subject.image())
    }

    fn observe(&self, subject: &Subject) {
        let key = (subject.digest, subject.style.key());
        let fresh = self.observed.lock().expect("observed set poisoned").insert(key);
        if fresh {
            self.oracle.observe_baseline(subject.image(), subject.baseline());
        }
    }

    pub fn score_subset(&self, subject: &Subject, patches: PatchSet, class: ClassLabel) -> Result<f64> {
        Ok(self.score_subsets(subject, &[patches], class)?[0])
    }

    /// Scores patch subsets over the subject's own grid.
    pub fn score_subsets(&self, subject: &Subject, subsets: &[PatchSet], class: ClassLabel) -> Result<Vec<f64>> {
        self.score_subsets_on(subject, subject.grid(), subsets, class)
    }

    /// Scores patch subsets over an arbitrary grid laid on the subject image.
    pub fn score_subsets_on(
        &self,
        subject: &Subject,
        grid: &GridSpec,
        subsets: &[PatchSet],
        class: ClassLabel,
    ) -> Result<Vec<f64>> {
        let probes: Vec<Probe> = subsets.iter().map(|s| Probe::patches(grid, *s)).collect();
        self.score_probes(subject, &probes, class, |probe| match probe {
            Probe::Patches { bits, .. } => {
                let set = PatchSet::from_bits(*bits, grid.patch_count())?;
                subject.masked_on(grid, set)
            }
            Probe::Ranked { .. } => unreachable!("patch probes only"),
        })
    }

    /// Looks every probe up in the cache and renders and scores the misses in
    /// batches. Duplicate probes are scored once.
    pub(crate) fn score_probes(
        &self,
        subject: &Subject,
        probes: &[Probe],
        class: ClassLabel,
        render: impl Fn(&Probe) -> Result<ImageTensor>,
    ) -> Result<Vec<f64>> {
        self.observe(subject);
        let mut out = vec![f64::NAN; probes.len()];
        let mut pending: Vec<(CacheKey, Vec<usize>)> = Vec::new();
        let mut slot_of = std::collections::HashMap::new();
        for (i, probe) in probes.iter().enumerate() {
            let key = subject.key(*probe, class);
            if let Some(v) = self.cache.get(&key) {
                out[i] = v;
            } else {
                let slot = *slot_of.entry(key).or_insert_with(|| {
                    pending.push((key, Vec::new()));
                    pending.len() - 1
                });
                pending[slot].1.push(i);
            }
        }
        for chunk in pending.chunks(self.batch_size) {
            let images = chunk
                .iter()
                .map(|(key, _)| render(&key.probe))
                .collect::<Result<Vec<_>>>()?;
            let scores = self.oracle.score_batch(&images, class)?;
            check_confidences(self.oracle.name(), &scores, images.len())?;
            self.evaluations.fetch_add(images.len() as u64, Ordering::Relaxed);
            for ((key, slots), score) in chunk.iter().zip(scores) {
                let stored = self.cache.insert(*key, score);
                for &i in slots {
                    out[i] = stored;
                }
            }
        }
        Ok(out)
    }
}
