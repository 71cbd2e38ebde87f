//! Synthetic classifiers with known decision rules.
//!
//! They read an image as a set of "present" patches and score that set:
//! conjunctive (needs one fixed combination), disjunctive (any of several
//! combinations), or additive (each patch adds evidence). A patch is present
//! when more than `occupancy_threshold` of its pixels differ from the baseline
//! the image was composed against.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{ClassLabel, Classifier};
use crate::error::{Error, Result};
use crate::imaging::{GridSpec, ImageTensor, PatchSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Squash {
    Clamp,
    Sigmoid,
}

impl Squash {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Squash::Clamp => x.clamp(0.0, 1.0),
            Squash::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SyntheticKind {
    Conjunctive { required: Vec<usize>, hi: f64, lo: f64 },
    Disjunctive { groups: Vec<Vec<usize>>, hi: f64, lo: f64 },
    Additive { weights: Vec<f64>, squash: Squash },
}

fn default_occupancy() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracleSpec {
    #[serde(flatten)]
    pub kind: SyntheticKind,
    #[serde(default = "default_occupancy")]
    pub occupancy_threshold: f64,
}

impl SyntheticOracleSpec {
    pub fn new(kind: SyntheticKind) -> Self {
        Self {
            kind,
            occupancy_threshold: default_occupancy(),
        }
    }
}

#[derive(Debug, Clone)]
enum Rule {
    Conjunctive { required: PatchSet, hi: f64, lo: f64 },
    Disjunctive { groups: Vec<PatchSet>, hi: f64, lo: f64 },
    Additive { weights: Vec<f64>, squash: Squash },
}

impl Rule {
    fn score(&self, present: PatchSet) -> f64 {
        match self {
            Rule::Conjunctive { required, hi, lo } => {
                if required.is_subset_of(&present) {
                    *hi
                } else {
                    *lo
                }
            }
            Rule::Disjunctive { groups, hi, lo } => {
                if groups.iter().any(|g| g.is_subset_of(&present)) {
                    *hi
                } else {
                    *lo
                }
            }
            Rule::Additive { weights, squash } => squash.apply(present.iter().map(|i| weights[i]).sum()),
        }
    }
}

/// A registered (image, baseline) pair.
#[derive(Debug)]
struct Reference {
    image_digest: u64,
    baseline_digest: u64,
    baseline: ImageTensor,
}

#[derive(Debug, Default)]
struct Registry {
    references: Vec<Reference>,
    /// (patch index, patch content hash) -> references whose image has that
    /// patch and differs from its baseline there.
    image_index: HashMap<(usize, u64), Vec<usize>>,
    /// Same, for baseline patches.
    baseline_index: HashMap<(usize, u64), Vec<usize>>,
}

#[derive(Debug)]
pub struct SyntheticOracle {
    name: String,
    grid: GridSpec,
    rule: Rule,
    occupancy_threshold: f64,
    registry: RwLock<Registry>,
}

fn check_hi_lo(hi: f64, lo: f64) -> Result<()> {
    let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
    if !(unit(hi) && unit(lo) && hi > lo) {
        return Err(Error::InvalidConfig(format!("need 0 <= lo < hi <= 1, got lo={lo} hi={hi}")));
    }
    Ok(())
}

pub fn make_synthetic(name: impl Into<String>, spec: &SyntheticOracleSpec, grid: &GridSpec) -> Result<SyntheticOracle> {
    let n = grid.patch_count();
    let set = |indices: &[usize]| -> Result<PatchSet> {
        if indices.is_empty() {
            return Err(Error::InvalidConfig("empty patch group".into()));
        }
        PatchSet::from_indices(indices.iter().copied(), n)
    };
    let rule = match &spec.kind {
        SyntheticKind::Conjunctive { required, hi, lo } => {
            check_hi_lo(*hi, *lo)?;
            Rule::Conjunctive {
                required: set(required)?,
                hi: *hi,
                lo: *lo,
            }
        }
        SyntheticKind::Disjunctive { groups, hi, lo } => {
            check_hi_lo(*hi, *lo)?;
            if groups.is_empty() {
                return Err(Error::InvalidConfig("disjunctive oracle without groups".into()));
            }
            Rule::Disjunctive {
                groups: groups.iter().map(|g| set(g)).collect::<Result<_>>()?,
                hi: *hi,
                lo: *lo,
            }
        }
        SyntheticKind::Additive { weights, squash } => {
            if weights.len() != n {
                return Err(Error::InvalidConfig(format!("{} weights for a {n}-patch grid", weights.len())));
            }
            if weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::InvalidConfig("non-finite additive weight".into()));
            }
            Rule::Additive {
                weights: weights.clone(),
                squash: *squash,
            }
        }
    };
    let t = spec.occupancy_threshold;
    if !(0.0..1.0).contains(&t) {
        return Err(Error::InvalidConfig(format!("occupancy threshold {t} outside [0, 1)")));
    }
    Ok(SyntheticOracle {
        name: name.into(),
        grid: *grid,
        rule,
        occupancy_threshold: t,
        registry: RwLock::new(Registry::default()),
    })
}

fn patch_hash(image: &ImageTensor, grid: &GridSpec, index: usize) -> u64 {
    let rect = grid.patch_rect(index);
    let mut h = DefaultHasher::new();
    for c in 0..image.channels() {
        for y in rect.top..rect.top + rect.height {
            for x in rect.left..rect.left + rect.width {
                image.get(c, y, x).to_bits().hash(&mut h);
            }
        }
    }
    h.finish()
}

impl SyntheticOracle {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Patches of `image` that count as present.
    pub fn occupancy(&self, image: &ImageTensor) -> Result<PatchSet> {
        if !self.grid.matches(image) {
            return Err(Error::oracle(
                &self.name,
                format!("expects {}x{} images", self.grid.image_height(), self.grid.image_width()),
            ));
        }
        let registry = self.registry.read().expect("registry poisoned");
        let baseline = self.reference_for(&registry, image);
        let width = image.width();
        let mut present = self.grid.empty();
        for index in 0..self.grid.patch_count() {
            let rect = self.grid.patch_rect(index);
            let mut changed = 0usize;
            for y in rect.top..rect.top + rect.height {
                for x in rect.left..rect.left + rect.width {
                    let p = y * width + x;
                    let differs = match baseline {
                        Some(b) => image.pixel_differs(b, p),
                        None => (0..image.channels()).any(|c| image.get(c, y, x) != 0.0),
                    };
                    changed += differs as usize;
                }
            }
            if changed as f64 > self.occupancy_threshold * (rect.height * rect.width) as f64 {
                present = present.with(index);
            }
        }
        Ok(present)
    }

    /// Picks the registered baseline that `image` was most plausibly composed
    /// against. Candidates are references sharing an exact image patch with
    /// it, else an exact baseline patch, else all of them; the one with the
    /// fewest differing pixels wins.
    fn reference_for<'r>(&self, registry: &'r Registry, image: &ImageTensor) -> Option<&'r ImageTensor> {
        if registry.references.is_empty() {
            return None;
        }
        let hashes: Vec<(usize, u64)> = (0..self.grid.patch_count())
            .map(|i| (i, patch_hash(image, &self.grid, i)))
            .collect();
        let matching = |index: &HashMap<(usize, u64), Vec<usize>>| {
            let mut found: Vec<usize> = hashes.iter().filter_map(|k| index.get(k)).flatten().copied().collect();
            found.sort_unstable();
            found.dedup();
            found
        };
        let mut candidates = matching(&registry.image_index);
        if candidates.is_empty() {
            candidates = matching(&registry.baseline_index);
        }
        if candidates.is_empty() {
            candidates = (0..registry.references.len()).collect();
        }
        let differing = |r: &Reference| {
            if !r.baseline.same_shape(image) {
                return usize::MAX;
            }
            (0..image.pixel_count()).filter(|p| image.pixel_differs(&r.baseline, *p)).count()
        };
        candidates
            .into_iter()
            .map(|i| &registry.references[i])
            .min_by_key(|r| differing(r))
            .map(|r| &r.baseline)
    }

    fn score_image(&self, image: &ImageTensor) -> Result<f64> {
        Ok(self.rule.score(self.occupancy(image)?))
    }
}

impl Classifier for SyntheticOracle {
    fn name(&self) -> &str {
        &self.name
    }

    /// Class 0 carries the rule's score; class 1 always scores 0.
    fn class_count(&self) -> usize {
        2
    }

    fn score_batch(&self, images: &[ImageTensor], class: ClassLabel) -> Result<Vec<f64>> {
        images
            .iter()
            .map(|img| match class.0 {
                0 => self.score_image(img),
                1 => Ok(0.0),
                other => Err(Error::oracle(&self.name, format!("no class {other}"))),
            })
            .collect()
    }

    fn class_scores(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        Ok(vec![self.score_image(image)?, 0.0])
    }

    fn observe_baseline(&self, image: &ImageTensor, baseline: &ImageTensor) {
        if !self.grid.matches(image) || !image.same_shape(baseline) {
            return;
        }
        let (image_digest, baseline_digest) = (image.content_hash(), baseline.content_hash());
        let mut registry = self.registry.write().expect("registry poisoned");
        if registry
            .references
            .iter()
            .any(|r| r.image_digest == image_digest && r.baseline_digest == baseline_digest)
        {
            return;
        }
        let id = registry.references.len();
        for i in 0..self.grid.patch_count() {
            let (from_image, from_baseline) = (patch_hash(image, &self.grid, i), patch_hash(baseline, &self.grid, i));
            if from_image != from_baseline {
                registry.image_index.entry((i, from_image)).or_default().push(id);
            }
            registry.baseline_index.entry((i, from_baseline)).or_default().push(id);
        }
        registry.references.push(Reference {
            image_digest,
            baseline_digest,
            baseline: baseline.clone(),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{compose_masked, make_baseline, make_grid, BaselineStyle};

    fn noisy(h: usize, w: usize, seed: u32) -> ImageTensor {
        let mut state = seed.wrapping_mul(2654435761).wrapping_add(1);
        let data = (0..h * w * 3)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 17;
                state ^= state << 5;
                0.1 + 0.9 * (state % 1000) as f32 / 1000.0
            })
            .collect();
        ImageTensor::new(h, w, 3, data).unwrap()
    }

    fn conj(grid: &GridSpec) -> SyntheticOracle {
        let spec = SyntheticOracleSpec::new(SyntheticKind::Conjunctive {
            required: vec![0, 4, 8],
            hi: 1.0,
            lo: 0.05,
        });
        make_synthetic("conj", &spec, grid).unwrap()
    }

    #[test]
    fn conjunctive_required_present() {
        let grid = make_grid(12, 12, 3, 3).unwrap();
        let oracle = conj(&grid);
        let img = noisy(12, 12, 1);
        let grey = make_baseline(&img, BaselineStyle::Grey).unwrap();
        let set = PatchSet::from_indices([0, 4, 8], 9).unwrap();
        let shown = compose_masked(&img, &grey, &grid, set).unwrap();
        assert_eq!(oracle.score_batch(&[shown], ClassLabel(0)).unwrap(), vec![1.0]);
        let partial = compose_masked(&img, &grey, &grid, set.without(4)).unwrap();
        assert_eq!(oracle.score_batch(&[partial], ClassLabel(0)).unwrap(), vec![0.05]);
    }

    #[test]
    fn disjunctive_any_group() {
        let grid = make_grid(12, 12, 3, 3).unwrap();
        let spec = SyntheticOracleSpec::new(SyntheticKind::Disjunctive {
            groups: vec![vec![0, 1], vec![7, 8]],
            hi: 0.95,
            lo: 0.1,
        });
        let oracle = make_synthetic("disj", &spec, &grid).unwrap();
        let img = noisy(12, 12, 2);
        let grey = make_baseline(&img, BaselineStyle::Grey).unwrap();
        let shown = compose_masked(&img, &grey, &grid, PatchSet::from_indices([7, 8], 9).unwrap()).unwrap();
        assert_eq!(oracle.score_batch(&[shown], ClassLabel(0)).unwrap(), vec![0.95]);
        let none = compose_masked(&img, &grey, &grid, PatchSet::from_indices([1, 7], 9).unwrap()).unwrap();
        assert_eq!(oracle.score_batch(&[none], ClassLabel(0)).unwrap(), vec![0.1]);
    }

    #[test]
    fn additive_full_image() {
        let grid = make_grid(9, 9, 3, 3).unwrap();
        let spec = SyntheticOracleSpec::new(SyntheticKind::Additive {
            weights: vec![1.0 / 9.0; 9],
            squash: Squash::Clamp,
        });
        let oracle = make_synthetic("add", &spec, &grid).unwrap();
        let img = noisy(9, 9, 3);
        let score = oracle.score_batch(&[img], ClassLabel(0)).unwrap()[0];
        assert!((score - 1.0).abs() < 1e-12);
        assert_eq!(Squash::Sigmoid.apply(0.0), 0.5);
    }

    #[test]
    fn blur_and_grey_agree_once_registered() {
        let grid = make_grid(24, 24, 3, 3).unwrap();
        let oracle = conj(&grid);
        let img = noisy(24, 24, 4);
        let other = noisy(24, 24, 5);
        let blur = make_baseline(&img, BaselineStyle::Blur { sigma: 3.0 }).unwrap();
        let grey = make_baseline(&img, BaselineStyle::Grey).unwrap();
        oracle.observe_baseline(&img, &grey);
        oracle.observe_baseline(&img, &blur);
        oracle.observe_baseline(&other, &make_baseline(&other, BaselineStyle::Grey).unwrap());
        for bits in 0..512u64 {
            let set = PatchSet::from_bits(bits, 9).unwrap();
            let a = compose_masked(&img, &grey, &grid, set).unwrap();
            let b = compose_masked(&img, &blur, &grid, set).unwrap();
            assert_eq!(oracle.occupancy(&a).unwrap(), set, "grey {bits:#x}");
            assert_eq!(oracle.occupancy(&b).unwrap(), set, "blur {bits:#x}");
        }
    }

    #[test]
    fn invalid_specs() {
        let grid = make_grid(9, 9, 3, 3).unwrap();
        let bad = [
            SyntheticKind::Conjunctive { required: vec![0], hi: 0.1, lo: 0.5 },
            SyntheticKind::Conjunctive { required: vec![9], hi: 1.0, lo: 0.0 },
            SyntheticKind::Disjunctive { groups: vec![], hi: 1.0, lo: 0.0 },
            SyntheticKind::Additive { weights: vec![0.1; 8], squash: Squash::Clamp },
            SyntheticKind::Additive { weights: vec![f64::NAN; 9], squash: Squash::Clamp },
        ];
        for kind in bad {
            assert!(make_synthetic("x", &SyntheticOracleSpec::new(kind), &grid).is_err());
        }
    }

    #[test]
    fn spec_json_shape() {
        let spec: SyntheticOracleSpec =
            serde_json::from_str(r#"{"kind":"conjunctive","required":[0,4,8],"hi":1.0,"lo":0.05}"#).unwrap();
        assert_eq!(spec.occupancy_threshold, 0.5);
        assert!(matches!(spec.kind, SyntheticKind::Conjunctive { .. }));
    }
}
