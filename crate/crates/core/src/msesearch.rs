//! Minimal sufficient explanations: the smallest patch sets whose masked
//! image keeps at least `p_h` of the full-image confidence while no proper
//! subset does.
//!
//! [`find_mses`] searches level by level (set size) with a fixed-width beam;
//! [`brute_force_mses`] enumerates every subset of small grids and serves as
//! the reference answer.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::PatchSet;
use crate::oracle::{ClassLabel, Scorer, Subject};

/// Largest set on which exhaustive minimality may be checked.
pub const EXHAUSTIVE_LIMIT: usize = 20;

/// Largest grid [`brute_force_mses`] accepts.
pub const BRUTE_FORCE_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Minimality {
    /// Only the subsets with one patch removed must fall below threshold.
    #[default]
    ImmediateSubsets,
    /// Every non-empty proper subset must fall below threshold.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamConfig {
    pub p_h: f64,
    pub beam_width: usize,
    /// Largest set size explored; `None` means the whole grid.
    pub max_patch_count: Option<usize>,
    /// Stop once this many explanations are recorded.
    pub max_mses: Option<usize>,
    pub minimality: Minimality,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            p_h: 0.9,
            beam_width: 5,
            max_patch_count: None,
            max_mses: None,
            minimality: Minimality::ImmediateSubsets,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_h > 0.0 && self.p_h <= 1.0) {
            return Err(Error::InvalidConfig(format!("p_h must be in (0, 1], got {}", self.p_h)));
        }
        if self.beam_width == 0 {
            return Err(Error::InvalidConfig("beam width must be at least 1".into()));
        }
        Ok(())
    }
}

/// The class being explained and the full-image confidence in it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub class: ClassLabel,
    pub full_confidence: f64,
}

impl Target {
    /// Predicted class of the full image; its confidence is re-read through the
    /// scorer so that ratios use the same number the masked scores are compared to.
    pub fn predicted(scorer: &Scorer<'_>, subject: &Subject) -> Result<Self> {
        let (class, _) = scorer.predicted_class(subject)?;
        let full_confidence = scorer.score_subset(subject, subject.grid().full(), class)?;
        Ok(Self { class, full_confidence })
    }

    pub fn threshold(&self, p_h: f64) -> f64 {
        p_h * self.full_confidence
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseRecord {
    pub image_id: String,
    pub class: ClassLabel,
    pub patches: PatchSet,
    pub confidence: f64,
    pub full_confidence: f64,
    pub minimality: Minimality,
}

impl MseRecord {
    pub fn size(&self) -> usize {
        self.patches.len()
    }

    pub fn ratio(&self) -> f64 {
        self.confidence / self.full_confidence
    }
}

/// Every non-empty proper subset of `set`, in descending bitmask order.
fn proper_subsets(set: PatchSet) -> impl Iterator<Item = PatchSet> {
    let mask = set.bits();
    let cap = set.capacity();
    let mut sub = mask;
    std::iter::from_fn(move || {
        sub = sub.wrapping_sub(1) & mask;
        (sub != 0).then(|| PatchSet::from_bits(sub, cap).expect("submask of a valid set"))
    })
}

pub fn check_minimality(
    scorer: &Scorer<'_>,
    subject: &Subject,
    target: Target,
    patches: PatchSet,
    p_h: f64,
    mode: Minimality,
) -> Result<bool> {
    if patches.is_empty() {
        return Err(Error::InvalidConfig("minimality of the empty set".into()));
    }
    let subsets: Vec<PatchSet> = match mode {
        Minimality::ImmediateSubsets => patches.immediate_subsets().filter(|s| !s.is_empty()).collect(),
        Minimality::Exhaustive => {
            if patches.len() > EXHAUSTIVE_LIMIT {
                return Err(Error::ExhaustiveTooLarge(patches.len()));
            }
            proper_subsets(patches).collect()
        }
    };
    let threshold = target.threshold(p_h);
    let scores = scorer.score_subsets(subject, &subsets, target.class)?;
    Ok(scores.iter().all(|s| *s < threshold))
}

fn rank(scored: &mut [(PatchSet, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.bits().cmp(&b.0.bits())));
}

/// Beam search for minimal sufficient explanations of the subject's predicted class.
///
/// Level `k` holds up to `beam_width` insufficient sets of size `k`. Each level
/// grows every beam member by one absent patch; sufficient growths are checked
/// for minimality and recorded, the rest compete for the next beam. Ties rank
/// by ascending bitmask. Output is sorted by (size, bitmask).
pub fn find_mses(scorer: &Scorer<'_>, subject: &Subject, config: &BeamConfig) -> Result<Vec<MseRecord>> {
    config.validate()?;
    let target = Target::predicted(scorer, subject)?;
    find_mses_for(scorer, subject, target, config)
}

/// [`find_mses`] for an already known target.
pub fn find_mses_for(
    scorer: &Scorer<'_>,
    subject: &Subject,
    target: Target,
    config: &BeamConfig,
) -> Result<Vec<MseRecord>> {
    config.validate()?;
    let grid = subject.grid();
    let n = grid.patch_count();
    let max_level = config.max_patch_count.unwrap_or(n).min(n);
    let max_mses = config.max_mses.unwrap_or(usize::MAX);
    let threshold = target.threshold(config.p_h);

    let mut records = Vec::new();
    let mut beam = vec![grid.empty()];
    'levels: for _level in 1..=max_level {
        let mut candidates: Vec<PatchSet> = beam
            .iter()
            .flat_map(|set| set.absent().map(move |i| set.with(i)))
            .collect();
        candidates.sort_unstable_by_key(|s| s.bits());
        candidates.dedup();
        if candidates.is_empty() {
            break;
        }
        let scores = scorer.score_subsets(subject, &candidates, target.class)?;
        let mut scored: Vec<(PatchSet, f64)> = candidates.into_iter().zip(scores).collect();
        rank(&mut scored);

        let mut next = Vec::with_capacity(config.beam_width);
        for (set, confidence) in scored {
            if confidence >= threshold {
                if check_minimality(scorer, subject, target, set, config.p_h, config.minimality)? {
                    records.push(MseRecord {
                        image_id: subject.id().to_string(),
                        class: target.class,
                        patches: set,
                        confidence,
                        full_confidence: target.full_confidence,
                        minimality: config.minimality,
                    });
                    if records.len() >= max_mses {
                        break 'levels;
                    }
                }
            } else if next.len() < config.beam_width {
                next.push(set);
            }
        }
        if next.is_empty() {
            break;
        }
        beam = next;
    }
    records.sort_by_key(|r| (r.patches.len(), r.patches.bits()));
    Ok(records)
}

/// Enumerates every non-empty subset and returns those that are sufficient
/// with no sufficient non-empty proper subset.
pub fn brute_force_mses(scorer: &Scorer<'_>, subject: &Subject, p_h: f64) -> Result<Vec<MseRecord>> {
    let n = subject.grid().patch_count();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::BruteForceTooLarge {
            patches: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let target = Target::predicted(scorer, subject)?;
    let threshold = target.threshold(p_h);
    let all: Vec<PatchSet> = (0..1u64 << n).map(|b| PatchSet::from_bits(b, n).expect("in range")).collect();
    let scores = scorer.score_subsets(subject, &all[1..], target.class)?;
    let score = |bits: u64| scores[bits as usize - 1];

    // below[s]: some non-empty proper subset of s is sufficient
    let size = 1usize << n;
    let mut below = vec![false; size];
    let mut records = Vec::new();
    for bits in 1..size as u64 {
        let mut hit = false;
        let mut rest = bits;
        while rest != 0 {
            let low = rest & rest.wrapping_neg();
            rest ^= low;
            let child = bits ^ low;
            if child != 0 && (score(child) >= threshold || below[child as usize]) {
                hit = true;
                break;
            }
        }
        below[bits as usize] = hit;
        if !hit && score(bits) >= threshold {
            records.push(MseRecord {
                image_id: subject.id().to_string(),
                class: target.class,
                patches: all[bits as usize],
                confidence: score(bits),
                full_confidence: target.full_confidence,
                minimality: Minimality::Exhaustive,
            });
        }
    }
    records.sort_by_key(|r| (r.patches.len(), r.patches.bits()));
    Ok(records)
}

#[derive(Serialize, Deserialize)]
struct MseLine {
    image_id: String,
    class: ClassLabel,
    patches: String,
    patch_count: usize,
    confidence: f64,
    full_confidence: f64,
    minimality: Minimality,
}

impl From<&MseRecord> for MseLine {
    fn from(r: &MseRecord) -> Self {
        Self {
            image_id: r.image_id.clone(),
            class: r.class,
            patches: r.patches.to_hex(),
            patch_count: r.patches.capacity(),
            confidence: r.confidence,
            full_confidence: r.full_confidence,
            minimality: r.minimality,
        }
    }
}

impl TryFrom<MseLine> for MseRecord {
    type Error = Error;

    fn try_from(line: MseLine) -> Result<Self> {
        let patches = PatchSet::from_hex(&line.patches, line.patch_count)?;
        if patches.is_empty() {
            return Err(Error::InvalidConfig("empty explanation".into()));
        }
        Ok(Self {
            image_id: line.image_id,
            class: line.class,
            patches,
            confidence: line.confidence,
            full_confidence: line.full_confidence,
            minimality: line.minimality,
        })
    }
}

pub fn write_mses_jsonl(mut out: impl Write, records: &[MseRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, &MseLine::from(r))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads records written by [`write_mses_jsonl`]; errors name the offending line.
pub fn read_mses_jsonl(path: &Path) -> Result<Vec<MseRecord>> {
    let file = std::fs::File::open(path)?;
    let mut records = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let parsed: MseLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        records.push(MseRecord::try_from(parsed).map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(records)
}
