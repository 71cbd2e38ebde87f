//! Sub-explanations: proper subsets of an explanation reached by deleting
//! one patch at a time, kept while they retain enough relative confidence.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::PatchSet;
use crate::msesearch::{brute_force_mses, MseRecord};
use crate::oracle::{Scorer, Subject};

/// Largest grid [`brute_force_counts`] accepts.
pub const BRUTE_FORCE_COUNT_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dedup {
    /// A subset reachable from several roots counts once per image.
    #[default]
    PerImage,
    /// Each root's tree counts its own nodes.
    PerTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CountConfig {
    pub thresholds: Vec<f64>,
    pub stop_fraction: f64,
    pub dedup: Dedup,
}

impl Default for CountConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![0.9, 0.8, 0.7, 0.6, 0.5],
            stop_fraction: 0.5,
            dedup: Dedup::PerImage,
        }
    }
}

impl CountConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::InvalidConfig("no count thresholds".into()));
        }
        if self.thresholds.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidConfig("thresholds must be strictly decreasing".into()));
        }
        let lowest = *self.thresholds.last().expect("non-empty");
        if !(self.stop_fraction.is_finite() && self.stop_fraction <= lowest) {
            return Err(Error::InvalidConfig(format!(
                "stop fraction {} must not exceed the lowest threshold {lowest}",
                self.stop_fraction
            )));
        }
        Ok(())
    }

    /// CSV column names, e.g. `c90` for 0.9.
    pub fn column_names(&self) -> Vec<String> {
        self.thresholds.iter().map(|t| format!("c{}", (t * 100.0).round())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubExplanationNode {
    pub subset: PatchSet,
    /// Confidence relative to the full image.
    pub confidence_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubExplanationCount {
    pub image_id: String,
    pub mse_count: usize,
    /// One count per threshold, same order as the config.
    pub counts: Vec<usize>,
}

/// Breadth-first expansion of one explanation's deletion tree.
///
/// Children of a node are its subsets with one patch removed. A node is
/// scored once; nodes whose ratio falls below `stop_fraction` are neither
/// expanded nor returned. The root and the empty set are never returned.
/// Output is sorted by bitmask.
pub fn expand_subexplanations(
    scorer: &Scorer<'_>,
    subject: &Subject,
    mse: &MseRecord,
    config: &CountConfig,
) -> Result<Vec<SubExplanationNode>> {
    if mse.full_confidence <= 0.0 {
        return Ok(Vec::new());
    }
    let mut visited: HashSet<u64> = HashSet::from([mse.patches.bits()]);
    let mut frontier = vec![mse.patches];
    let mut nodes = Vec::new();
    while !frontier.is_empty() {
        let mut children: Vec<PatchSet> = frontier
            .iter()
            .flat_map(|p| p.immediate_subsets())
            .filter(|c| !c.is_empty() && visited.insert(c.bits()))
            .collect();
        children.sort_unstable_by_key(|c| c.bits());
        let scores = scorer.score_subsets(subject, &children, mse.class)?;
        frontier.clear();
        for (child, score) in children.into_iter().zip(scores) {
            let ratio = score / mse.full_confidence;
            if ratio >= config.stop_fraction {
                nodes.push(SubExplanationNode {
                    subset: child,
                    confidence_ratio: ratio,
                });
                frontier.push(child);
            }
        }
    }
    nodes.sort_by_key(|n| n.subset.bits());
    Ok(nodes)
}

/// `count(θ) = |{nodes : ratio ≥ θ}|` for each threshold.
pub fn count_above_thresholds(
    image_id: &str,
    per_mse: &[Vec<SubExplanationNode>],
    config: &CountConfig,
) -> SubExplanationCount {
    let ratios: Vec<f64> = match config.dedup {
        Dedup::PerImage => {
            let mut unique = BTreeMap::new();
            for node in per_mse.iter().flatten() {
                unique.entry(node.subset.bits()).or_insert(node.confidence_ratio);
            }
            unique.into_values().collect()
        }
        Dedup::PerTree => per_mse.iter().flatten().map(|n| n.confidence_ratio).collect(),
    };
    let counts = config
        .thresholds
        .iter()
        .map(|t| ratios.iter().filter(|r| **r >= *t).count())
        .collect();
    SubExplanationCount {
        image_id: image_id.to_string(),
        mse_count: per_mse.len(),
        counts,
    }
}

/// Reference counts from full enumeration: exact explanations, then for each
/// root the subsets reachable through the deletion DAG under the stop rule,
/// deduplicated per image.
pub fn brute_force_counts(
    scorer: &Scorer<'_>,
    subject: &Subject,
    p_h: f64,
    config: &CountConfig,
) -> Result<SubExplanationCount> {
    let n = subject.grid().patch_count();
    if n > BRUTE_FORCE_COUNT_LIMIT {
        return Err(Error::BruteForceTooLarge {
            patches: n,
            limit: BRUTE_FORCE_COUNT_LIMIT,
        });
    }
    let roots = brute_force_mses(scorer, subject, p_h)?;
    let Some(first) = roots.first() else {
        return Ok(count_above_thresholds(subject.id(), &[], config));
    };
    let (class, full) = (first.class, first.full_confidence);
    let all: Vec<PatchSet> = (1..1u64 << n).map(|b| PatchSet::from_bits(b, n).expect("in range")).collect();
    let scores = scorer.score_subsets(subject, &all, class)?;
    let ratio = |bits: u64| scores[bits as usize - 1] / full;

    let mut counted: BTreeMap<u64, f64> = BTreeMap::new();
    for root in &roots {
        let mask = root.patches.bits();
        let mut subs: Vec<u64> = Vec::new();
        let mut sub = mask;
        loop {
            subs.push(sub);
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & mask;
        }
        subs.sort_by_key(|s| std::cmp::Reverse(s.count_ones()));
        let mut reach = vec![false; 1 << n];
        reach[mask as usize] = true;
        for &s in &subs {
            if s == mask || s == 0 {
                continue;
            }
            let mut missing = mask & !s;
            while missing != 0 {
                let bit = missing & missing.wrapping_neg();
                missing ^= bit;
                let parent = s | bit;
                if reach[parent as usize] && (parent == mask || ratio(parent) >= config.stop_fraction) {
                    reach[s as usize] = true;
                    break;
                }
            }
            if reach[s as usize] && ratio(s) >= config.stop_fraction {
                counted.insert(s, ratio(s));
            }
        }
    }
    let counts = config
        .thresholds
        .iter()
        .map(|t| counted.values().filter(|r| **r >= *t).count())
        .collect();
    Ok(SubExplanationCount {
        image_id: subject.id().to_string(),
        mse_count: roots.len(),
        counts,
    })
}

/// Expands every explanation of one image and counts the result.
pub fn count_image(
    scorer: &Scorer<'_>,
    subject: &Subject,
    mses: &[MseRecord],
    config: &CountConfig,
) -> Result<(SubExplanationCount, Vec<Vec<SubExplanationNode>>)> {
    let trees = mses
        .iter()
        .map(|m| expand_subexplanations(scorer, subject, m, config))
        .collect::<Result<Vec<_>>>()?;
    Ok((count_above_thresholds(subject.id(), &trees, config), trees))
}

pub fn write_counts_csv(out: impl Write, config: &CountConfig, rows: &[SubExplanationCount]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["image_id".to_string(), "mse_count".to_string()];
    header.extend(config.column_names());
    writer.write_record(&header)?;
    for row in rows {
        let mut fields = vec![row.image_id.clone(), row.mse_count.to_string()];
        fields.extend(row.counts.iter().map(|c| c.to_string()));
        writer.write_record(&fields)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_counts_csv(path: &Path) -> Result<Vec<SubExplanationCount>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record?;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 2,
            message,
        };
        let num = |i: usize| -> Result<usize> {
            record
                .get(i)
                .ok_or_else(|| bad(format!("missing column {i}")))?
                .parse()
                .map_err(|e| bad(format!("column {i}: {e}")))
        };
        let counts = (2..record.len()).map(num).collect::<Result<Vec<_>>>()?;
        rows.push(SubExplanationCount {
            image_id: record.get(0).unwrap_or_default().to_string(),
            mse_count: num(1)?,
            counts,
        });
    }
    Ok(rows)
}

#[derive(Serialize, Deserialize)]
struct NodeLine {
    image_id: String,
    root: String,
    subset: String,
    patch_count: usize,
    ratio: f64,
}

/// One line per (root, node) pair; roots without nodes leave no trace.
pub fn write_nodes_jsonl(mut out: impl Write, roots: &[MseRecord], trees: &[Vec<SubExplanationNode>]) -> Result<()> {
    for (root, nodes) in roots.iter().zip(trees) {
        for node in nodes {
            let line = NodeLine {
                image_id: root.image_id.clone(),
                root: root.patches.to_hex(),
                subset: node.subset.to_hex(),
                patch_count: node.subset.capacity(),
                ratio: node.confidence_ratio,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Nodes keyed by (image id, root bitmask).
pub fn read_nodes_jsonl(path: &Path) -> Result<BTreeMap<(String, u64), Vec<SubExplanationNode>>> {
    let file = std::fs::File::open(path)?;
    let mut out: BTreeMap<(String, u64), Vec<SubExplanationNode>> = BTreeMap::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let parsed: NodeLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let root = PatchSet::from_hex(&parsed.root, parsed.patch_count).map_err(|e| bad(e.to_string()))?;
        let subset = PatchSet::from_hex(&parsed.subset, parsed.patch_count).map_err(|e| bad(e.to_string()))?;
        out.entry((parsed.image_id, root.bits())).or_default().push(SubExplanationNode {
            subset,
            confidence_ratio: parsed.ratio,
        });
    }
    Ok(out)
}
