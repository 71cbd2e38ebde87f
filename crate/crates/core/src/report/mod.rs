//! Dataset-wide summaries: per-model explanation statistics, size
//! histograms, percent-explained curves, and tree exports.

mod dot;
mod svg;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use dot::{export_sag_dot, SagNodes, DEFAULT_MAX_CHILDREN};
pub use svg::{bar_chart_svg, line_chart_svg, Series};

use crate::error::{Error, Result};
use crate::msesearch::MseRecord;
use crate::subexplain::SubExplanationCount;

/// Statistics for one model. Count fields are `None` when no image was
/// explained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseStats {
    pub model: String,
    pub images: usize,
    pub unexplained: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub median: Option<f64>,
    pub thresholds: Vec<f64>,
    /// Mean sub-explanation count per threshold over explained images.
    pub sub_means: Vec<Option<f64>>,
}

fn mse_counts(images: &[String], records: &[MseRecord]) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = images.iter().map(|i| (i.clone(), 0)).collect();
    for r in records {
        *counts.entry(r.image_id.clone()).or_default() += 1;
    }
    counts
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Images are the union of `images` and the ids appearing in `records`.
/// Images without an explanation are tallied as unexplained and left out of
/// every mean. A missing count row counts as zero.
pub fn aggregate(
    model: &str,
    images: &[String],
    records: &[MseRecord],
    counts: &[SubExplanationCount],
    thresholds: &[f64],
) -> MseStats {
    let per_image = mse_counts(images, records);
    let explained: Vec<(&String, f64)> = per_image
        .iter()
        .filter(|(_, c)| **c > 0)
        .map(|(id, c)| (id, *c as f64))
        .collect();
    let n = explained.len();
    let (mean, std, med) = if n == 0 {
        (None, None, None)
    } else {
        let mean = explained.iter().map(|(_, c)| c).sum::<f64>() / n as f64;
        let std = if n == 1 {
            0.0
        } else {
            (explained.iter().map(|(_, c)| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        let mut sorted: Vec<f64> = explained.iter().map(|(_, c)| *c).collect();
        sorted.sort_by(f64::total_cmp);
        (Some(mean), Some(std), Some(median(&sorted)))
    };

    let by_id: BTreeMap<&str, &SubExplanationCount> = counts.iter().map(|c| (c.image_id.as_str(), c)).collect();
    let sub_means = (0..thresholds.len())
        .map(|t| {
            (n > 0).then(|| {
                explained
                    .iter()
                    .map(|(id, _)| by_id.get(id.as_str()).and_then(|c| c.counts.get(t)).copied().unwrap_or(0) as f64)
                    .sum::<f64>()
                    / n as f64
            })
        })
        .collect();
    MseStats {
        model: model.to_string(),
        images: per_image.len(),
        unexplained: per_image.len() - n,
        mean,
        std,
        median: med,
        thresholds: thresholds.to_vec(),
        sub_means,
    }
}

/// `frequencies[k - 1]` is the number of explanations with `k` patches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeHistogram {
    pub frequencies: Vec<usize>,
}

impl SizeHistogram {
    pub fn from_records(records: &[MseRecord], grid_size: usize) -> Self {
        let max = records.iter().map(MseRecord::size).max().unwrap_or(0).max(grid_size);
        let mut frequencies = vec![0; max];
        for r in records {
            if r.size() > 0 {
                frequencies[r.size() - 1] += 1;
            }
        }
        Self { frequencies }
    }

    pub fn total(&self) -> usize {
        self.frequencies.iter().sum()
    }
}

/// `value[n - 1]` = percentage of images whose smallest explanation has at
/// most `n` patches, for `n` in `1..=max_n`.
pub fn percent_explained(images: &[String], records: &[MseRecord], max_n: usize) -> Vec<f64> {
    let mut smallest: BTreeMap<&str, Option<usize>> = images.iter().map(|i| (i.as_str(), None)).collect();
    for r in records {
        let slot = smallest.entry(r.image_id.as_str()).or_insert(None);
        *slot = Some(slot.map_or(r.size(), |s| s.min(r.size())));
    }
    let total = smallest.len();
    (1..=max_n)
        .map(|n| {
            if total == 0 {
                return 0.0;
            }
            let hit = smallest.values().filter(|s| s.is_some_and(|s| s <= n)).count();
            100.0 * hit as f64 / total as f64
        })
        .collect()
}

fn threshold_header(t: f64) -> String {
    format!(">={}%", (t * 100.0).round())
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per model: `Model, Mean, Std, Median, >=90%, ..., Images, Unexplained`.
/// Empty cells mark statistics over zero explained images.
pub fn write_stats_csv(out: impl Write, stats: &[MseStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let thresholds = stats.first().map(|s| s.thresholds.clone()).unwrap_or_default();
    let mut header: Vec<String> = ["Model", "Mean", "Std", "Median"].map(String::from).to_vec();
    header.extend(thresholds.iter().map(|t| threshold_header(*t)));
    header.extend(["Images".to_string(), "Unexplained".to_string()]);
    w.write_record(&header)?;
    for s in stats {
        if s.thresholds != thresholds {
            return Err(Error::InvalidConfig("models were counted with different thresholds".into()));
        }
        let mut row = vec![s.model.clone(), cell(s.mean), cell(s.std), cell(s.median)];
        row.extend(s.sub_means.iter().map(|v| cell(*v)));
        row.extend([s.images.to_string(), s.unexplained.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stats_csv(path: &Path) -> Result<Vec<MseStats>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let bad_header = || Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "unexpected header".into(),
    };
    if header.len() < 6 || header[..4] != ["Model", "Mean", "Std", "Median"] {
        return Err(bad_header());
    }
    let thresholds = header[4..header.len() - 2]
        .iter()
        .map(|h| {
            h.strip_prefix(">=")
                .and_then(|h| h.strip_suffix('%'))
                .and_then(|h| h.parse::<f64>().ok())
                .map(|p| p / 100.0)
                .ok_or_else(bad_header)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message,
        };
        let opt = |j: usize| -> Result<Option<f64>> {
            match record.get(j) {
                Some("") => Ok(None),
                Some(v) => v.parse().map(Some).map_err(|e| bad(format!("column {j}: {e}"))),
                None => Err(bad(format!("missing column {j}"))),
            }
        };
        let int = |j: usize| -> Result<usize> {
            record
                .get(j)
                .ok_or_else(|| bad(format!("missing column {j}")))?
                .parse()
                .map_err(|e| bad(format!("column {j}: {e}")))
        };
        let k = thresholds.len();
        out.push(MseStats {
            model: record.get(0).unwrap_or_default().to_string(),
            mean: opt(1)?,
            std: opt(2)?,
            median: opt(3)?,
            sub_means: (4..4 + k).map(opt).collect::<Result<_>>()?,
            images: int(4 + k)?,
            unexplained: int(5 + k)?,
            thresholds: thresholds.clone(),
        });
    }
    Ok(out)
}

pub fn write_stats_json(out: impl Write, stats: &[MseStats]) -> Result<()> {
    serde_json::to_writer_pretty(out, stats)?;
    Ok(())
}
