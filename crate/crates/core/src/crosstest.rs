//! Cross-testing: maps generated by one model, scored by another.
//!
//! Entry `(e, g)` of a [`CrossTestMatrix`] is the mean over images of the
//! normalized AUC that evaluator `e` gives to the maps of generator `g`.
//! Rows are evaluators, columns generators. Models are then placed in the
//! plane by kernel PCA over the matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Direction;
use crate::oracle::{Scorer, Subject};
use crate::saliency::{auc, calibrate_model, normalize_score, perturbation_curve, AttributionMap, CurveOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct CrossTestMatrix {
    pub models: Vec<String>,
    /// `ins[e][g]`.
    pub ins: Vec<Vec<f64>>,
    pub del: Vec<Vec<f64>>,
    pub dataset_id: String,
    pub map_method: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Ins,
    Del,
}

impl CrossTestMatrix {
    pub fn channel(&self, channel: Channel) -> &[Vec<f64>] {
        match channel {
            Channel::Ins => &self.ins,
            Channel::Del => &self.del,
        }
    }
}

/// Maps keyed by `(generator, image id)`.
pub type MapSet = BTreeMap<(String, String), AttributionMap>;

/// Scores every generator's maps with every evaluator.
///
/// Each evaluator uses its own predicted class on the full image and its own
/// calibration over `dataset`. Per-image AUCs are normalized, then averaged.
pub fn build_matrix(
    evaluators: &[Scorer<'_>],
    maps: &MapSet,
    dataset: &[Subject],
    options: &CurveOptions,
    dataset_id: &str,
    map_method: &str,
) -> Result<CrossTestMatrix> {
    let models: Vec<String> = evaluators.iter().map(|s| s.oracle().name().to_string()).collect();
    check_maps(&models, maps, dataset)?;
    let (mut ins, mut del) = (Vec::new(), Vec::new());
    for scorer in evaluators {
        let (i, d) = matrix_row(scorer, &models, maps, dataset, options, dataset_id)?;
        ins.push(i);
        del.push(d);
    }
    Ok(CrossTestMatrix {
        models,
        ins,
        del,
        dataset_id: dataset_id.to_string(),
        map_method: map_method.to_string(),
    })
}

/// Fails on the first `(generator, image)` pair without a map.
pub fn check_maps(generators: &[String], maps: &MapSet, dataset: &[Subject]) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for g in generators {
        for subject in dataset {
            if !maps.contains_key(&(g.clone(), subject.id().to_string())) {
                return Err(Error::MissingMap {
                    generator: g.clone(),
                    image: subject.id().to_string(),
                });
            }
        }
    }
    Ok(())
}

/// One evaluator's row of the insertion and deletion matrices.
pub fn matrix_row(
    scorer: &Scorer<'_>,
    generators: &[String],
    maps: &MapSet,
    dataset: &[Subject],
    options: &CurveOptions,
    dataset_id: &str,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_maps(generators, maps, dataset)?;
    let calibration = calibrate_model(scorer, dataset, dataset_id)?;
    // Fail before scoring any curve.
    normalize_score(calibration.top1, &calibration)?;
    let n = generators.len();
    let (mut ins, mut del) = (vec![0.0; n], vec![0.0; n]);
    for subject in dataset {
        let (class, _) = scorer.predicted_class(subject)?;
        for (g, generator) in generators.iter().enumerate() {
            let map = &maps[&(generator.clone(), subject.id().to_string())];
            for (direction, out) in [(Direction::Insertion, &mut ins), (Direction::Deletion, &mut del)] {
                let curve = perturbation_curve(scorer, subject, map, class, direction, options)?;
                out[g] += normalize_score(auc(&curve), &calibration)?;
            }
        }
    }
    let count = dataset.len() as f64;
    for v in ins.iter_mut().chain(del.iter_mut()) {
        *v /= count;
    }
    Ok((ins, del))
}

/// `H K H` with `H = I - 11ᵀ/n`.
pub fn center_kernel(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !k.is_square() {
        return Err(Error::NotSquare {
            rows: k.nrows(),
            cols: k.ncols(),
        });
    }
    let n = k.nrows();
    if n == 0 {
        return Ok(k.clone());
    }
    let h = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    Ok(&h * k * &h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// `exp(-γ‖u - v‖²)`; `None` picks `γ = 1/(2·median²)` of the pairwise distances.
    Rbf { gamma: Option<f64> },
    /// The symmetrized channel matrix itself.
    PrecomputedSimilarity,
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::Rbf { gamma: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub models: Vec<String>,
    /// One row per model, `dims` coordinates each.
    pub coords: Vec<Vec<f64>>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// e.g. `rbf(gamma=0.5)`.
    pub kernel: String,
}

impl Embedding {
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.coords[a]
            .iter()
            .zip(&self.coords[b])
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Median heuristic over pairwise distances. Falls back to the mean of the
/// nonzero distances when the median is zero, and to 1 when all are zero.
pub fn median_gamma(features: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = Vec::new();
    for i in 0..features.len() {
        for j in i + 1..features.len() {
            d.push(squared_distance(&features[i], &features[j]).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let median = match d.len() {
        0 => 0.0,
        n if n % 2 == 1 => d[n / 2],
        n => (d[n / 2 - 1] + d[n / 2]) / 2.0,
    };
    let scale = if median > 0.0 {
        median
    } else {
        let nonzero: Vec<f64> = d.iter().copied().filter(|x| *x > 0.0).collect();
        if nonzero.is_empty() {
            return 1.0;
        }
        nonzero.iter().sum::<f64>() / nonzero.len() as f64
    };
    1.0 / (2.0 * scale * scale)
}

pub fn rbf_kernel(features: &[Vec<f64>], gamma: f64) -> DMatrix<f64> {
    let n = features.len();
    DMatrix::from_fn(n, n, |i, j| (-gamma * squared_distance(&features[i], &features[j])).exp())
}

/// Kernel PCA of an uncentered kernel matrix.
pub fn embed_kernel(models: Vec<String>, k: &DMatrix<f64>, dims: usize, kernel: String) -> Result<Embedding> {
    if !k.is_square() {
        return Err(Error::NotSquare {
            rows: k.nrows(),
            cols: k.ncols(),
        });
    }
    let n = k.nrows();
    if n < dims + 1 || dims == 0 {
        return Err(Error::TooFewModels { needed: dims + 1, got: n });
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteKernel);
    }
    let centered = center_kernel(k)?;
    let eig = SymmetricEigen::new(centered);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut coords = vec![vec![0.0; dims]; n];
    let mut eigenvalues = Vec::with_capacity(dims);
    for (d, &idx) in order.iter().take(dims).enumerate() {
        let lambda = eig.eigenvalues[idx];
        eigenvalues.push(lambda);
        let v = eig.eigenvectors.column(idx);
        let mut pivot = 0;
        for i in 1..n {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let scale = lambda.max(0.0).sqrt() * sign;
        for i in 0..n {
            coords[i][d] = v[i] * scale;
        }
    }
    Ok(Embedding {
        models,
        coords,
        eigenvalues,
        kernel,
    })
}

/// Feature vector of model `m`: row `m` followed by column `m`.
pub fn row_column_features(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..m.len())
        .map(|i| m[i].iter().copied().chain(m.iter().map(|row| row[i])).collect())
        .collect()
}

pub fn kernel_pca_embed(matrix: &CrossTestMatrix, channel: Channel, kernel: Kernel, dims: usize) -> Result<Embedding> {
    let m = matrix.channel(channel);
    let n = m.len();
    if m.iter().any(|row| row.len() != n) {
        return Err(Error::NotSquare {
            rows: n,
            cols: m.first().map_or(0, Vec::len),
        });
    }
    if n < dims + 1 {
        return Err(Error::TooFewModels { needed: dims + 1, got: n });
    }
    let (k, label) = match kernel {
        Kernel::Rbf { gamma } => {
            let features = row_column_features(m);
            let gamma = gamma.unwrap_or_else(|| median_gamma(&features));
            (rbf_kernel(&features, gamma), format!("rbf(gamma={gamma})"))
        }
        Kernel::PrecomputedSimilarity => (
            DMatrix::from_fn(n, n, |i, j| (m[i][j] + m[j][i]) / 2.0),
            "precomputed".to_string(),
        ),
    };
    embed_kernel(matrix.models.clone(), &k, dims, label)
}

/// Rows are evaluators, columns generators.
pub fn write_matrix_csv(out: impl Write, models: &[String], values: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["evaluator".to_string()];
    header.extend(models.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in models.iter().zip(values) {
        let mut record = vec![name.clone()];
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let models: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut values = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message,
        };
        if record.get(0) != models.get(i).map(String::as_str) {
            return Err(parse_err("row order does not match the header".into()));
        }
        let row = record
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|e| parse_err(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != models.len() {
            return Err(parse_err(format!("expected {} values", models.len())));
        }
        values.push(row);
    }
    if values.len() != models.len() {
        return Err(Error::NotSquare {
            rows: values.len(),
            cols: models.len(),
        });
    }
    Ok((models, values))
}

pub fn write_embedding_csv(out: impl Write, embedding: &Embedding) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dims = embedding.eigenvalues.len();
    let mut header = vec!["model".to_string()];
    if dims == 2 {
        header.extend(["x".to_string(), "y".to_string()]);
    } else {
        header.extend((1..=dims).map(|d| format!("d{d}")));
    }
    w.write_record(&header)?;
    for (name, c) in embedding.models.iter().zip(&embedding.coords) {
        let mut record = vec![name.clone()];
        record.extend(c.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn escape_xml(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Labelled scatter plot of the first two coordinates.
pub fn embedding_svg(embedding: &Embedding) -> String {
    let (size, margin) = (480.0, 60.0);
    let xs: Vec<f64> = embedding.coords.iter().map(|c| c[0]).collect();
    let ys: Vec<f64> = embedding.coords.iter().map(|c| c.get(1).copied().unwrap_or(0.0)).collect();
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) }
    };
    let ((x0, x1), (y0, y1)) = (span(&xs), span(&ys));
    let inner = size - 2.0 * margin;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{size}" height="{size}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        size / 2.0,
        escape_xml(&embedding.kernel)
    );
    for (i, name) in embedding.models.iter().enumerate() {
        let px = margin + (xs[i] - x0) / (x1 - x0) * inner;
        let py = size - margin - (ys[i] - y0) / (y1 - y0) * inner;
        let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="4" fill="steelblue"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{}</text>"#,
            px + 6.0,
            py - 6.0,
            escape_xml(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{make_grid, BaselineStyle, ImageTensor};
    use crate::oracle::testing::Constant;
    use crate::oracle::{make_synthetic, ConfidenceCache, Squash, SyntheticKind, SyntheticOracleSpec};

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    fn matrix(ins: Vec<Vec<f64>>) -> CrossTestMatrix {
        CrossTestMatrix {
            models: names(ins.len()),
            del: ins.clone(),
            ins,
            dataset_id: "d".into(),
            map_method: "files".into(),
        }
    }

    #[test]
    fn centering_examples() {
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let c = center_kernel(&k).unwrap();
        let h = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert_eq!(c, &h * &k * &h);
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(center_kernel(&c).unwrap(), c);
        let ones = DMatrix::from_element(4, 4, 1.0);
        assert!(center_kernel(&ones).unwrap().iter().all(|v| v.abs() < 1e-15));
        assert!(matches!(
            center_kernel(&DMatrix::zeros(2, 3)),
            Err(Error::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn centered_sums_vanish() {
        let k = DMatrix::from_fn(5, 5, |i, j| ((i * 7 + j * 7) % 5) as f64 + (i == j) as u8 as f64);
        let c = center_kernel(&k).unwrap();
        for i in 0..5 {
            assert!(c.row(i).sum().abs() < 1e-10);
            assert!(c.column(i).sum().abs() < 1e-10);
        }
    }

    #[test]
    fn identical_models_coincide() {
        let m = vec![
            vec![0.9, 0.9, 0.2],
            vec![0.9, 0.9, 0.2],
            vec![0.3, 0.3, 0.8],
        ];
        let e = kernel_pca_embed(&matrix(m), Channel::Ins, Kernel::default(), 2).unwrap();
        assert!(e.distance(0, 1) < 1e-6);
        assert!(e.distance(0, 2) > 0.1);
    }

    #[test]
    fn sign_convention_and_order() {
        let m = vec![
            vec![1.0, 0.2, 0.4, 0.1],
            vec![0.3, 0.9, 0.5, 0.2],
            vec![0.6, 0.1, 0.7, 0.8],
            vec![0.2, 0.4, 0.3, 1.0],
        ];
        let e = kernel_pca_embed(&matrix(m.clone()), Channel::Del, Kernel::PrecomputedSimilarity, 2).unwrap();
        assert!(e.eigenvalues[0] >= e.eigenvalues[1]);
        for d in 0..2 {
            let col: Vec<f64> = e.coords.iter().map(|c| c[d]).collect();
            let pivot = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(pivot > 0.0);
        }
        let again = kernel_pca_embed(&matrix(m), Channel::Del, Kernel::PrecomputedSimilarity, 2).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn full_rank_reproduces_feature_distances() {
        let k = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.6, 0.2, 0.1, //
                0.6, 1.0, 0.3, 0.2, //
                0.2, 0.3, 1.0, 0.5, //
                0.1, 0.2, 0.5, 1.0,
            ],
        );
        let e = embed_kernel(names(4), &k, 3, "k".into()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = (k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)]).sqrt();
                assert!((e.distance(i, j) - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn too_few_models_and_bad_kernels() {
        let m = matrix(vec![vec![1.0, 0.5], vec![0.5, 1.0]]);
        assert!(matches!(
            kernel_pca_embed(&m, Channel::Ins, Kernel::default(), 2),
            Err(Error::TooFewModels { needed: 3, got: 2 })
        ));
        let k = DMatrix::from_element(3, 3, f64::NAN);
        assert!(matches!(embed_kernel(names(3), &k, 2, "k".into()), Err(Error::NonFiniteKernel)));
    }

    #[test]
    fn median_gamma_examples() {
        let f = vec![vec![0.0], vec![1.0], vec![3.0]];
        // distances 1, 2, 3
        assert_eq!(median_gamma(&f), 1.0 / 8.0);
        let same = vec![vec![1.0], vec![1.0], vec![1.0], vec![2.0]];
        // distances 0, 0, 1, 0, 1, 1: median 0.5
        assert_eq!(median_gamma(&same), 2.0);
        assert_eq!(median_gamma(&[vec![0.0], vec![0.0]]), 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ins.csv");
        let values = vec![vec![0.1, 1.0 / 3.0], vec![-0.25, 1.5]];
        write_matrix_csv(std::fs::File::create(&path).unwrap(), &names(2), &values).unwrap();
        assert_eq!(read_matrix_csv(&path).unwrap(), (names(2), values));
    }

    fn dataset() -> Vec<Subject> {
        (0..3)
            .map(|k| {
                let grid = make_grid(6, 6, 3, 3).unwrap();
                let img = ImageTensor::new(6, 6, 1, (0..36).map(|i| 0.2 + ((i + k) % 5) as f32 / 8.0).collect()).unwrap();
                Subject::new(format!("img{k}"), img, grid, BaselineStyle::Grey).unwrap()
            })
            .collect()
    }

    fn maps_for(models: &[&str], data: &[Subject]) -> MapSet {
        let mut maps = MapSet::new();
        for (g, name) in models.iter().enumerate() {
            for s in data {
                let v = (0..9).map(|i| ((i * (g + 2)) % 9) as f32 / 8.0).collect();
                maps.insert((name.to_string(), s.id().to_string()), AttributionMap::new(3, 3, v, *name).unwrap());
            }
        }
        maps
    }

    fn additive(name: &str) -> crate::oracle::SyntheticOracle {
        let grid = make_grid(6, 6, 3, 3).unwrap();
        let spec = SyntheticOracleSpec::new(SyntheticKind::Additive {
            weights: vec![0.3, 0.2, 0.1, 0.1, 0.1, 0.05, 0.05, 0.05, 0.05],
            squash: Squash::Clamp,
        });
        make_synthetic(name, &spec, &grid).unwrap()
    }

    #[test]
    fn identical_oracles_give_a_flat_matrix() {
        let data = dataset();
        let (a, b) = (additive("a"), additive("b"));
        let (ca, cb) = (ConfidenceCache::new(), ConfidenceCache::new());
        let scorers = [Scorer::new(&a, &ca), Scorer::new(&b, &cb)];
        let mut maps = maps_for(&["a"], &data);
        for s in &data {
            let m = maps[&("a".to_string(), s.id().to_string())].clone();
            maps.insert(("b".into(), s.id().into()), m);
        }
        let options = CurveOptions {
            steps: 20,
            ..CurveOptions::default()
        };
        let m = build_matrix(&scorers, &maps, &data, &options, "d", "files").unwrap();
        for ch in [&m.ins, &m.del] {
            let v = ch[0][0];
            assert!(ch.iter().flatten().all(|x| *x == v));
        }
    }

    #[test]
    fn single_model_matches_manual_average() {
        let data = dataset();
        let a = additive("a");
        let cache = ConfidenceCache::new();
        let scorers = [Scorer::new(&a, &cache)];
        let maps = maps_for(&["a"], &data);
        let options = CurveOptions {
            steps: 10,
            ..CurveOptions::default()
        };
        let m = build_matrix(&scorers, &maps, &data, &options, "d", "files").unwrap();
        let cal = calibrate_model(&scorers[0], &data, "d").unwrap();
        let mut want = 0.0;
        for s in &data {
            let (class, _) = scorers[0].predicted_class(s).unwrap();
            let map = &maps[&("a".to_string(), s.id().to_string())];
            let c = perturbation_curve(&scorers[0], s, map, class, Direction::Insertion, &options).unwrap();
            want += normalize_score(auc(&c), &cal).unwrap();
        }
        assert!((m.ins[0][0] - want / 3.0).abs() < 1e-12);
    }

    #[test]
    fn errors_propagate() {
        let data = dataset();
        let flat = Constant(0.9, 2);
        let cache = ConfidenceCache::new();
        let scorers = [Scorer::new(&flat, &cache)];
        let name = flat_name(&scorers[0]);
        let maps = maps_for(&[name.as_str()], &data);
        assert!(matches!(
            build_matrix(&scorers, &maps, &data, &CurveOptions::default(), "d", "files"),
            Err(Error::DegenerateCalibration { .. })
        ));
        let mut partial = maps.clone();
        partial.remove(&(name.clone(), "img1".into()));
        match build_matrix(&scorers, &partial, &data, &CurveOptions::default(), "d", "files") {
            Err(Error::MissingMap { generator, image }) => assert_eq!((generator, image), (name, "img1".into())),
            other => panic!("{other:?}"),
        }
    }

    fn flat_name(s: &Scorer<'_>) -> String {
        s.oracle().name().to_string()
    }

    #[test]
    fn svg_labels_models() {
        let m = vec![
            vec![0.9, 0.1, 0.2],
            vec![0.1, 0.8, 0.3],
            vec![0.2, 0.3, 0.7],
        ];
        let mut mat = matrix(m);
        mat.models[2] = "a<b".into();
        let e = kernel_pca_embed(&mat, Channel::Ins, Kernel::default(), 2).unwrap();
        let svg = embedding_svg(&e);
        assert!(svg.contains(">m0<") && svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<circle").count(), 3);
    }
}
