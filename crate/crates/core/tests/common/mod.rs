#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use xprobe::imaging::{make_grid, BaselineStyle, ImageTensor};
use xprobe::oracle::{Squash, Subject, SyntheticKind, SyntheticOracleSpec};

/// Image of `rows x cols` patches, each `px` pixels square, with no pixel at
/// the grey baseline value.
pub fn subject(id: &str, rows: usize, cols: usize, px: usize) -> Subject {
    let (h, w) = (rows * px, cols * px);
    let data = (0..h * w).map(|i| 0.2 + (i % 7) as f32 / 10.0).collect();
    let image = ImageTensor::new(h, w, 1, data).unwrap();
    Subject::new(id, image, make_grid(h, w, rows, cols).unwrap(), BaselineStyle::Grey).unwrap()
}

fn random_subset(rng: &mut impl Rng, n: usize, min: usize, max: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(rng);
    let k = rng.random_range(min..=max);
    let mut picked = all[..k].to_vec();
    picked.sort_unstable();
    picked
}

/// Conjunctive, disjunctive and additive oracles in rotation, including
/// non-monotone additive ones (mixed-sign weights, sigmoid squash).
pub fn random_spec(rng: &mut impl Rng, n: usize, index: usize) -> SyntheticOracleSpec {
    let kind = match index % 4 {
        0 => SyntheticKind::Conjunctive {
            required: random_subset(rng, n, 1, 4),
            hi: rng.random_range(0.8..1.0),
            lo: rng.random_range(0.0..0.3),
        },
        1 => SyntheticKind::Disjunctive {
            groups: (0..rng.random_range(1..=3)).map(|_| random_subset(rng, n, 1, 3)).collect(),
            hi: rng.random_range(0.8..1.0),
            lo: rng.random_range(0.0..0.3),
        },
        2 => SyntheticKind::Additive {
            weights: (0..n).map(|_| rng.random_range(0.0..0.3)).collect(),
            squash: Squash::Clamp,
        },
        _ => SyntheticKind::Additive {
            weights: (0..n).map(|_| rng.random_range(-1.0..2.0)).collect(),
            squash: Squash::Sigmoid,
        },
    };
    SyntheticOracleSpec::new(kind)
}
