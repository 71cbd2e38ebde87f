//! Dataset-wide explanation statistics for black-box image classifiers.
//!
//! The crate treats a classifier as an oracle that maps an image to class
//! confidences. On top of that it finds minimal sufficient explanations
//! (small patch sets that keep most of the confidence), counts their
//! sub-explanations, scores attribution maps with insertion and deletion
//! curves, and compares models by cross-testing their maps.
//!
//! ```
//! use xprobe::imaging::{make_grid, BaselineStyle, ImageTensor};
//! use xprobe::msesearch::{find_mses, BeamConfig};
//! use xprobe::oracle::{make_synthetic, ConfidenceCache, Scorer, Squash, Subject, SyntheticKind, SyntheticOracleSpec};
//!
//! let grid = make_grid(6, 6, 3, 3)?;
//! let image = ImageTensor::filled(6, 6, 3, 0.5)?;
//! let subject = Subject::new("img", image, grid.clone(), BaselineStyle::Grey)?;
//!
//! // confidence is the sum of the weights of the visible patches
//! let spec = SyntheticOracleSpec::new(SyntheticKind::Additive {
//!     weights: vec![0.5, 0.0, 0.0, 0.0, 0.45, 0.0, 0.0, 0.0, 0.05],
//!     squash: Squash::Clamp,
//! });
//! let oracle = make_synthetic("toy", &spec, &grid)?;
//! let cache = ConfidenceCache::new();
//! let scorer = Scorer::new(&oracle, &cache);
//!
//! let mses = find_mses(&scorer, &subject, &BeamConfig::default())?;
//! assert_eq!(mses.len(), 1);
//! assert_eq!(mses[0].patches.iter().collect::<Vec<_>>(), [0, 4]);
//! # Ok::<(), xprobe::Error>(())
//! ```

pub mod crosstest;
mod error;
pub mod imaging;
pub mod msesearch;
pub mod oracle;
pub mod report;
pub mod saliency;
pub mod subexplain;

pub use error::{Error, Result};

// The guide's snippets run as doctests of this crate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/explanations.md")]
    mod explanations {}
    #[doc = include_str!("../../../book/src/sub_explanations.md")]
    mod sub_explanations {}
    #[doc = include_str!("../../../book/src/saliency.md")]
    mod saliency {}
    #[doc = include_str!("../../../book/src/crosstest.md")]
    mod crosstest {}
    #[doc = include_str!("../../../book/src/reports.md")]
    mod reports {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
