pub mod crosstest;
pub mod maps;
pub mod mse;
pub mod report;
pub mod saliency;
pub mod subexp;
