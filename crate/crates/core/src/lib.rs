//! Measures how closely a monocular depth estimator's error pattern tracks
//! human depth judgments.
//!
//! The crate covers the whole analysis path: evaluation-point sampling on
//! sparse ground truth, screening of unreliable observers, per-image scale
//! recovery, half-split partial-correlation similarity, per-image affine
//! decomposition of errors, and the accuracy versus human-likeness
//! trade-off report. [`synth`] generates planted populations that exercise
//! every stage end to end.
//!
//! Data-parallel loops (bootstrap iterations, per-scene fits, per-observer
//! reliabilities) run on rayon when the default `parallel` feature is
//! enabled and fall back to sequential iteration otherwise. Results are
//! identical either way.

pub mod affine;
pub mod data;
pub mod error;
pub mod io;
pub mod numeric;
pub mod par;
pub mod rng;
pub mod sampler;
pub mod scale;
pub mod screening;
pub mod similarity;
pub mod stats;
pub mod synth;
pub mod tradeoff;

pub use error::{Error, Result};
