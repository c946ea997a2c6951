//! Domain-randomized synthesis of fetal brain MR training volumes.
//!
//! The crate turns tissue label maps (plus the intensity image they were
//! drawn on) into streams of randomized synthetic volumes, and ships the
//! tooling around that: an extended-phase-graph contrast renderer,
//! checkpoint weight interpolation, and segmentation evaluation.

pub mod augment;
pub mod epg;
pub mod error;
mod fsutil;
pub mod labels;
pub mod metrics;
pub mod phantom;
pub mod rng;
pub mod soup;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
pub use fsutil::atomic_write;
