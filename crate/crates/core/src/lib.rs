//! Block-matrix multiplication on a small stage-based dataflow engine.
//!
//! The main entry point is [`strassen::dist_strassen`], which runs the
//! Strassen recursion level by level as shuffle stages over a [`Dataset`] of
//! [`Block`]s. [`baseline`] holds the naive block-multiply strategies it is
//! compared against, and [`costmodel`] predicts per-stage computation and
//! communication for all three.

pub mod baseline;
pub mod blockmat;
pub mod cli;
pub mod coordfile;
pub mod costmodel;
pub mod dataflow;
pub mod driver;
pub mod error;
pub mod serial;
pub mod strassen;

pub use blockmat::{Block, BlockMatrix, Dense, Label, Quadrant, Tag};
pub use dataflow::{Dataset, Engine, EngineConfig, StageMetrics};
pub use error::{Error, Result};
pub use strassen::{dist_strassen, DistRun, LeafKernel, StrassenOptions};
