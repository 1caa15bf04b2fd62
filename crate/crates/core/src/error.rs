use std::io;

use thiserror::Error;

use crate::blockmat::Label;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} must be a power of two, got {value}")]
    NotPowerOfTwo { what: &'static str, value: usize },

    #[error("block size {block_size} exceeds matrix dimension {n}")]
    BlockLargerThanMatrix { block_size: usize, n: usize },

    #[error("entry ({row}, {col}) is outside a {n}x{n} matrix")]
    IndexOutOfRange { row: usize, col: usize, n: usize },

    #[error("duplicate entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },

    #[error("block size mismatch: {left} vs {right}")]
    BlockSizeMismatch { left: usize, right: usize },

    #[error("block position mismatch: ({0}, {1}) vs ({2}, {3})")]
    PositionMismatch(usize, usize, usize, usize),

    #[error("block ({row}, {col}) is missing")]
    MissingBlock { row: usize, col: usize },

    #[error("block ({row}, {col}) appears more than once")]
    DuplicateBlock { row: usize, col: usize },

    #[error("block ({row}, {col}) lies outside a {grid}x{grid} block grid")]
    BlockOutOfGrid { row: usize, col: usize, grid: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid threshold {threshold} for a {n}x{n} matrix")]
    InvalidThreshold { threshold: usize, n: usize },

    #[error("unexpected block label {found:?} in {phase}")]
    UnexpectedLabel { found: Label, phase: &'static str },

    #[error("malformed group in {phase}: {detail}")]
    MalformedGroup { phase: &'static str, detail: String },

    #[error("task failed in stage {stage}, partition {partition}, element {offset}: {message}")]
    Task {
        stage: usize,
        partition: usize,
        offset: usize,
        message: String,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("empty partition range")]
    EmptyRange,

    #[error("estimated peak memory {required_bytes} bytes exceeds the cap of {cap_bytes} bytes")]
    MemoryGuard { required_bytes: u128, cap_bytes: u128 },

    #[error("thread pool: {0}")]
    ThreadPool(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
