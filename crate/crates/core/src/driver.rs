//! One multiplication run from dense operands to a dense product, with
//! timing, counters and the memory guard shared by the command line and the
//! C interface.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use clap::ValueEnum;

use crate::baseline::{naive_block_multiply, Strategy};
use crate::blockmat::{BlockMatrix, Dense, Label};
use crate::costmodel::{self, peak_block_footprint};
use crate::dataflow::{Engine, EngineConfig, StageMetrics};
use crate::error::{Error, Result};
use crate::serial;
use crate::strassen::{dist_strassen, LeafKernel, StrassenOptions};

pub const MEM_CAP_ENV: &str = "STARK_MEM_CAP_BYTES";
pub const DEFAULT_MEM_CAP: u128 = 4 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, ValueEnum)]
pub enum Algorithm {
    Stark,
    NaiveBlockJoin,
    NaiveBlockCogroup,
    SerialStrassen,
    SerialNaive,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Stark,
        Algorithm::NaiveBlockJoin,
        Algorithm::NaiveBlockCogroup,
        Algorithm::SerialStrassen,
        Algorithm::SerialNaive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Stark => "stark",
            Algorithm::NaiveBlockJoin => "naive-block-join",
            Algorithm::NaiveBlockCogroup => "naive-block-cogroup",
            Algorithm::SerialStrassen => "serial-strassen",
            Algorithm::SerialNaive => "serial-naive",
        }
    }

    pub fn is_distributed(self) -> bool {
        matches!(
            self,
            Algorithm::Stark | Algorithm::NaiveBlockJoin | Algorithm::NaiveBlockCogroup
        )
    }

    /// Cost model describing the same execution plan.
    pub fn model(self) -> Option<costmodel::Algo> {
        match self {
            Algorithm::Stark => Some(costmodel::Algo::Stark),
            Algorithm::NaiveBlockJoin => Some(costmodel::Algo::Marlin),
            Algorithm::NaiveBlockCogroup => Some(costmodel::Algo::Mllib),
            Algorithm::SerialStrassen | Algorithm::SerialNaive => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    /// Block side for the distributed algorithms, recursion cutoff for
    /// serial Strassen, ignored by the serial triple loop.
    pub block_size: usize,
    pub workers: usize,
    pub seed: u64,
    pub kernel: LeafKernel,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, block_size: usize) -> Self {
        RunConfig {
            algorithm,
            block_size,
            workers: EngineConfig::default().workers,
            seed: 0,
            kernel: LeafKernel::Naive,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub product: Dense,
    pub leaf_multiplies: u64,
    pub stages: Vec<StageMetrics>,
    pub wall: Duration,
}

impl RunOutcome {
    pub fn flops(&self) -> u64 {
        self.stages.iter().map(|s| s.flops).sum()
    }

    pub fn shuffled_elements(&self) -> u64 {
        self.stages.iter().map(|s| s.shuffled_elements).sum()
    }
}

/// Scalars held per operand at the algorithm's widest point.
pub fn peak_scalars(algorithm: Algorithm, n: usize, block_size: usize) -> u128 {
    let n = n as u64;
    let splits = (n / block_size.max(1) as u64).max(1);
    match algorithm {
        Algorithm::Stark => peak_block_footprint(n, splits.trailing_zeros()),
        Algorithm::NaiveBlockJoin | Algorithm::NaiveBlockCogroup => {
            u128::from(splits) * u128::from(n) * u128::from(n)
        }
        Algorithm::SerialStrassen | Algorithm::SerialNaive => u128::from(n) * u128::from(n),
    }
}

/// Cap from the environment, or [`DEFAULT_MEM_CAP`].
pub fn memory_cap() -> Result<u128> {
    match std::env::var(MEM_CAP_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParams(format!("{MEM_CAP_ENV}={v:?} is not a byte count"))),
        Err(_) => Ok(DEFAULT_MEM_CAP),
    }
}

/// Refuses runs whose two operands would need more than `cap` bytes.
pub fn check_memory(algorithm: Algorithm, n: usize, block_size: usize, cap: u128) -> Result<()> {
    let required_bytes = peak_scalars(algorithm, n, block_size) * 2 * 8;
    if required_bytes > cap {
        return Err(Error::MemoryGuard {
            required_bytes,
            cap_bytes: cap,
        });
    }
    Ok(())
}

pub fn run(a: &Dense, b: &Dense, cfg: &RunConfig) -> Result<RunOutcome> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", a.n(), b.n())));
    }
    let start = Instant::now();
    let (product, leaf_multiplies, stages) = match cfg.algorithm {
        Algorithm::SerialNaive => (serial::naive_multiply(a, b)?, 1, Vec::new()),
        Algorithm::SerialStrassen => {
            let r = serial::serial_strassen(a, b, cfg.block_size)?;
            (r.product, r.base_multiplies, Vec::new())
        }
        distributed => {
            let engine = Engine::new(EngineConfig {
                workers: cfg.workers,
                seed: cfg.seed,
            })?;
            let ba = BlockMatrix::from_dense(a, cfg.block_size, Label::A)?;
            let bb = BlockMatrix::from_dense(b, cfg.block_size, Label::B)?;
            let (blocks, leaves) = match distributed {
                Algorithm::Stark => {
                    let r = dist_strassen(&engine, &ba, &bb, StrassenOptions { kernel: cfg.kernel })?;
                    (r.product, r.leaf_multiplies)
                }
                Algorithm::NaiveBlockJoin | Algorithm::NaiveBlockCogroup => {
                    let strategy = if distributed == Algorithm::NaiveBlockJoin {
                        Strategy::ReplicateJoin
                    } else {
                        Strategy::Cogroup
                    };
                    let r = naive_block_multiply(&engine, &ba, &bb, strategy, cfg.kernel)?;
                    (r.product, r.leaf_multiplies)
                }
                _ => unreachable!(),
            };
            (blocks.to_dense()?, leaves, engine.metrics())
        }
    };
    Ok(RunOutcome {
        product,
        leaf_multiplies,
        stages,
        wall: start.elapsed(),
    })
}
