//! The `stark` command line: matrix generation, multiplication runs, cost
//! tables, benchmarks and oracle verification.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::blockmat::{BlockMatrix, Dense, Label};
use crate::coordfile::{self, Entry};
use crate::costmodel::{self, CostParams};
use crate::dataflow::{write_metrics_csv, EngineConfig};
use crate::driver::{self, Algorithm, RunConfig};
use crate::error::{Error, Result};
use crate::serial;
use crate::strassen::LeafKernel;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stark", version, about = "Distributed Strassen block-matrix multiplication")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a random n x n matrix in coordinate format.
    Gen(GenArgs),
    /// Multiply two coordinate files.
    Multiply(MultiplyArgs),
    /// Evaluate the per-stage cost model.
    Cost(CostArgs),
    /// Time the distributed algorithms over a parameter grid.
    Bench(BenchArgs),
    /// Check every algorithm against the triple-loop product.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    /// Probability that an entry is stored.
    #[arg(long, default_value_t = 1.0)]
    pub density: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Naive,
    Strassen,
}

#[derive(Debug, Args)]
pub struct MultiplyArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long, value_enum, default_value_t = Algorithm::Stark)]
    pub algo: Algorithm,
    /// Block side; for serial-strassen, the size at which recursion stops.
    #[arg(long)]
    pub block_size: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Matrix dimension; inferred from the largest index when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum, default_value_t = KernelArg::Naive)]
    pub leaf_kernel: KernelArg,
    #[arg(long, default_value_t = serial::DEFAULT_THRESHOLD)]
    pub leaf_threshold: usize,
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CostAlgo {
    Mllib,
    Marlin,
    Stark,
    All,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long, value_enum, default_value_t = CostAlgo::All)]
    pub algo: CostAlgo,
    #[arg(long)]
    pub n: u64,
    /// Split count (blocks per side).
    #[arg(long, conflicts_with = "b_range", required_unless_present = "b_range")]
    pub b: Option<u64>,
    /// Inclusive range of split counts, `lo:hi`, both powers of two.
    #[arg(long, value_parser = parse_b_range)]
    pub b_range: Option<SplitRange>,
    #[arg(long)]
    pub cores: u64,
    /// Weight of one communicated element relative to one scalar operation.
    #[arg(long, default_value_t = 1.0)]
    pub comm_weight: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub block_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub workers: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "stark,naive-block-join,naive-block-cogroup")]
    pub algos: Vec<Algorithm>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Matrix dimensions, paired element-wise with `--b-list`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<usize>,
    /// Split counts, one per entry of `--n-list`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub b_list: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub workers: Option<usize>,
}

/// Consecutive powers of two given on the command line as `lo:hi`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitRange(pub Vec<u64>);

fn parse_b_range(s: &str) -> std::result::Result<SplitRange, String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let lo: u64 = lo.parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: u64 = hi.parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if !lo.is_power_of_two() || !hi.is_power_of_two() {
        return Err("range bounds must be powers of two".into());
    }
    if lo > hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok(SplitRange(
        std::iter::successors(Some(lo), |b| b.checked_mul(2))
            .take_while(|b| *b <= hi)
            .collect(),
    ))
}

/// Row-major scan: each entry is kept with probability `density` and
/// drawn from U(-1, 1).
pub fn generate_entries(n: usize, density: f64, seed: u64) -> Result<Vec<Entry>> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidParams(format!("density {density} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for r in 0..n {
        for c in 0..n {
            let keep = rng.gen::<f64>() < density;
            let v = rng.gen_range(-1.0..1.0);
            if keep {
                out.push((r, c, v));
            }
        }
    }
    Ok(out)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MemoryGuard { .. } => EXIT_RESOURCE,
        _ => EXIT_USAGE,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(&a, out),
        Command::Multiply(a) => cmd_multiply(&a, out),
        Command::Cost(a) => cmd_cost(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> Result<i32> {
    let entries = generate_entries(args.n, args.density, args.seed)?;
    coordfile::write_entries(create(&args.out)?, entries.iter().copied())?;
    writeln!(out, "wrote {} entries to {}", entries.len(), args.out.display())?;
    Ok(EXIT_OK)
}

fn load(path: &Path) -> Result<Vec<Entry>> {
    coordfile::read_entries(path).map_err(|e| match e {
        Error::Io(io) => Error::InvalidParams(format!("{}: {io}", path.display())),
        other => other,
    })
}

fn densify(entries: &[Entry], n: usize) -> Result<Dense> {
    BlockMatrix::from_coordinate_entries(entries, n, n, Label::A)?.to_dense()
}

fn cmd_multiply(args: &MultiplyArgs, out: &mut dyn Write) -> Result<i32> {
    let ea = load(&args.a)?;
    let eb = load(&args.b)?;
    let inferred = coordfile::infer_dimension([&ea[..], &eb[..]]);
    let n = match args.n {
        Some(n) if n < inferred => {
            return Err(Error::InvalidParams(format!(
                "--n {n} is smaller than the indices in the inputs require ({inferred})"
            )))
        }
        Some(n) => n,
        None => inferred,
    };
    let block_size = match (args.algo, args.block_size) {
        (_, Some(bs)) => bs,
        (Algorithm::SerialStrassen, None) => serial::DEFAULT_THRESHOLD.min(n),
        (Algorithm::SerialNaive, None) => n,
        (algo, None) => {
            return Err(Error::InvalidParams(format!("--block-size is required for {algo}")))
        }
    };
    driver::check_memory(args.algo, n, block_size, driver::memory_cap()?)?;

    let a = densify(&ea, n)?;
    let b = densify(&eb, n)?;
    let kernel = match args.leaf_kernel {
        KernelArg::Naive => LeafKernel::Naive,
        KernelArg::Strassen => LeafKernel::Strassen {
            threshold: args.leaf_threshold,
        },
    };
    let cfg = RunConfig {
        algorithm: args.algo,
        block_size,
        workers: args.workers.unwrap_or_else(|| EngineConfig::default().workers),
        seed: args.seed,
        kernel,
    };
    let outcome = driver::run(&a, &b, &cfg)?;

    if let Some(path) = &args.out {
        coordfile::write_dense(path, &outcome.product)?;
    }
    if let Some(path) = &args.metrics_out {
        write_metrics_csv(create(path)?, &outcome.stages)?;
    }
    writeln!(out, "algorithm: {}", args.algo)?;
    writeln!(out, "n: {n}")?;
    writeln!(out, "wall_ms: {:.3}", outcome.wall.as_secs_f64() * 1e3)?;
    writeln!(out, "leaf_multiplications: {}", outcome.leaf_multiplies)?;
    writeln!(out, "stages: {}", outcome.stages.len())?;
    Ok(EXIT_OK)
}

fn cmd_cost(args: &CostArgs, out: &mut dyn Write) -> Result<i32> {
    let algos: Vec<costmodel::Algo> = match args.algo {
        CostAlgo::Mllib => vec![costmodel::Algo::Mllib],
        CostAlgo::Marlin => vec![costmodel::Algo::Marlin],
        CostAlgo::Stark => vec![costmodel::Algo::Stark],
        CostAlgo::All => costmodel::Algo::ALL.to_vec(),
    };
    let range = match (&args.b_range, args.b) {
        (Some(r), _) => r.0.clone(),
        (None, Some(b)) => vec![b],
        (None, None) => return Err(Error::EmptyRange),
    };
    let weight = BigRational::from_float(args.comm_weight)
        .filter(|w| w >= &BigRational::from_integer(0.into()))
        .ok_or_else(|| Error::InvalidParams(format!("bad --comm-weight {}", args.comm_weight)))?;

    let mut reports = Vec::new();
    for &algo in &algos {
        for &b in &range {
            let params = CostParams::new(args.n, b, args.cores)?;
            reports.push(costmodel::cost_weighted(algo, &params, &weight));
        }
    }
    match &args.out {
        Some(path) => {
            costmodel::write_cost_csv(create(path)?, &reports)?;
            if range.len() > 1 {
                for algo in &algos {
                    let best = reports
                        .iter()
                        .filter(|r| r.algo == *algo)
                        .min_by(|x, y| x.total().cmp(&y.total()).then(x.params.b().cmp(&y.params.b())))
                        .expect("non-empty range");
                    writeln!(out, "{algo}: lowest total at b={}", best.params.b())?;
                }
            }
        }
        None => costmodel::write_cost_csv(&mut *out, &reports)?,
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct BenchRow {
    algo: &'static str,
    n: usize,
    block_size: usize,
    b: usize,
    workers: usize,
    rep: usize,
    wall_ms: f64,
    stages: usize,
    leaf_multiplies: u64,
    flops: u64,
    shuffled_elements: u64,
    model: &'static str,
    model_wall_units: f64,
}

fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<i32> {
    let sink: Box<dyn Write + '_> = match &args.out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(&mut *out),
    };
    let mut w = csv::Writer::from_writer(sink);
    let cap = driver::memory_cap()?;
    for &n in &args.sizes {
        let a = Dense::random(n, args.seed);
        let b = Dense::random(n, args.seed.wrapping_add(1));
        for &bs in &args.block_sizes {
            if bs == 0 || bs > n {
                continue;
            }
            for &algo in &args.algos {
                driver::check_memory(algo, n, bs, cap)?;
                for &workers in &args.workers {
                    let (model, model_wall) = match algo.model() {
                        Some(m) => {
                            let p = CostParams::new(n as u64, (n / bs) as u64, workers as u64)?;
                            let total = costmodel::cost(m, &p).total();
                            (m.name(), total.to_f64().unwrap_or(f64::INFINITY))
                        }
                        None => ("", f64::NAN),
                    };
                    for rep in 0..args.reps {
                        let cfg = RunConfig {
                            algorithm: algo,
                            block_size: bs,
                            workers,
                            seed: args.seed,
                            kernel: LeafKernel::Naive,
                        };
                        let o = driver::run(&a, &b, &cfg)?;
                        w.serialize(BenchRow {
                            algo: algo.name(),
                            n,
                            block_size: bs,
                            b: n / bs,
                            workers,
                            rep,
                            wall_ms: o.wall.as_secs_f64() * 1e3,
                            stages: o.stages.len(),
                            leaf_multiplies: o.leaf_multiplies,
                            flops: o.flops(),
                            shuffled_elements: o.shuffled_elements(),
                            model,
                            model_wall_units: model_wall,
                        })?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(EXIT_OK)
}

/// One algorithm's verdict in a verification case.
#[derive(Clone, Debug)]
pub struct CaseCheck {
    pub n: usize,
    pub splits: usize,
    pub algorithm: Algorithm,
    pub max_rel_error: f64,
    pub leaf_multiplies: u64,
    pub expected_leaves: u64,
    pub stages: usize,
    pub expected_stages: Option<usize>,
}

impl CaseCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= 1e-9
            && self.leaf_multiplies == self.expected_leaves
            && self.expected_stages.is_none_or(|s| s == self.stages)
    }
}

/// Runs every algorithm on seeded inputs of size `n` split `splits` ways
/// per side and compares against the triple loop.
pub fn verify_case(n: usize, splits: usize, seed: u64, workers: usize) -> Result<Vec<CaseCheck>> {
    if splits == 0 || !n.is_multiple_of(splits) {
        return Err(Error::InvalidParams(format!("{splits} splits do not divide {n}")));
    }
    let bs = n / splits;
    let levels = splits.trailing_zeros();
    let a = Dense::random(n, seed);
    let b = Dense::random(n, seed.wrapping_add(1));
    let oracle = serial::naive_multiply(&a, &b)?;
    let mut checks = Vec::new();
    for algo in [
        Algorithm::Stark,
        Algorithm::NaiveBlockJoin,
        Algorithm::NaiveBlockCogroup,
        Algorithm::SerialStrassen,
    ] {
        let cfg = RunConfig {
            algorithm: algo,
            block_size: bs,
            workers,
            seed,
            kernel: LeafKernel::Naive,
        };
        let o = driver::run(&a, &b, &cfg)?;
        let (expected_leaves, expected_stages) = match algo {
            Algorithm::Stark => (7u64.pow(levels), Some(2 * levels as usize + 2)),
            Algorithm::SerialStrassen => (7u64.pow(levels), None),
            _ => ((splits as u64).pow(3), Some(3)),
        };
        checks.push(CaseCheck {
            n,
            splits,
            algorithm: algo,
            max_rel_error: o.product.max_rel_error(&oracle),
            leaf_multiplies: o.leaf_multiplies,
            expected_leaves,
            stages: o.stages.len(),
            expected_stages,
        });
    }
    Ok(checks)
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    if args.n_list.len() != args.b_list.len() {
        return Err(Error::InvalidParams(format!(
            "--n-list has {} entries but --b-list has {}",
            args.n_list.len(),
            args.b_list.len()
        )));
    }
    let workers = args.workers.unwrap_or_else(|| EngineConfig::default().workers);
    let cap = driver::memory_cap()?;
    let mut failures = 0;
    for (&n, &splits) in args.n_list.iter().zip(&args.b_list) {
        if splits == 0 || !n.is_multiple_of(splits) {
            return Err(Error::InvalidParams(format!("{splits} splits do not divide {n}")));
        }
        driver::check_memory(Algorithm::Stark, n, n / splits, cap)?;
        driver::check_memory(Algorithm::NaiveBlockJoin, n, n / splits, cap)?;
        for c in verify_case(n, splits, args.seed, workers)? {
            let verdict = if c.passed() { "PASS" } else { "FAIL" };
            if !c.passed() {
                failures += 1;
            }
            writeln!(
                out,
                "{verdict} n={} b={} {}: max_rel_error={:.3e} leaves={}/{} stages={}{}",
                c.n,
                c.splits,
                c.algorithm,
                c.max_rel_error,
                c.leaf_multiplies,
                c.expected_leaves,
                c.stages,
                c.expected_stages.map(|s| format!("/{s}")).unwrap_or_default(),
            )?;
        }
    }
    writeln!(out, "{failures} failure(s)")?;
    Ok(if failures == 0 { EXIT_OK } else { EXIT_VERIFY })
}
