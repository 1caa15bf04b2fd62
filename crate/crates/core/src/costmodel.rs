//! Closed-form per-stage cost of the three execution plans.
//!
//! Every stage is described by its scalar computation, the number of
//! elements it moves and its parallelization factor (PF, the number of tasks
//! that can run at once). A stage costs `(computation + w * communication) /
//! PF` abstract units, with `w = 1` unless configured otherwise. All
//! arithmetic is exact; powers of 7 are never approximated by `b^2.8`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algo {
    Mllib,
    Marlin,
    Stark,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::Mllib, Algo::Marlin, Algo::Stark];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Mllib => "mllib",
            Algo::Marlin => "marlin",
            Algo::Stark => "stark",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown cost model {s:?}")))
    }
}

/// `n = 2^p` rows, `b = 2^(p-q)` splits per side, `cores` physical cores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CostParams {
    n: u64,
    b: u64,
    cores: u64,
}

impl CostParams {
    pub fn new(n: u64, b: u64, cores: u64) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo {
                what: "matrix dimension",
                value: n as usize,
            });
        }
        if b == 0 || !b.is_power_of_two() {
            return Err(Error::NotPowerOfTwo {
                what: "split count",
                value: b as usize,
            });
        }
        if b > n {
            return Err(Error::InvalidParams(format!("{b} splits exceed dimension {n}")));
        }
        if cores == 0 {
            return Err(Error::InvalidParams("cores must be at least 1".into()));
        }
        Ok(CostParams { n, b, cores })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn b(&self) -> u64 {
        self.b
    }

    pub fn cores(&self) -> u64 {
        self.cores
    }

    pub fn p(&self) -> u32 {
        self.n.trailing_zeros()
    }

    pub fn q(&self) -> u32 {
        self.p() - self.levels()
    }

    /// Recursion levels `p - q = log2(b)`.
    pub fn levels(&self) -> u32 {
        self.b.trailing_zeros()
    }

    /// Block side `n / b`.
    pub fn block_size(&self) -> u64 {
        self.n / self.b
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageCost {
    pub label: String,
    pub computation: BigRational,
    pub communication: BigRational,
    pub parallelization_factor: BigRational,
    pub wall_units: BigRational,
}

impl StageCost {
    fn new(
        label: impl Into<String>,
        computation: BigRational,
        communication: BigRational,
        parallelization_factor: BigRational,
        comm_weight: &BigRational,
    ) -> Self {
        let wall_units = (&computation + comm_weight * &communication) / &parallelization_factor;
        StageCost {
            label: label.into(),
            computation,
            communication,
            parallelization_factor,
            wall_units,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub algo: Algo,
    pub params: CostParams,
    pub stages: Vec<StageCost>,
    /// Input loading; listed for completeness, not part of [`Self::total`].
    pub preprocessing: Option<StageCost>,
}

impl CostReport {
    pub fn total(&self) -> BigRational {
        self.stages.iter().map(|s| &s.wall_units).sum()
    }
}

fn int(v: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

fn big_pow(base: u64, exp: u32) -> BigRational {
    BigRational::from_integer(BigInt::from(base).pow(exp))
}

/// `(num/den)^exp`
fn ratio_pow(num: u64, den: u64, exp: u32) -> BigRational {
    BigRational::new(BigInt::from(num).pow(exp), BigInt::from(den).pow(exp))
}

fn min(x: BigRational, y: BigRational) -> BigRational {
    if x <= y {
        x
    } else {
        y
    }
}

fn zero() -> BigRational {
    BigRational::zero()
}

/// Stark's stage count `2 log2(b) + 2`.
pub fn stages_stark(params: &CostParams) -> u32 {
    2 * params.levels() + 2
}

pub fn cost(algo: Algo, params: &CostParams) -> CostReport {
    cost_weighted(algo, params, &BigRational::one())
}

/// Like [`cost`] with communication scaled by `comm_weight` in every stage.
pub fn cost_weighted(algo: Algo, params: &CostParams, comm_weight: &BigRational) -> CostReport {
    let (stages, preprocessing) = match algo {
        Algo::Mllib => (mllib_stages(params, comm_weight), None),
        Algo::Marlin => (marlin_stages(params, comm_weight), None),
        Algo::Stark => stark_stages(params, comm_weight),
    };
    CostReport {
        algo,
        params: *params,
        stages,
        preprocessing,
    }
}

pub fn cost_mllib(params: &CostParams) -> CostReport {
    cost(Algo::Mllib, params)
}

pub fn cost_marlin(params: &CostParams) -> CostReport {
    cost(Algo::Marlin, params)
}

pub fn cost_stark(params: &CostParams) -> CostReport {
    cost(Algo::Stark, params)
}

fn mllib_stages(p: &CostParams, w: &BigRational) -> Vec<StageCost> {
    let (n, b, c) = (p.n, p.b, p.cores);
    let n2 = int(n * n);
    let b3 = big_pow(b, 3);
    let pf = min(int(b * b), int(c));
    vec![
        // Block-to-partition simulation, run on the driver.
        StageCost::new("simulation", zero(), int(2) * &n2 / int(b * b), int(1), w),
        StageCost::new("stage1-flatMap-A", b3.clone(), zero(), pf.clone(), w),
        StageCost::new("stage1-flatMap-B", b3.clone(), zero(), pf.clone(), w),
        StageCost::new(
            "stage3-coGroup",
            zero(),
            int(2) * int(b.min(c)) * &n2,
            pf.clone(),
            w,
        ),
        StageCost::new(
            "stage3-flatMap",
            b3 * big_pow(p.block_size(), 3),
            zero(),
            pf.clone(),
            w,
        ),
        StageCost::new("stage4-reduceByKey", int(b) * n2, zero(), pf, w),
    ]
}

fn marlin_stages(p: &CostParams, w: &BigRational) -> Vec<StageCost> {
    let (n, b, c) = (p.n, p.b, p.cores);
    let n2 = int(n * n);
    let b3 = big_pow(b, 3);
    let pf_rep = min(int(2 * b * b), int(c));
    let pf_join = min(b3.clone(), int(c));
    let pf_red = min(int(b * b), int(c));
    let rep_comp = int(2) * &b3;
    let rep_comm = int(2 * b) * &n2;
    vec![
        StageCost::new("stage1-flatMap-A", rep_comp.clone(), rep_comm.clone(), pf_rep.clone(), w),
        StageCost::new("stage1-flatMap-B", rep_comp, rep_comm, pf_rep, w),
        StageCost::new("stage3-join", zero(), int(b) * &n2, pf_join.clone(), w),
        StageCost::new(
            "stage3-mapPartition",
            b3 * big_pow(p.block_size(), 3),
            zero(),
            pf_join,
            w,
        ),
        StageCost::new("stage4-reduceByKey", zero(), int(b) * n2, pf_red, w),
    ]
}

/// Per-level rows for the divide levels, the leaf stage and the combine
/// levels, in that order. Divide and combine level `i` run on the `7^i`
/// sub-problems at depth `i` and produce or consume the `7^(i+1)` at depth
/// `i + 1`; both are listed with ascending `i`.
fn stark_stages(p: &CostParams, w: &BigRational) -> (Vec<StageCost>, Option<StageCost>) {
    let (n, b, c) = (p.n, p.b, p.cores);
    let levels = p.levels();
    let cores = int(c);
    let n2 = int(n * n);
    let b2 = int(b * b);
    let s = p.block_size();
    let mut out = Vec::new();

    let pre = StageCost::new("preprocess", zero(), int(6) * &n2, min(int(1), cores.clone()), w);

    for i in 0..levels {
        let pf_split = min(big_pow(7, i + 1), cores.clone());
        let flat = ratio_pow(7, 4, i) * int(2) * &b2;
        out.push(StageCost::new(
            format!("divide[{i}]-flatMap"),
            flat.clone(),
            zero(),
            min(flat, cores.clone()),
            w,
        ));
        out.push(StageCost::new(
            format!("divide[{i}]-groupByKey"),
            zero(),
            int(3) * ratio_pow(7, 2, i) * int(2) * &n2,
            pf_split.clone(),
            w,
        ));
        out.push(StageCost::new(
            format!("divide[{i}]-add"),
            ratio_pow(7, 4, i + 1) * &n2,
            zero(),
            pf_split,
            w,
        ));
    }

    let leaves = big_pow(7, levels);
    let pf_leaf = min(leaves.clone(), cores.clone());
    out.push(StageCost::new("leaf-map", int(2) * &leaves, zero(), pf_leaf.clone(), w));
    out.push(StageCost::new(
        "leaf-groupByKey",
        zero(),
        int(2) * &leaves * int(s * s),
        pf_leaf.clone(),
        w,
    ));
    out.push(StageCost::new(
        "leaf-flatMap",
        &leaves * big_pow(s, 3),
        zero(),
        pf_leaf,
        w,
    ));

    for i in 0..levels {
        let pf = min(big_pow(7, i + 1), cores.clone());
        let grow = ratio_pow(7, 4, i + 1);
        out.push(StageCost::new(format!("combine[{i}]-map"), &grow * &b2, zero(), pf.clone(), w));
        out.push(StageCost::new(
            format!("combine[{i}]-groupByKey"),
            zero(),
            &grow * &n2,
            pf.clone(),
            w,
        ));
        out.push(StageCost::new(
            format!("combine[{i}]-flatMap"),
            big_pow(7, i + 1) * int(12 * s * s),
            zero(),
            pf,
            w,
        ));
    }
    (out, Some(pre))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeafAlgo {
    Stark,
    NaiveBlock,
}

/// Block multiplications performed at the leaves: `7^log2(b)` or `b^3`.
pub fn leaf_multiplications(algo: LeafAlgo, b: u64) -> u128 {
    let b = u128::from(b);
    match algo {
        LeafAlgo::Stark => 7u128.pow(b.trailing_zeros()),
        LeafAlgo::NaiveBlock => b.pow(3),
    }
}

/// Scalars per input matrix alive after `level` divide levels: `3^level n^2`.
pub fn peak_block_footprint(n: u64, level: u32) -> u128 {
    3u128.pow(level) * u128::from(n) * u128::from(n)
}

/// The split count in `b_range` with the lowest total; ties go to the
/// smaller split count.
pub fn optimal_partition(algo: Algo, n: u64, cores: u64, b_range: &[u64]) -> Result<u64> {
    let mut best: Option<(BigRational, u64)> = None;
    for &b in b_range {
        let total = cost(algo, &CostParams::new(n, b, cores)?).total();
        let better = match &best {
            None => true,
            Some((t, bb)) => total < *t || (total == *t && b < *bb),
        };
        if better {
            best = Some((total, b));
        }
    }
    best.map(|(_, b)| b).ok_or(Error::EmptyRange)
}

pub const COST_HEADER: [&str; 9] = [
    "algo",
    "n",
    "b",
    "cores",
    "stage",
    "computation",
    "communication",
    "pf",
    "wall_units",
];

#[derive(Serialize)]
struct CostRow<'a> {
    algo: &'a str,
    n: u64,
    b: u64,
    cores: u64,
    stage: &'a str,
    computation: String,
    communication: String,
    pf: String,
    wall_units: String,
}

fn f(x: &BigRational) -> String {
    x.to_f64().unwrap_or(f64::INFINITY).to_string()
}

/// One row per stage plus a `TOTAL` row per report. The preprocessing row
/// is not written since it is not part of the total.
pub fn write_cost_csv<W: Write>(w: W, reports: &[CostReport]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(COST_HEADER)?;
    for r in reports {
        let p = r.params;
        for s in &r.stages {
            out.serialize(CostRow {
                algo: r.algo.name(),
                n: p.n,
                b: p.b,
                cores: p.cores,
                stage: &s.label,
                computation: f(&s.computation),
                communication: f(&s.communication),
                pf: f(&s.parallelization_factor),
                wall_units: f(&s.wall_units),
            })?;
        }
        let comp: BigRational = r.stages.iter().map(|s| &s.computation).sum();
        let comm: BigRational = r.stages.iter().map(|s| &s.communication).sum();
        out.serialize(CostRow {
            algo: r.algo.name(),
            n: p.n,
            b: p.b,
            cores: p.cores,
            stage: "TOTAL",
            computation: f(&comp),
            communication: f(&comm),
            pf: String::new(),
            wall_units: f(&r.total()),
        })?;
    }
    out.flush()?;
    Ok(())
}
