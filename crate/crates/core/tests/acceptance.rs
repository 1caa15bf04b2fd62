//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line per criterion and exits non-zero if any failed.
//!
//! Any non-flag command-line argument is treated as a substring filter on
//! the criterion names.

use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Duration;

use num_bigint::BigInt;
use num_rational::BigRational;

use stark_core::blockmat::{Block, BlockMatrix, Dense, Label, Quadrant, Tag};
use stark_core::coordfile;
use stark_core::costmodel::{self, Algo, CostParams, LeafAlgo};
use stark_core::driver::{self, Algorithm, RunConfig};
use stark_core::serial;
use stark_core::strassen::{self, dist_strassen, StrassenOptions};
use stark_core::Engine;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

/// Independent reference: transpose B, then a plain dot product per entry.
fn oracle(a: &Dense, b: &Dense) -> Dense {
    let n = a.n();
    let mut bt = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            bt[j * n + i] = b.get(i, j);
        }
    }
    let av = a.as_slice();
    let mut c = Dense::zeros(n);
    for i in 0..n {
        let row = &av[i * n..(i + 1) * n];
        for j in 0..n {
            let col = &bt[j * n..(j + 1) * n];
            let mut s = 0.0;
            for k in 0..n {
                s += row[k] * col[k];
            }
            c.set(i, j, s);
        }
    }
    c
}

fn int(v: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    xs[xs.len() / 2]
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

const DISTRIBUTED: [Algorithm; 3] = [
    Algorithm::Stark,
    Algorithm::NaiveBlockJoin,
    Algorithm::NaiveBlockCogroup,
];

struct CaseRun {
    n: usize,
    splits: usize,
    algorithm: Algorithm,
    max_rel_error: f64,
    leaves: u64,
    stages: usize,
}

/// Every (n, block size, algorithm) of the equivalence grid, run once and
/// shared by the criteria that inspect it.
fn equivalence_runs() -> &'static [CaseRun] {
    static RUNS: OnceLock<Vec<CaseRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut runs = Vec::new();
        for (i, n) in [16usize, 64, 256, 1024].into_iter().enumerate() {
            let a = Dense::random(n, 100 + i as u64);
            let b = Dense::random(n, 200 + i as u64);
            let reference = oracle(&a, &b);
            for splits in [2usize, 4, 8] {
                for algorithm in DISTRIBUTED {
                    let mut cfg = RunConfig::new(algorithm, n / splits);
                    cfg.workers = 2;
                    cfg.seed = 7;
                    let out = driver::run(&a, &b, &cfg).expect("run");
                    runs.push(CaseRun {
                        n,
                        splits,
                        algorithm,
                        max_rel_error: out.product.max_rel_error(&reference),
                        leaves: out.leaf_multiplies,
                        stages: out.stages.len(),
                    });
                }
            }
        }
        runs
    })
}

fn criterion_1() -> Verdict {
    let runs = equivalence_runs();
    let worst = runs
        .iter()
        .max_by(|x, y| x.max_rel_error.total_cmp(&y.max_rel_error))
        .unwrap();
    let failing: Vec<String> = runs
        .iter()
        .filter(|r| r.max_rel_error.is_nan() || r.max_rel_error > 1e-9)
        .map(|r| format!("{} n={} b={}", r.algorithm, r.n, r.splits))
        .collect();
    Verdict::new(
        failing.is_empty() && runs.len() == 36,
        format!(
            "{} runs, worst max_rel_error {:.2e} ({} n={} b={}){}",
            runs.len(),
            worst.max_rel_error,
            worst.algorithm,
            worst.n,
            worst.splits,
            if failing.is_empty() {
                String::new()
            } else {
                format!("; over tolerance: {}", failing.join(", "))
            }
        ),
    )
}

fn criterion_2() -> Verdict {
    let mut bad = Vec::new();
    for r in equivalence_runs() {
        let levels = r.splits.trailing_zeros();
        let expected = match r.algorithm {
            Algorithm::Stark => 7u64.pow(levels),
            _ => (r.splits as u64).pow(3),
        };
        let algo = if r.algorithm == Algorithm::Stark {
            LeafAlgo::Stark
        } else {
            LeafAlgo::NaiveBlock
        };
        let modelled = costmodel::leaf_multiplications(algo, r.splits as u64);
        if r.leaves != expected || u128::from(r.leaves) != modelled {
            bad.push(format!("{} n={} b={}: {}", r.algorithm, r.n, r.splits, r.leaves));
        }
    }
    let at = |alg| {
        equivalence_runs()
            .iter()
            .find(|r| r.n == 256 && r.splits == 8 && r.algorithm == alg)
            .map(|r| r.leaves)
            .unwrap()
    };
    let (stark, join) = (at(Algorithm::Stark), at(Algorithm::NaiveBlockJoin));
    Verdict::new(
        bad.is_empty() && stark == 343 && join == 512,
        format!("n=256 b=8: {stark} vs {join} leaf multiplications{}", fmt_bad(&bad)),
    )
}

fn fmt_bad(bad: &[String]) -> String {
    if bad.is_empty() {
        String::new()
    } else {
        format!("; mismatches: {}", bad.join(", "))
    }
}

fn criterion_3() -> Verdict {
    let mut bad = Vec::new();
    let mut one_level = Vec::new();
    for r in equivalence_runs().iter().filter(|r| r.algorithm == Algorithm::Stark) {
        let levels = r.splits.trailing_zeros() as usize;
        let params = CostParams::new(r.n as u64, r.splits as u64, 1).unwrap();
        if r.stages != 2 * levels + 2 || r.stages as u32 != costmodel::stages_stark(&params) {
            bad.push(format!("n={} b={}: {}", r.n, r.splits, r.stages));
        }
        if levels == 1 {
            one_level.push(r.stages);
        }
    }
    let ok = bad.is_empty() && !one_level.is_empty() && one_level.iter().all(|s| *s == 4);
    Verdict::new(
        ok,
        format!(
            "one level: {one_level:?} stages; per-level counts 2L+2 for b in {{2,4,8}}{}",
            fmt_bad(&bad)
        ),
    )
}

fn criterion_4() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;

    // Copies per input quadrant.
    for label in [Label::A, Label::B] {
        for (q, (r, c)) in Quadrant::ALL.iter().zip([(0, 0), (0, 1), (1, 0), (1, 1)]) {
            let blk = Block::zeros(r, c, Tag::root(label), 2);
            let copies = strassen::replicate_block(blk, 2, 0).unwrap().len();
            let expected = if matches!(q, Quadrant::Q11 | Quadrant::Q22) { 4 } else { 2 };
            ok &= copies == expected;
            if label == Label::A {
                notes.push(format!("A{q:?}={copies}").replace("AQ", "A"));
            }
        }
    }

    // Per-matrix volume after one divide level.
    let n = 256;
    let a = BlockMatrix::from_dense(&Dense::random(n, 1), 32, Label::A).unwrap();
    let volume: usize = a
        .blocks()
        .iter()
        .flat_map(|b| strassen::replicate_block(b.clone(), 8, 0).unwrap())
        .map(|(_, c)| c.block.size() * c.block.size())
        .sum();
    ok &= volume == 3 * n * n;
    notes.push(format!("per-matrix volume {}n^2", volume / (n * n)));

    // Measured divide shuffles: 3x the volume entering each level.
    let e = Engine::with_workers(2).unwrap();
    let b = BlockMatrix::from_dense(&Dense::random(n, 2), 32, Label::B).unwrap();
    dist_strassen(&e, &a, &b, StrassenOptions::default()).unwrap();
    let stages = e.metrics();
    let mut measured = Vec::new();
    for level in 0..3u32 {
        let entering = 2 * (n * n) as u64 * 7u64.pow(level) / 4u64.pow(level);
        let got = stages[level as usize].shuffled_elements;
        ok &= got == 3 * entering;
        measured.push(format!("{}x", got as f64 / entering as f64));
    }
    notes.push(format!("divide shuffles {}", measured.join("/")));
    Verdict::new(ok, notes.join(", "))
}

fn criterion_5() -> Verdict {
    let mut ok = true;
    for p in 1..=13u32 {
        for l in 0..=p.min(6) {
            let params = CostParams::new(1 << p, 1 << l, 16).unwrap();
            let n3 = int(1u64 << (3 * p));
            let leaf = |algo, label: &str| {
                costmodel::cost(algo, &params)
                    .stages
                    .into_iter()
                    .find(|s| s.label == label)
                    .unwrap()
                    .computation
            };
            let stark_leaf = BigRational::new(BigInt::from(7).pow(l), BigInt::from(8).pow(l)) * &n3;
            ok &= leaf(Algo::Mllib, "stage3-flatMap") == n3;
            ok &= leaf(Algo::Marlin, "stage3-mapPartition") == n3;
            ok &= leaf(Algo::Stark, "leaf-flatMap") == stark_leaf;
        }
    }

    // Hand evaluation for n=16, b=2, cores=4:
    //   simulation 2*256/4 = 128; stages (2*8 + 16^3 + 2*256)/4 = 1156;
    //   coGroup 2*2*256/4 = 256; total 1540.
    //   Marlin: 8*(4+256)/4 = 520; 256*18/4 = 1152; 512/4 = 128; total 1800.
    let p = CostParams::new(16, 2, 4).unwrap();
    let mllib = costmodel::cost_mllib(&p).total();
    let marlin = costmodel::cost_marlin(&p).total();
    let mllib_closed = int(2 * 256) / int(4) + int(2 * 8 + 4096 + 2 * 256) / int(4) + int(2 * 2 * 256) / int(4);
    let marlin_closed = int(4 * 2 * (4 + 256)) / int(4) + int(256 * 18) / int(4) + int(2 * 256) / int(4);
    ok &= mllib == int(1540) && mllib == mllib_closed;
    ok &= marlin == int(1800) && marlin == marlin_closed;
    Verdict::new(
        ok,
        format!("leaf identities for n<=8192, b<=64; MLLib(16,2,4)={mllib}, Marlin(16,2,4)={marlin}"),
    )
}

fn criterion_6() -> Verdict {
    let range = [2u64, 4, 8, 16, 32];
    let mut ok = true;
    let mut notes = Vec::new();
    for algo in Algo::ALL {
        let best = costmodel::optimal_partition(algo, 8192, 25, &range).unwrap();
        ok &= best != range[0] && best != range[range.len() - 1];
        notes.push(format!("{algo} model argmin b={best}"));
    }

    let n = 1024;
    let a = Dense::random(n, 11);
    let b = Dense::random(n, 12);
    let mut times = Vec::new();
    for &splits in &range {
        let mut cfg = RunConfig::new(Algorithm::Stark, n / splits as usize);
        cfg.workers = 4;
        let runs = (0..3)
            .map(|_| driver::run(&a, &b, &cfg).expect("run").wall)
            .collect();
        times.push(median(runs));
    }
    let argmin = (0..times.len()).min_by_key(|&i| times[i]).unwrap();
    let interior = argmin != 0 && argmin != times.len() - 1;
    ok &= interior;
    notes.push(format!(
        "measured stark n=1024 ms by b: {}",
        range
            .iter()
            .zip(&times)
            .map(|(b, t)| format!("{b}:{:.0}", ms(*t)))
            .collect::<Vec<_>>()
            .join(" ")
    ));
    Verdict::new(ok, notes.join("; "))
}

fn criterion_7() -> Verdict {
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut cases = 0;
    for p in 1..=9u32 {
        let n = 1usize << p;
        let a = Dense::random(n, u64::from(p));
        let b = Dense::random(n, u64::from(p) + 50);
        let reference = oracle(&a, &b);
        for levels in 0..=p.min(4) {
            let run = serial::serial_strassen(&a, &b, n >> levels).unwrap();
            let err = run.product.max_rel_error(&reference);
            worst = worst.max(err);
            ok &= run.base_multiplies == 7u64.pow(levels) && err <= 1e-9;
            cases += 1;
        }
    }
    let mut exact = true;
    for p in 1..=6u32 {
        let n = 1usize << p;
        let a = Dense::random_integers(n, 9, u64::from(p));
        let b = Dense::random_integers(n, 9, u64::from(p) + 1);
        let reference = oracle(&a, &b);
        for t in (0..=p).map(|k| 1usize << k) {
            exact &= serial::serial_strassen(&a, &b, t).unwrap().product == reference;
        }
    }
    Verdict::new(
        ok && exact,
        format!("{cases} cases up to n=512, worst max_rel_error {worst:.2e}; integer inputs bit-exact: {exact}"),
    )
}

fn criterion_8() -> Verdict {
    let n = 1024;
    let a = Dense::random(n, 21);
    let b = Dense::random(n, 22);
    let mut medians = Vec::new();
    for workers in [1usize, 2, 4] {
        let mut cfg = RunConfig::new(Algorithm::Stark, n / 8);
        cfg.workers = workers;
        let runs = (0..5)
            .map(|_| driver::run(&a, &b, &cfg).expect("run").wall)
            .collect();
        medians.push(median(runs));
    }
    let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
    let speedup = medians[0].as_secs_f64() / medians[2].as_secs_f64();
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    Verdict::new(
        monotone && speedup >= 1.5,
        format!(
            "median ms at 1/2/4 workers: {:.0}/{:.0}/{:.0}, speedup {:.2} (host has {cores} core(s))",
            ms(medians[0]),
            ms(medians[1]),
            ms(medians[2]),
            speedup
        ),
    )
}

type Counters = Vec<(usize, String, u64, u64, u64, u64, u64)>;

fn criterion_9() -> Verdict {
    let n = 256;
    let a = Dense::random(n, 31);
    let b = Dense::random(n, 32);
    let dir = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for algorithm in DISTRIBUTED {
        let mut reference: Option<(Vec<u8>, Counters)> = None;
        let mut runs = 0;
        for workers in [1usize, 2, 3, 4, 4] {
            let mut cfg = RunConfig::new(algorithm, 32);
            cfg.workers = workers;
            cfg.seed = 5;
            let out = driver::run(&a, &b, &cfg).unwrap();
            let path = dir.path().join(format!("{algorithm}-{workers}-{runs}.txt"));
            coordfile::write_dense(&path, &out.product).unwrap();
            let bytes = std::fs::read(&path).unwrap();
            let counters: Counters = out
                .stages
                .iter()
                .map(|s| {
                    (
                        s.stage_id,
                        s.label.clone(),
                        s.tasks,
                        s.records_in,
                        s.records_out,
                        s.shuffled_elements,
                        s.flops,
                    )
                })
                .collect();
            match &reference {
                None => reference = Some((bytes, counters)),
                Some((rb, rc)) => ok &= *rb == bytes && *rc == counters,
            }
            runs += 1;
        }
        notes.push(format!("{algorithm} x{runs}"));
    }
    Verdict::new(ok, format!("identical files and counters across workers 1,2,3,4,4: {}", notes.join(", ")))
}

type Criterion = fn() -> Verdict;

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("oracle equivalence", criterion_1),
        ("leaf-multiply counts", criterion_2),
        ("stage count", criterion_3),
        ("replication accounting", criterion_4),
        ("cost-model identities", criterion_5),
        ("U-shaped cost over partition count", criterion_6),
        ("serial Strassen", criterion_7),
        ("scalability over workers", criterion_8),
        ("determinism", criterion_9),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));

    let mut failed = Vec::new();
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let verdict = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::new(false, format!("panicked: {msg}"))
        });
        let tag = if verdict.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {}: {name}: {}", i + 1, verdict.detail);
        if !verdict.pass {
            failed.push(i + 1);
        }
    }
    println!("{}/{ran} criteria passed", ran - failed.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
