//! A small in-memory dataflow engine with shuffle-delimited stages.
//!
//! Narrow transformations (`map`, `flat_map`, `filter`, `union`, ...) run one
//! task per partition on the engine's worker pool and accumulate into the
//! currently open stage. Every shuffle (`group_by_key`, `reduce_by_key`,
//! `join`, `cogroup`) closes the open stage and starts a new one whose
//! partitions are the key groups, one task per group. `collect` closes the
//! final stage.
//!
//! Grouped values are ordered by key and then by [`ShuffleRecord::sort_key`],
//! with ties kept in partition order. Partitioning never depends on the
//! worker count, so results are bit-identical for any pool size.

use std::fmt::Display;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Output of one task: its records, or the failing record offset and message.
type TaskResult<U> = std::result::Result<Vec<U>, (usize, String)>;

/// Per key, the values from each side of a cogroup.
pub type CoGrouped<K, V, W> = (K, (Vec<V>, Vec<W>));

/// Values that can cross a shuffle boundary.
pub trait ShuffleRecord {
    type SortKey: Ord;

    /// Canonical order of values within one key group.
    fn sort_key(&self) -> Self::SortKey;

    /// Scalars carried by the value, counted as shuffle volume.
    fn scalar_len(&self) -> u64 {
        1
    }
}

macro_rules! scalar_record {
    ($($t:ty),*) => {
        $(impl ShuffleRecord for $t {
            type SortKey = $t;
            fn sort_key(&self) -> $t {
                *self
            }
        })*
    };
}

scalar_record!(i32, i64, u8, u32, u64, usize);

impl ShuffleRecord for String {
    type SortKey = String;
    fn sort_key(&self) -> String {
        self.clone()
    }
}

impl<A: ShuffleRecord, B: ShuffleRecord> ShuffleRecord for (A, B) {
    type SortKey = (A::SortKey, B::SortKey);
    fn sort_key(&self) -> Self::SortKey {
        (self.0.sort_key(), self.1.sort_key())
    }
    fn scalar_len(&self) -> u64 {
        self.0.scalar_len() + self.1.scalar_len()
    }
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub workers: usize,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            seed: 0,
        }
    }
}

/// Counters for one executed stage.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageMetrics {
    pub stage_id: usize,
    pub label: String,
    pub tasks: u64,
    pub records_in: u64,
    pub records_out: u64,
    pub shuffled_elements: u64,
    pub flops: u64,
    pub wall_ms: f64,
}

impl StageMetrics {
    /// Tasks that could run concurrently on `workers` executors.
    pub fn parallelization_factor(&self, workers: usize) -> u64 {
        self.tasks.min(workers as u64).max(1)
    }
}

pub const METRICS_HEADER: &str =
    "stage_id,label,tasks,records_in,records_out,shuffled_elements,flops,wall_ms";

pub fn write_metrics_csv<W: std::io::Write>(w: W, stages: &[StageMetrics]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if stages.is_empty() {
        out.write_record(METRICS_HEADER.split(','))?;
    }
    for s in stages {
        out.serialize(s)?;
    }
    out.flush()?;
    Ok(())
}

/// Shared scalar multiply-add counter; user functions add to it and the
/// engine attributes the delta to the stage that was open.
#[derive(Clone, Debug, Default)]
pub struct FlopCounter(Arc<AtomicU64>);

impl FlopCounter {
    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

#[derive(Default)]
struct OpenStage {
    phases: Vec<String>,
    ops: Vec<&'static str>,
    tasks: u64,
    records_in: u64,
    wall: Duration,
    flops_at_open: u64,
}

struct StageState {
    completed: Vec<StageMetrics>,
    open: OpenStage,
    phase: Option<String>,
    op_seq: u64,
}

struct Inner {
    config: EngineConfig,
    pool: rayon::ThreadPool,
    state: Mutex<StageState>,
    flops: FlopCounter,
}

/// Handle to a worker pool plus the stage log. Cheap to clone.
#[derive(Clone)]
pub struct Engine {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("config", &self.inner.config)
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        if config.workers == 0 {
            return Err(Error::InvalidParams("workers must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .thread_name(|i| format!("stark-worker-{i}"))
            .build()
            .map_err(|e| Error::ThreadPool(e.to_string()))?;
        Ok(Engine {
            inner: Arc::new(Inner {
                config,
                pool,
                state: Mutex::new(StageState {
                    completed: Vec::new(),
                    open: OpenStage::default(),
                    phase: None,
                    op_seq: 0,
                }),
                flops: FlopCounter::default(),
            }),
        })
    }

    pub fn with_workers(workers: usize) -> Result<Self> {
        Self::new(EngineConfig {
            workers,
            ..EngineConfig::default()
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.inner.config
    }

    pub fn flop_counter(&self) -> FlopCounter {
        self.inner.flops.clone()
    }

    /// Name attached to the stages that subsequent operations run in.
    pub fn set_phase(&self, phase: impl Into<String>) {
        self.state().phase = Some(phase.into());
    }

    pub fn clear_phase(&self) {
        self.state().phase = None;
    }

    /// Completed stages in execution order.
    pub fn metrics(&self) -> Vec<StageMetrics> {
        self.state().completed.clone()
    }

    /// Drops recorded stages and discards the open one.
    pub fn reset_metrics(&self) {
        let flops = self.inner.flops.get();
        let mut st = self.state();
        st.completed.clear();
        st.open = OpenStage {
            flops_at_open: flops,
            ..OpenStage::default()
        };
        st.phase = None;
    }

    /// One partition per element.
    pub fn parallelize<T>(&self, items: Vec<T>) -> Dataset<T> {
        let parts = items.into_iter().map(|x| vec![x]).collect();
        self.parallelize_partitions(parts)
    }

    pub fn parallelize_partitions<T>(&self, parts: Vec<Vec<T>>) -> Dataset<T> {
        let n: usize = parts.iter().map(Vec::len).sum();
        self.state().open.records_in += n as u64;
        Dataset {
            engine: self.clone(),
            parts,
        }
    }

    fn state(&self) -> MutexGuard<'_, StageState> {
        self.inner.state.lock().expect("engine state poisoned")
    }

    fn same_engine(&self, other: &Engine) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    fn note_op(&self, op: &'static str, tasks: u64, wall: Duration) {
        let mut st = self.state();
        let phase = st.phase.clone();
        let open = &mut st.open;
        if let Some(p) = phase {
            if open.phases.last() != Some(&p) {
                open.phases.push(p);
            }
        }
        open.ops.push(op);
        open.tasks = open.tasks.max(tasks);
        open.wall += wall;
    }

    /// Closes the open stage; the next one starts with `next_records_in`.
    fn close_stage(&self, records_out: u64, shuffled: u64, next_records_in: u64) {
        let flops = self.inner.flops.get();
        let mut st = self.state();
        let open = std::mem::take(&mut st.open);
        let mut label = open.phases.join("+");
        if !label.is_empty() {
            label.push(':');
        }
        label.push_str(&open.ops.join(">"));
        let stage_id = st.completed.len() + 1;
        st.completed.push(StageMetrics {
            stage_id,
            label,
            tasks: open.tasks,
            records_in: open.records_in,
            records_out,
            shuffled_elements: shuffled,
            flops: flops - open.flops_at_open,
            wall_ms: open.wall.as_secs_f64() * 1e3,
        });
        st.open = OpenStage {
            records_in: next_records_in,
            flops_at_open: flops,
            ..OpenStage::default()
        };
    }

    /// Runs `f` once per partition on the pool. Tasks are submitted in a
    /// seeded permuted order; results come back in partition order.
    fn run_tasks<T, U, F>(&self, op: &'static str, parts: Vec<Vec<T>>, f: F) -> Result<Vec<Vec<U>>>
    where
        T: Send,
        U: Send,
        F: Fn(Vec<T>) -> std::result::Result<Vec<U>, (usize, String)> + Sync,
    {
        let tasks = parts.len();
        let (stage, seq) = {
            let mut st = self.state();
            st.op_seq += 1;
            (st.completed.len() + 1, st.op_seq)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.inner.config.seed ^ seq.rotate_left(32));
        let mut indexed: Vec<(usize, Vec<T>)> = parts.into_iter().enumerate().collect();
        indexed.shuffle(&mut rng);

        let start = Instant::now();
        let mut results: Vec<(usize, TaskResult<U>)> =
            self.inner.pool.install(|| {
                indexed
                    .into_par_iter()
                    .map(|(i, p)| (i, f(p)))
                    .collect()
            });
        let wall = start.elapsed();
        self.note_op(op, tasks as u64, wall);

        results.sort_unstable_by_key(|(i, _)| *i);
        let mut out = Vec::with_capacity(tasks);
        for (partition, r) in results {
            match r {
                Ok(v) => out.push(v),
                Err((offset, message)) => {
                    return Err(Error::Task {
                        stage,
                        partition,
                        offset,
                        message,
                    })
                }
            }
        }
        Ok(out)
    }

    /// Moves keyed records across the shuffle boundary and groups them.
    fn shuffle<K, V>(&self, op: &'static str, parts: Vec<Vec<(K, V)>>) -> Vec<(K, Vec<V>)>
    where
        K: Ord,
        V: ShuffleRecord,
    {
        let start = Instant::now();
        let mut records: Vec<(K, V)> = parts.into_iter().flatten().collect();
        let count = records.len() as u64;
        let volume: u64 = records.iter().map(|(_, v)| v.scalar_len()).sum();
        records.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.sort_key().cmp(&b.1.sort_key())));

        let mut groups: Vec<(K, Vec<V>)> = Vec::new();
        for (k, v) in records {
            match groups.last_mut() {
                Some((last, vs)) if *last == k => vs.push(v),
                _ => groups.push((k, vec![v])),
            }
        }
        self.note_op(op, 0, start.elapsed());
        self.close_stage(count, volume, count);
        groups
    }
}

/// Immutable partitioned collection bound to an [`Engine`].
pub struct Dataset<T> {
    engine: Engine,
    parts: Vec<Vec<T>>,
}

impl<T: Clone> Clone for Dataset<T> {
    fn clone(&self) -> Self {
        Dataset {
            engine: self.engine.clone(),
            parts: self.parts.clone(),
        }
    }
}

impl<T> std::fmt::Debug for Dataset<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dataset")
            .field("partitions", &self.parts.len())
            .field("len", &self.parts.iter().map(Vec::len).sum::<usize>())
            .finish()
    }
}

impl<T: Send + Sync + 'static> Dataset<T> {
    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn num_partitions(&self) -> usize {
        self.parts.len()
    }

    pub fn len(&self) -> usize {
        self.parts.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn try_flat_map<U, E, F>(self, f: F) -> Result<Dataset<U>>
    where
        U: Send + Sync + 'static,
        E: Display,
        F: Fn(T) -> std::result::Result<Vec<U>, E> + Sync,
    {
        self.try_flat_map_named("flatMap", f)
    }

    fn try_flat_map_named<U, E, F>(self, op: &'static str, f: F) -> Result<Dataset<U>>
    where
        U: Send + Sync + 'static,
        E: Display,
        F: Fn(T) -> std::result::Result<Vec<U>, E> + Sync,
    {
        let engine = self.engine.clone();
        let parts = engine.run_tasks(op, self.parts, |part| {
            let mut out = Vec::new();
            for (offset, x) in part.into_iter().enumerate() {
                match f(x) {
                    Ok(ys) => out.extend(ys),
                    Err(e) => return Err((offset, e.to_string())),
                }
            }
            Ok(out)
        })?;
        Ok(Dataset { engine, parts })
    }

    pub fn flat_map<U, F>(self, f: F) -> Dataset<U>
    where
        U: Send + Sync + 'static,
        F: Fn(T) -> Vec<U> + Sync,
    {
        self.try_flat_map_named("flatMap", |x| Ok::<_, Error>(f(x)))
            .expect("infallible flat_map")
    }

    pub fn try_map<U, E, F>(self, f: F) -> Result<Dataset<U>>
    where
        U: Send + Sync + 'static,
        E: Display,
        F: Fn(T) -> std::result::Result<U, E> + Sync,
    {
        self.try_flat_map_named("map", |x| f(x).map(|y| vec![y]))
    }

    pub fn map<U, F>(self, f: F) -> Dataset<U>
    where
        U: Send + Sync + 'static,
        F: Fn(T) -> U + Sync,
    {
        self.try_flat_map_named("map", |x| Ok::<_, Error>(vec![f(x)]))
            .expect("infallible map")
    }

    pub fn map_to_pair<K, V, F>(self, f: F) -> Dataset<(K, V)>
    where
        K: Send + Sync + 'static,
        V: Send + Sync + 'static,
        F: Fn(T) -> (K, V) + Sync,
    {
        self.try_flat_map_named("mapToPair", |x| Ok::<_, Error>(vec![f(x)]))
            .expect("infallible map_to_pair")
    }

    pub fn filter<F>(self, f: F) -> Dataset<T>
    where
        F: Fn(&T) -> bool + Sync,
    {
        self.try_flat_map_named("filter", |x| {
            Ok::<_, Error>(if f(&x) { vec![x] } else { Vec::new() })
        })
        .expect("infallible filter")
    }

    /// Multiset concatenation; no shuffle, no new stage.
    pub fn union(self, other: Dataset<T>) -> Dataset<T> {
        assert!(
            self.engine.same_engine(&other.engine),
            "union of datasets from different engines"
        );
        self.engine.note_op("union", 0, Duration::ZERO);
        let mut parts = self.parts;
        parts.extend(other.parts);
        Dataset {
            engine: self.engine,
            parts,
        }
    }

    /// Materializes every element in partition order and closes the stage.
    pub fn collect(self) -> Vec<T> {
        let engine = self.engine.clone();
        let start = Instant::now();
        let tasks = self.parts.len() as u64;
        let out: Vec<T> = self.parts.into_iter().flatten().collect();
        engine.note_op("collect", tasks, start.elapsed());
        engine.close_stage(out.len() as u64, 0, 0);
        out
    }
}

impl<K, V> Dataset<(K, V)>
where
    K: Ord + Send + Sync + 'static,
    V: ShuffleRecord + Send + Sync + 'static,
{
    pub fn map_values<W, F>(self, f: F) -> Dataset<(K, W)>
    where
        W: Send + Sync + 'static,
        F: Fn(V) -> W + Sync,
    {
        self.try_flat_map_named("mapValues", |(k, v)| Ok::<_, Error>(vec![(k, f(v))]))
            .expect("infallible map_values")
    }

    /// One output element per distinct key, values in canonical order.
    pub fn group_by_key(self) -> Dataset<(K, Vec<V>)> {
        let Dataset { engine, parts } = self;
        let groups = engine.shuffle("groupByKey", parts);
        let parts = groups.into_iter().map(|g| vec![g]).collect();
        Dataset { engine, parts }
    }

    /// Folds each key's values left to right in canonical order.
    pub fn try_reduce_by_key<E, F>(self, op: F) -> Result<Dataset<(K, V)>>
    where
        E: Display,
        F: Fn(V, V) -> std::result::Result<V, E> + Sync,
    {
        let Dataset { engine, parts } = self;
        let groups = engine.shuffle("reduceByKey", parts);
        let parts = groups.into_iter().map(|g| vec![g]).collect();
        let grouped: Dataset<(K, Vec<V>)> = Dataset { engine, parts };
        grouped.try_flat_map_named("reduce", |(k, vs)| {
            let mut it = vs.into_iter();
            let first = it.next().expect("shuffle groups are never empty");
            it.try_fold(first, &op).map(|acc| vec![(k, acc)])
        })
    }

    pub fn reduce_by_key<F>(self, op: F) -> Dataset<(K, V)>
    where
        F: Fn(V, V) -> V + Sync,
    {
        self.try_reduce_by_key(|a, b| Ok::<_, Error>(op(a, b)))
            .expect("infallible reduce_by_key")
    }

    /// Inner join: per key, every left value paired with every right value.
    pub fn join<W>(self, other: Dataset<(K, W)>) -> Dataset<(K, (V, W))>
    where
        K: Clone,
        V: Clone,
        W: ShuffleRecord + Clone + Send + Sync + 'static,
    {
        let grouped = self.cogroup_named("join", other);
        let parts = grouped
            .parts
            .into_iter()
            .map(|part| {
                part.into_iter()
                    .flat_map(|(k, (ls, rs))| {
                        let mut out = Vec::with_capacity(ls.len() * rs.len());
                        for l in &ls {
                            for r in &rs {
                                out.push((k.clone(), (l.clone(), r.clone())));
                            }
                        }
                        out
                    })
                    .collect::<Vec<_>>()
            })
            .filter(|p| !p.is_empty())
            .collect();
        Dataset {
            engine: grouped.engine,
            parts,
        }
    }

    /// Per key, all left values and all right values.
    pub fn cogroup<W>(self, other: Dataset<(K, W)>) -> Dataset<CoGrouped<K, V, W>>
    where
        W: ShuffleRecord + Send + Sync + 'static,
    {
        self.cogroup_named("cogroup", other)
    }

    fn cogroup_named<W>(
        self,
        op: &'static str,
        other: Dataset<(K, W)>,
    ) -> Dataset<CoGrouped<K, V, W>>
    where
        W: ShuffleRecord + Send + Sync + 'static,
    {
        assert!(
            self.engine.same_engine(&other.engine),
            "{op} of datasets from different engines"
        );
        let mut parts: Vec<Vec<(K, Side<V, W>)>> = self
            .parts
            .into_iter()
            .map(|p| p.into_iter().map(|(k, v)| (k, Side::Left(v))).collect())
            .collect();
        parts.extend(
            other
                .parts
                .into_iter()
                .map(|p| p.into_iter().map(|(k, w)| (k, Side::Right(w))).collect()),
        );
        let groups = self.engine.shuffle(op, parts);
        let parts = groups
            .into_iter()
            .map(|(k, sides)| {
                let mut ls = Vec::new();
                let mut rs = Vec::new();
                for s in sides {
                    match s {
                        Side::Left(v) => ls.push(v),
                        Side::Right(w) => rs.push(w),
                    }
                }
                vec![(k, (ls, rs))]
            })
            .collect();
        Dataset {
            engine: self.engine,
            parts,
        }
    }
}

enum Side<V, W> {
    Left(V),
    Right(W),
}

impl<V: ShuffleRecord, W: ShuffleRecord> ShuffleRecord for Side<V, W> {
    type SortKey = (u8, Option<V::SortKey>, Option<W::SortKey>);

    fn sort_key(&self) -> Self::SortKey {
        match self {
            Side::Left(v) => (0, Some(v.sort_key()), None),
            Side::Right(w) => (1, None, Some(w.sort_key())),
        }
    }

    fn scalar_len(&self) -> u64 {
        match self {
            Side::Left(v) => v.scalar_len(),
            Side::Right(w) => w.scalar_len(),
        }
    }
}
