//! Eight-multiplication block products: every `C(i,j)` is the sum over `k`
//! of `A(i,k) * B(k,j)`, with each operand block replicated once per
//! destination.

use crate::blockmat::{Block, BlockMatrix, Label, Tag};
use crate::dataflow::{Dataset, Engine, FlopCounter, ShuffleRecord};
use crate::error::{Error, Result};
use crate::strassen::{check_operands, relabel, LeafKernel};

/// How replicated operand blocks are brought together.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Both sides keyed by `(i, j, k)`, joined, multiplied, reduced per `(i, j)`.
    ReplicateJoin,
    /// Both sides keyed by `(i, j)` and cogrouped; the `k` products of a
    /// destination are computed in one task.
    Cogroup,
}

/// `A(i,k) * B(k,j)` on its way to `C(i,j)`.
#[derive(Clone, Debug)]
pub struct PartialProduct {
    pub k: usize,
    pub block: Block,
}

impl ShuffleRecord for PartialProduct {
    type SortKey = usize;

    fn sort_key(&self) -> usize {
        self.k
    }

    fn scalar_len(&self) -> u64 {
        self.block.scalar_len()
    }
}

#[derive(Clone, Debug)]
pub struct BaselineRun {
    pub product: BlockMatrix,
    pub leaf_multiplies: u64,
}

/// Block copies emitted for A and for B on a `splits x splits` grid.
pub fn replication_counts(_strategy: Strategy, splits: u64) -> (u64, u64) {
    let copies = splits.pow(3);
    (copies, copies)
}

fn multiply_pair(
    a: &Block,
    b: &Block,
    kernel: LeafKernel,
    flops: &FlopCounter,
) -> Result<PartialProduct> {
    let (payload, spent) = kernel.multiply(a, b)?;
    flops.add(spent);
    let tag = Tag::root(Label::C);
    Ok(PartialProduct {
        k: a.col_index,
        block: Block::new(a.row_index, b.col_index, tag, a.size(), payload)?,
    })
}

fn add_partials(x: PartialProduct, y: PartialProduct) -> Result<PartialProduct> {
    let payload = x
        .block
        .payload()
        .iter()
        .zip(y.block.payload())
        .map(|(p, q)| p + q)
        .collect();
    Ok(PartialProduct {
        k: x.k,
        block: x.block.with_payload(payload)?,
    })
}

pub fn naive_block_multiply(
    engine: &Engine,
    a: &BlockMatrix,
    b: &BlockMatrix,
    strategy: Strategy,
    kernel: LeafKernel,
) -> Result<BaselineRun> {
    check_operands(a, b)?;
    let g = a.splits();
    let flops = engine.flop_counter();
    let a_blocks = engine.parallelize(relabel(a, Label::A));
    let b_blocks = engine.parallelize(relabel(b, Label::B));

    let partials: Dataset<((usize, usize), PartialProduct)> = match strategy {
        Strategy::ReplicateJoin => {
            engine.set_phase("replicate");
            let left = a_blocks.flat_map(|blk| {
                (0..g)
                    .map(|j| ((blk.row_index, j, blk.col_index), blk.clone()))
                    .collect()
            });
            let right = b_blocks.flat_map(|blk| {
                (0..g)
                    .map(|i| ((i, blk.col_index, blk.row_index), blk.clone()))
                    .collect()
            });
            let joined = left.join(right);
            engine.set_phase("multiply");
            joined.try_map(|((i, j, _), (x, y))| {
                multiply_pair(&x, &y, kernel, &flops).map(|p| ((i, j), p))
            })?
        }
        Strategy::Cogroup => {
            engine.set_phase("replicate");
            let left = a_blocks.flat_map(|blk| {
                (0..g)
                    .map(|j| ((blk.row_index, j), blk.clone()))
                    .collect()
            });
            let right = b_blocks.flat_map(|blk| {
                (0..g)
                    .map(|i| ((i, blk.col_index), blk.clone()))
                    .collect()
            });
            let grouped = left.cogroup(right);
            engine.set_phase("multiply");
            grouped.try_flat_map(|(dest, (xs, ys))| {
                if xs.len() != g || ys.len() != g {
                    return Err(Error::MalformedGroup {
                        phase: "cogroup",
                        detail: format!(
                            "{dest:?}: expected {g} blocks per side, found {} and {}",
                            xs.len(),
                            ys.len()
                        ),
                    });
                }
                xs.iter()
                    .zip(&ys)
                    .map(|(x, y)| multiply_pair(x, y, kernel, &flops).map(|p| (dest, p)))
                    .collect()
            })?
        }
    };

    let summed = partials.try_reduce_by_key(add_partials)?;
    engine.set_phase("collect");
    let blocks: Vec<Block> = summed.map(|(_, p)| p.block).collect();
    engine.clear_phase();
    Ok(BaselineRun {
        product: BlockMatrix::from_blocks(a.n(), a.block_size(), blocks)?,
        leaf_multiplies: (g as u64).pow(3),
    })
}
