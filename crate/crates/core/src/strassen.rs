//! Distributed Strassen multiplication over a [`Dataset`] of blocks.
//!
//! The recursion tree is walked level by level instead of by recursive
//! driver calls. The `m_index` of every block records its path from the
//! root, so all nodes of a level are divided, multiplied or combined in the
//! same stage:
//!
//! * divide: each block is replicated to the products whose operands use its
//!   quadrant ([`REPLICATION_RULES`]), grouped per (child, side, position)
//!   and summed with signs;
//! * leaf: A/B operand pairs sharing a key are multiplied serially;
//! * combine: every product block is sent to the result quadrants it feeds
//!   ([`COMBINE_COEFFICIENTS`]), grouped per (parent, quadrant, position),
//!   summed and re-offset into the doubled sub-matrix.

use crate::blockmat::{
    local_position, quadrant_of, validate_blocking, Block, BlockMatrix, Label, Quadrant, Tag,
};
use crate::dataflow::{Dataset, Engine, FlopCounter, ShuffleRecord};
use crate::error::{Error, Result};
use crate::serial;

/// +1 or -1.
pub type Sign = i8;

/// Products (1..=7) an input quadrant feeds, with the sign it enters with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReplicationRule {
    pub label: Label,
    pub quadrant: Quadrant,
    pub targets: &'static [(u8, Sign)],
}

pub const REPLICATION_RULES: [ReplicationRule; 8] = [
    ReplicationRule { label: Label::A, quadrant: Quadrant::Q11, targets: &[(1, 1), (3, 1), (5, 1), (6, -1)] },
    ReplicationRule { label: Label::A, quadrant: Quadrant::Q12, targets: &[(5, 1), (7, 1)] },
    ReplicationRule { label: Label::A, quadrant: Quadrant::Q21, targets: &[(2, 1), (6, 1)] },
    ReplicationRule { label: Label::A, quadrant: Quadrant::Q22, targets: &[(1, 1), (2, 1), (4, 1), (7, -1)] },
    ReplicationRule { label: Label::B, quadrant: Quadrant::Q11, targets: &[(1, 1), (2, 1), (4, -1), (6, 1)] },
    ReplicationRule { label: Label::B, quadrant: Quadrant::Q12, targets: &[(3, 1), (6, 1)] },
    ReplicationRule { label: Label::B, quadrant: Quadrant::Q21, targets: &[(4, 1), (7, 1)] },
    ReplicationRule { label: Label::B, quadrant: Quadrant::Q22, targets: &[(1, 1), (3, -1), (5, 1), (7, 1)] },
];

pub fn replication_rule(label: Label, quadrant: Quadrant) -> Option<&'static ReplicationRule> {
    REPLICATION_RULES
        .iter()
        .find(|r| r.label == label && r.quadrant == quadrant)
}

/// Signed quadrant terms forming one operand of product `m`.
pub fn operand_terms(label: Label, m: u8) -> Vec<(Quadrant, Sign)> {
    REPLICATION_RULES
        .iter()
        .filter(|r| r.label == label)
        .filter_map(|r| {
            r.targets
                .iter()
                .find(|(t, _)| *t == m)
                .map(|(_, s)| (r.quadrant, *s))
        })
        .collect()
}

/// `COMBINE_COEFFICIENTS[m - 1][q]`: sign of product `m` in result quadrant
/// `q` (Q11, Q12, Q21, Q22), 0 when it does not contribute.
pub const COMBINE_COEFFICIENTS: [[Sign; 4]; 7] = [
    [1, 0, 0, 1],  // M1
    [0, 0, 1, -1], // M2
    [0, 1, 0, 1],  // M3
    [1, 0, 1, 0],  // M4
    [-1, 1, 0, 0], // M5
    [0, 0, 0, 1],  // M6
    [1, 0, 0, 0],  // M7
];

pub fn combine_coefficient(m: u8, quadrant: Quadrant) -> Sign {
    COMBINE_COEFFICIENTS[usize::from(m - 1)][quadrant as usize]
}

/// Products feeding result quadrant `q`, ascending.
pub fn combine_terms(quadrant: Quadrant) -> Vec<(u8, Sign)> {
    (1..=7u8)
        .map(|m| (m, combine_coefficient(m, quadrant)))
        .filter(|(_, s)| *s != 0)
        .collect()
}

impl ShuffleRecord for Block {
    type SortKey = (Label, u64, usize, usize);

    fn sort_key(&self) -> Self::SortKey {
        (self.tag.label, self.tag.m_index, self.row_index, self.col_index)
    }

    fn scalar_len(&self) -> u64 {
        (self.size() * self.size()) as u64
    }
}

/// Grouping key of the divide shuffle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DivKey {
    pub m_index: u64,
    pub side: Label,
    pub row: usize,
    pub col: usize,
}

/// A replicated quadrant block on its way to one operand sum.
#[derive(Clone, Debug)]
pub struct Contribution {
    pub quadrant: Quadrant,
    pub sign: Sign,
    pub block: Block,
}

impl ShuffleRecord for Contribution {
    type SortKey = (Quadrant, <Block as ShuffleRecord>::SortKey);

    fn sort_key(&self) -> Self::SortKey {
        (self.quadrant, self.block.sort_key())
    }

    fn scalar_len(&self) -> u64 {
        self.block.scalar_len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LeafKey {
    pub m_index: u64,
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CombineKey {
    pub parent: u64,
    pub quadrant: Quadrant,
    pub row: usize,
    pub col: usize,
}

/// A product block on its way to one result-quadrant sum.
#[derive(Clone, Debug)]
pub struct Term {
    pub product: u8,
    pub sign: Sign,
    pub block: Block,
}

impl ShuffleRecord for Term {
    type SortKey = (u8, <Block as ShuffleRecord>::SortKey);

    fn sort_key(&self) -> Self::SortKey {
        (self.product, self.block.sort_key())
    }

    fn scalar_len(&self) -> u64 {
        self.block.scalar_len()
    }
}

/// Serial multiply used on leaf block pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LeafKernel {
    #[default]
    Naive,
    Strassen {
        threshold: usize,
    },
}

impl LeafKernel {
    /// Multiplies two equally sized payloads, returning the product and the
    /// scalar multiply-adds spent.
    pub fn multiply(&self, a: &Block, b: &Block) -> Result<(Vec<f64>, u64)> {
        let s = a.size();
        if b.size() != s {
            return Err(Error::BlockSizeMismatch {
                left: s,
                right: b.size(),
            });
        }
        match *self {
            LeafKernel::Naive => {
                let mut out = vec![0.0; s * s];
                serial::multiply_into(a.payload(), b.payload(), &mut out, s);
                Ok((out, (s * s * s) as u64))
            }
            LeafKernel::Strassen { threshold } => {
                let t = threshold.min(s);
                let run = serial::serial_strassen(&a.to_dense(), &b.to_dense(), t)?;
                Ok((run.product.into_vec(), run.base_multiplies * (t * t * t) as u64))
            }
        }
    }
}

/// `sum(sign_i * block_i)` evaluated left to right.
fn signed_sum<'a>(terms: impl IntoIterator<Item = (Sign, &'a Block)>) -> Vec<f64> {
    let mut acc: Option<Vec<f64>> = None;
    for (sign, blk) in terms {
        match acc.as_mut() {
            None => {
                acc = Some(if sign > 0 {
                    blk.payload().to_vec()
                } else {
                    blk.payload().iter().map(|v| -v).collect()
                })
            }
            Some(a) => {
                if sign > 0 {
                    a.iter_mut().zip(blk.payload()).for_each(|(x, y)| *x += y);
                } else {
                    a.iter_mut().zip(blk.payload()).for_each(|(x, y)| *x -= y);
                }
            }
        }
    }
    acc.unwrap_or_default()
}

/// Copies of one block produced by a divide step on sub-matrices of
/// `grid x grid` blocks at recursion depth `depth`.
pub fn replicate_block(block: Block, grid: usize, depth: u32) -> Result<Vec<(DivKey, Contribution)>> {
    let label = block.tag.label;
    if !matches!(label, Label::A | Label::B) {
        return Err(Error::UnexpectedLabel {
            found: label,
            phase: "divide",
        });
    }
    if grid < 2 || !grid.is_power_of_two() {
        return Err(Error::InvalidParams(format!(
            "cannot divide a sub-matrix of {grid} blocks per side"
        )));
    }
    if !block.tag.fits_depth(depth) {
        return Err(Error::InvalidParams(format!(
            "m_index {} too large for depth {depth}",
            block.tag.m_index
        )));
    }
    let half = grid / 2;
    let quadrant = quadrant_of(&block, half);
    let (row, col) = local_position(&block, half);
    let rule = replication_rule(label, quadrant).expect("rule for every A/B quadrant");
    Ok(rule
        .targets
        .iter()
        .map(|&(m, sign)| {
            let m_index = Tag::child_index(block.tag.m_index, m);
            let key = DivKey {
                m_index,
                side: label,
                row,
                col,
            };
            let moved = block.relocated(row, col, Tag { label, m_index });
            (
                key,
                Contribution {
                    quadrant,
                    sign,
                    block: moved,
                },
            )
        })
        .collect())
}

fn sum_operand(key: DivKey, group: Vec<Contribution>) -> Result<Block> {
    let (_, m) = Tag::split_index(key.m_index);
    let expected = operand_terms(key.side, m);
    let found: Vec<(Quadrant, Sign)> = group.iter().map(|c| (c.quadrant, c.sign)).collect();
    if found != expected {
        return Err(Error::MalformedGroup {
            phase: "divide",
            detail: format!("{key:?}: expected terms {expected:?}, found {found:?}"),
        });
    }
    let payload = signed_sum(group.iter().map(|c| (c.sign, &c.block)));
    Block::new(
        key.row,
        key.col,
        Tag {
            label: key.side,
            m_index: key.m_index,
        },
        group[0].block.size(),
        payload,
    )
}

/// One divide level: splits every A/B sub-matrix of `grid x grid` blocks at
/// depth `depth` into the 7 operand pairs of its children.
pub fn div_n_rep(d: Dataset<Block>, grid: usize, depth: u32) -> Result<Dataset<Block>> {
    d.try_flat_map(|blk| replicate_block(blk, grid, depth))?
        .group_by_key()
        .try_map(|(key, group)| sum_operand(key, group))
}

/// Multiplies each leaf A/B pair; products are tagged `out_label`.
pub fn mul_block_mat(
    d: Dataset<Block>,
    kernel: LeafKernel,
    out_label: Label,
    flops: &FlopCounter,
) -> Result<Dataset<Block>> {
    d.map_to_pair(|blk| {
        (
            LeafKey {
                m_index: blk.tag.m_index,
                row: blk.row_index,
                col: blk.col_index,
            },
            blk,
        )
    })
    .group_by_key()
    .try_map(|(key, group)| {
        let labels: Vec<Label> = group.iter().map(|b| b.tag.label).collect();
        if labels != [Label::A, Label::B] {
            return Err(Error::MalformedGroup {
                phase: "leaf",
                detail: format!("{key:?}: expected one A and one B block, found {labels:?}"),
            });
        }
        let (payload, spent) = kernel.multiply(&group[0], &group[1])?;
        flops.add(spent);
        Block::new(
            key.row,
            key.col,
            Tag {
                label: out_label,
                m_index: key.m_index,
            },
            group[0].size(),
            payload,
        )
    })
}

/// Product block routed to each result quadrant it contributes to.
pub fn route_product(block: Block) -> Result<Vec<(CombineKey, Term)>> {
    if block.tag.label != Label::M {
        return Err(Error::UnexpectedLabel {
            found: block.tag.label,
            phase: "combine",
        });
    }
    let (parent, product) = Tag::split_index(block.tag.m_index);
    Ok(Quadrant::ALL
        .iter()
        .filter_map(|&q| {
            let sign = combine_coefficient(product, q);
            (sign != 0).then(|| {
                (
                    CombineKey {
                        parent,
                        quadrant: q,
                        row: block.row_index,
                        col: block.col_index,
                    },
                    Term {
                        product,
                        sign,
                        block: block.clone(),
                    },
                )
            })
        })
        .collect())
}

fn sum_quadrant(key: CombineKey, group: Vec<Term>, grid: usize, out_label: Label) -> Result<Block> {
    let expected = combine_terms(key.quadrant);
    let found: Vec<(u8, Sign)> = group.iter().map(|t| (t.product, t.sign)).collect();
    if found != expected {
        return Err(Error::MalformedGroup {
            phase: "combine",
            detail: format!("{key:?}: expected terms {expected:?}, found {found:?}"),
        });
    }
    let payload = signed_sum(group.iter().map(|t| (t.sign, &t.block)));
    let (dr, dc) = key.quadrant.offset();
    Block::new(
        key.row + dr * grid,
        key.col + dc * grid,
        Tag {
            label: out_label,
            m_index: key.parent,
        },
        group[0].block.size(),
        payload,
    )
}

/// One combine level: merges the 7 product sub-matrices (each `grid x grid`
/// blocks) of every parent into the parent's `2grid x 2grid` result.
pub fn combine(d: Dataset<Block>, grid: usize, out_label: Label) -> Result<Dataset<Block>> {
    d.try_flat_map(route_product)?
        .group_by_key()
        .try_map(|(key, group)| sum_quadrant(key, group, grid, out_label))
}

#[derive(Clone, Copy, Debug, Default)]
pub struct StrassenOptions {
    pub kernel: LeafKernel,
}

#[derive(Clone, Debug)]
pub struct DistRun {
    pub product: BlockMatrix,
    pub leaf_multiplies: u64,
    /// Recursion levels, `log2(n / block_size)`.
    pub levels: u32,
}

pub(crate) fn check_operands(a: &BlockMatrix, b: &BlockMatrix) -> Result<()> {
    if a.n() != b.n() || a.block_size() != b.block_size() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} in blocks of {} vs {}x{} in blocks of {}",
            a.n(),
            a.n(),
            a.block_size(),
            b.n(),
            b.n(),
            b.block_size()
        )));
    }
    validate_blocking(a.n(), a.block_size())
}

pub(crate) fn relabel(m: &BlockMatrix, label: Label) -> Vec<Block> {
    m.blocks()
        .iter()
        .map(|blk| blk.relocated(blk.row_index, blk.col_index, Tag::root(label)))
        .collect()
}

/// Multiplies `a * b` with `log2(b)` divide levels, one leaf level and
/// `log2(b)` combine levels, for `2 log2(b) + 2` stages in total.
pub fn dist_strassen(
    engine: &Engine,
    a: &BlockMatrix,
    b: &BlockMatrix,
    options: StrassenOptions,
) -> Result<DistRun> {
    check_operands(a, b)?;
    let splits = a.splits();
    let levels = splits.trailing_zeros();
    let flops = engine.flop_counter();

    let mut ds = engine
        .parallelize(relabel(a, Label::A))
        .union(engine.parallelize(relabel(b, Label::B)));

    for depth in 0..levels {
        engine.set_phase(format!("divide[{depth}]"));
        ds = div_n_rep(ds, splits >> depth, depth)?;
    }

    engine.set_phase("leaf");
    let leaf_label = if levels == 0 { Label::C } else { Label::M };
    ds = mul_block_mat(ds, options.kernel, leaf_label, &flops)?;
    let leaf_multiplies = ds.len() as u64;

    for depth in (1..=levels).rev() {
        engine.set_phase(format!("combine[{depth}]"));
        let out = if depth == 1 { Label::C } else { Label::M };
        ds = combine(ds, splits >> depth, out)?;
    }

    let blocks = ds.collect();
    engine.clear_phase();
    Ok(DistRun {
        product: BlockMatrix::from_blocks(a.n(), a.block_size(), blocks)?,
        leaf_multiplies,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockmat::Dense;

    fn engine() -> Engine {
        Engine::with_workers(2).unwrap()
    }

    fn pair(n: usize, bs: usize, seed: u64) -> (Dense, Dense, BlockMatrix, BlockMatrix) {
        let a = Dense::random(n, seed);
        let b = Dense::random(n, seed + 1);
        let ba = BlockMatrix::from_dense(&a, bs, Label::A).unwrap();
        let bb = BlockMatrix::from_dense(&b, bs, Label::B).unwrap();
        (a, b, ba, bb)
    }

    #[test]
    fn replication_table_shape() {
        let mut per_label = [0usize; 2];
        for r in &REPLICATION_RULES {
            let diag = matches!(r.quadrant, Quadrant::Q11 | Quadrant::Q22);
            assert_eq!(r.targets.len(), if diag { 4 } else { 2 });
            per_label[usize::from(r.label == Label::B)] += r.targets.len();
        }
        assert_eq!(per_label, [12, 12]);
    }

    // Operands written out from the seven product formulas.
    #[test]
    fn operand_terms_match_formulas() {
        use Quadrant::*;
        let a: [&[(Quadrant, Sign)]; 7] = [
            &[(Q11, 1), (Q22, 1)],
            &[(Q21, 1), (Q22, 1)],
            &[(Q11, 1)],
            &[(Q22, 1)],
            &[(Q11, 1), (Q12, 1)],
            &[(Q11, -1), (Q21, 1)],
            &[(Q12, 1), (Q22, -1)],
        ];
        let b: [&[(Quadrant, Sign)]; 7] = [
            &[(Q11, 1), (Q22, 1)],
            &[(Q11, 1)],
            &[(Q12, 1), (Q22, -1)],
            &[(Q11, -1), (Q21, 1)],
            &[(Q22, 1)],
            &[(Q11, 1), (Q12, 1)],
            &[(Q21, 1), (Q22, 1)],
        ];
        for m in 1..=7u8 {
            assert_eq!(operand_terms(Label::A, m), a[usize::from(m - 1)], "A side of M{m}");
            assert_eq!(operand_terms(Label::B, m), b[usize::from(m - 1)], "B side of M{m}");
        }
    }

    #[test]
    fn combine_table_shape() {
        let counts: Vec<usize> = Quadrant::ALL.iter().map(|&q| combine_terms(q).len()).collect();
        assert_eq!(counts, vec![4, 2, 2, 4]);
        assert_eq!(
            combine_terms(Quadrant::Q11),
            vec![(1, 1), (4, 1), (5, -1), (7, 1)]
        );
        assert_eq!(combine_terms(Quadrant::Q12), vec![(3, 1), (5, 1)]);
        assert_eq!(combine_terms(Quadrant::Q21), vec![(2, 1), (4, 1)]);
        assert_eq!(
            combine_terms(Quadrant::Q22),
            vec![(1, 1), (2, -1), (3, 1), (6, 1)]
        );
    }

    // Scalar check of both tables: 2x2 matrices with 1x1 quadrants.
    #[test]
    fn tables_reproduce_scalar_product() {
        let a = [3.0, -1.0, 2.0, 5.0];
        let b = [7.0, 4.0, -6.0, 1.0];
        let operand = |x: &[f64; 4], label, m| {
            operand_terms(label, m)
                .iter()
                .map(|(q, s)| f64::from(*s) * x[*q as usize])
                .sum::<f64>()
        };
        let ms: Vec<f64> = (1..=7u8)
            .map(|m| operand(&a, Label::A, m) * operand(&b, Label::B, m))
            .collect();
        let c: Vec<f64> = Quadrant::ALL
            .iter()
            .map(|&q| {
                combine_terms(q)
                    .iter()
                    .map(|(m, s)| f64::from(*s) * ms[usize::from(m - 1)])
                    .sum()
            })
            .collect();
        let expected = [
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ];
        assert_eq!(c, expected);
    }

    #[test]
    fn a12_goes_to_m5_and_m7() {
        let blk = Block::zeros(0, 1, Tag::root(Label::A), 2);
        let copies = replicate_block(blk, 2, 0).unwrap();
        let targets: Vec<(u64, Sign)> = copies.iter().map(|(k, c)| (k.m_index, c.sign)).collect();
        // children 5 and 7 of the root have indices 4 and 6
        assert_eq!(targets, vec![(4, 1), (6, 1)]);
    }

    #[test]
    fn replicate_rejects_bad_inputs() {
        let m = Block::zeros(0, 0, Tag::root(Label::M), 1);
        assert!(matches!(
            replicate_block(m, 2, 0),
            Err(Error::UnexpectedLabel { .. })
        ));
        let a = Block::zeros(0, 0, Tag::root(Label::A), 1);
        assert!(replicate_block(a.clone(), 1, 0).is_err());
        let deep = a.relocated(0, 0, Tag { label: Label::A, m_index: 7 });
        assert!(replicate_block(deep, 2, 1).is_err());
    }

    #[test]
    fn one_divide_of_two_by_two_grid() {
        let e = engine();
        let (_, _, a, b) = pair(4, 2, 1);
        let ds = e.parallelize(relabel(&a, Label::A)).union(e.parallelize(relabel(&b, Label::B)));
        let out = div_n_rep(ds, 2, 0).unwrap().collect();
        assert_eq!(out.len(), 14);
        let mut keys: Vec<(u64, Label)> = out.iter().map(|b| (b.tag.m_index, b.tag.label)).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 14);
        assert!(out.iter().all(|b| b.row_index == 0 && b.col_index == 0 && b.tag.fits_depth(1)));
    }

    #[test]
    fn divide_populates_every_tag() {
        let e = engine();
        let (_, _, a, b) = pair(16, 2, 3);
        let mut ds = e.parallelize(relabel(&a, Label::A)).union(e.parallelize(relabel(&b, Label::B)));
        for depth in 0..2u32 {
            ds = div_n_rep(ds, 8 >> depth, depth).unwrap();
        }
        let blocks = ds.collect();
        let grid = 2;
        // 49 nodes x 2 sides x 2x2 blocks
        assert_eq!(blocks.len(), 49 * 2 * grid * grid);
        for m in 0..49u64 {
            for side in [Label::A, Label::B] {
                let n = blocks
                    .iter()
                    .filter(|b| b.tag.m_index == m && b.tag.label == side)
                    .count();
                assert_eq!(n, grid * grid);
            }
        }
        assert!(blocks.iter().all(|b| b.tag.fits_depth(2) && b.row_index < grid && b.col_index < grid));
    }

    #[test]
    fn leaf_pair_matches_naive() {
        let e = engine();
        let a = Dense::random(2, 5);
        let b = Dense::random(2, 6);
        let ba = Block::new(0, 0, Tag::root(Label::A), 2, a.as_slice().to_vec()).unwrap();
        let bb = Block::new(0, 0, Tag::root(Label::B), 2, b.as_slice().to_vec()).unwrap();
        let out = mul_block_mat(e.parallelize(vec![bb, ba]), LeafKernel::Naive, Label::M, &e.flop_counter())
            .unwrap()
            .collect();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].tag.label, Label::M);
        assert_eq!(out[0].payload(), serial::naive_multiply(&a, &b).unwrap().as_slice());
    }

    #[test]
    fn leaf_rejects_unpaired_blocks() {
        let e = engine();
        let ba = Block::zeros(0, 0, Tag::root(Label::A), 2);
        let err = mul_block_mat(e.parallelize(vec![ba]), LeafKernel::Naive, Label::M, &e.flop_counter())
            .unwrap_err();
        assert!(matches!(err, Error::Task { .. }));
    }

    #[test]
    fn combine_one_level() {
        let e = engine();
        let m: Vec<Block> = (0..7u64)
            .map(|i| Block::new(0, 0, Tag { label: Label::M, m_index: i }, 1, vec![(i + 1) as f64]).unwrap())
            .collect();
        let out = combine(e.parallelize(m), 1, Label::C).unwrap().collect();
        assert_eq!(out.len(), 4);
        let get = |r, c| out.iter().find(|b| b.row_index == r && b.col_index == c).unwrap().payload()[0];
        assert_eq!(get(0, 0), 1.0 + 4.0 - 5.0 + 7.0);
        assert_eq!(get(0, 1), 3.0 + 5.0);
        assert_eq!(get(1, 0), 2.0 + 4.0);
        assert_eq!(get(1, 1), 1.0 - 2.0 + 3.0 + 6.0);
        assert!(out.iter().all(|b| b.tag == Tag::root(Label::C)));
    }

    #[test]
    fn combine_reports_missing_contributor() {
        let e = engine();
        let m: Vec<Block> = (0..6u64)
            .map(|i| Block::zeros(0, 0, Tag { label: Label::M, m_index: i }, 1))
            .collect();
        assert!(combine(e.parallelize(m), 1, Label::C).is_err());
        let a = Block::zeros(0, 0, Tag::root(Label::A), 1);
        assert!(combine(e.parallelize(vec![a]), 1, Label::C).is_err());
    }

    #[test]
    fn identity_times_identity() {
        let e = engine();
        let i = BlockMatrix::from_dense(&Dense::identity(4), 2, Label::A).unwrap();
        let run = dist_strassen(&e, &i, &i, StrassenOptions::default()).unwrap();
        assert_eq!(run.product.to_dense().unwrap(), Dense::identity(4));
        assert_eq!(run.leaf_multiplies, 7);
        assert!(run.product.blocks().iter().all(|b| b.tag == Tag::root(Label::C)));
    }

    #[test]
    fn no_levels_is_one_multiply() {
        let e = engine();
        let (a, b, ba, bb) = pair(8, 8, 4);
        let run = dist_strassen(&e, &ba, &bb, StrassenOptions::default()).unwrap();
        assert_eq!(run.leaf_multiplies, 1);
        assert_eq!(run.product.to_dense().unwrap(), serial::naive_multiply(&a, &b).unwrap());
        assert_eq!(e.metrics().len(), 2);
    }

    #[test]
    fn matches_oracle_and_counts() {
        let e = engine();
        let (a, b, ba, bb) = pair(64, 8, 12);
        let run = dist_strassen(&e, &ba, &bb, StrassenOptions::default()).unwrap();
        let oracle = serial::naive_multiply(&a, &b).unwrap();
        assert!(run.product.to_dense().unwrap().max_rel_error(&oracle) <= 1e-9);
        assert_eq!(run.leaf_multiplies, 343);
        let m = e.metrics();
        assert_eq!(m.len(), 8);
        assert_eq!(m.iter().map(|s| s.flops).sum::<u64>(), 343 * 512);
    }

    #[test]
    fn strassen_leaf_kernel() {
        let e = engine();
        let (a, b, ba, bb) = pair(32, 16, 20);
        let opts = StrassenOptions {
            kernel: LeafKernel::Strassen { threshold: 4 },
        };
        let run = dist_strassen(&e, &ba, &bb, opts).unwrap();
        let oracle = serial::naive_multiply(&a, &b).unwrap();
        assert!(run.product.to_dense().unwrap().max_rel_error(&oracle) <= 1e-9);
        let flops: u64 = e.metrics().iter().map(|s| s.flops).sum();
        assert_eq!(flops, 7 * 49 * 64);
    }

    #[test]
    fn rejects_mismatched_operands() {
        let e = engine();
        let a = BlockMatrix::from_dense(&Dense::zeros(8), 2, Label::A).unwrap();
        let b = BlockMatrix::from_dense(&Dense::zeros(8), 4, Label::B).unwrap();
        let c = BlockMatrix::from_dense(&Dense::zeros(4), 2, Label::B).unwrap();
        assert!(matches!(
            dist_strassen(&e, &a, &b, StrassenOptions::default()),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(dist_strassen(&e, &a, &c, StrassenOptions::default()).is_err());
    }
}
