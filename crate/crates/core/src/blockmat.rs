//! Square dense matrices, fixed-size tiles and the tiled block matrix.
//!
//! A [`BlockMatrix`] of dimension `n` is cut into `b x b` tiles of side
//! `block_size`, where `b = n / block_size`. Every tile is a [`Block`] that
//! carries its position inside the *current* sub-matrix and a [`Tag`]
//! locating that sub-matrix in the Strassen recursion tree.
//!
//! Block indices are relative: dividing a sub-matrix of `2h x 2h` blocks maps
//! an index to `index mod h`, combining maps a quadrant-local index back to
//! `index + offset * h`.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub(crate) fn require_pow2(what: &'static str, value: usize) -> Result<()> {
    if value == 0 || !value.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { what, value });
    }
    Ok(())
}

/// Checks that `n` and `block_size` are powers of two with `block_size <= n`.
pub fn validate_blocking(n: usize, block_size: usize) -> Result<()> {
    require_pow2("matrix dimension", n)?;
    require_pow2("block size", block_size)?;
    if block_size > n {
        return Err(Error::BlockLargerThanMatrix { block_size, n });
    }
    Ok(())
}

/// Row-major square matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Dense {
    n: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Dense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dense").field("n", &self.n).finish_non_exhaustive()
    }
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Dense {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "{} values cannot form a {n}x{n} matrix",
                data.len()
            )));
        }
        Ok(Dense { n, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "row of length {} in a {n}-row matrix",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Dense { n, data })
    }

    /// Entries drawn from U(-1, 1) with a ChaCha8 stream seeded by `seed`.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Dense { n, data }
    }

    /// Small integers in `-range..=range`, for bit-exact comparisons.
    pub fn random_integers(n: usize, range: i32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * n)
            .map(|_| f64::from(rng.gen_range(-range..=range)))
            .collect();
        Dense { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Copies the `size x size` window whose top-left corner is `(row, col)`.
    pub fn window(&self, row: usize, col: usize, size: usize) -> Dense {
        let mut out = Vec::with_capacity(size * size);
        for r in row..row + size {
            let start = r * self.n + col;
            out.extend_from_slice(&self.data[start..start + size]);
        }
        Dense { n: size, data: out }
    }

    pub fn paste(&mut self, row: usize, col: usize, src: &[f64], size: usize) {
        for r in 0..size {
            let dst = (row + r) * self.n + col;
            self.data[dst..dst + size].copy_from_slice(&src[r * size..(r + 1) * size]);
        }
    }

    /// Largest elementwise error of `self` against `oracle`, measured as
    /// `|x - y| / max(|y|, 1)`: relative for entries of magnitude at least
    /// one, absolute below that.
    pub fn max_rel_error(&self, oracle: &Dense) -> f64 {
        assert_eq!(self.n, oracle.n, "max_rel_error on different sizes");
        self.data
            .iter()
            .zip(&oracle.data)
            .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
            .fold(0.0, f64::max)
    }

    /// Nonzero entries in row-major order.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(move |(i, v)| (i / n, i % n, *v))
    }
}

/// Which operand or result a block belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    A,
    B,
    M,
    C,
}

/// Matrix label plus the position of the enclosing sub-matrix in the
/// recursion tree, encoded base 7: the root is 0 and the operand pair of
/// product `M_j` (j in 1..=7) below node `i` is `7 * i + (j - 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag {
    pub label: Label,
    pub m_index: u64,
}

impl Tag {
    pub const fn root(label: Label) -> Self {
        Tag { label, m_index: 0 }
    }

    pub fn child_index(parent: u64, product: u8) -> u64 {
        debug_assert!((1..=7).contains(&product));
        parent * 7 + u64::from(product - 1)
    }

    /// Splits an index into its parent index and the product number (1..=7).
    pub fn split_index(m_index: u64) -> (u64, u8) {
        (m_index / 7, (m_index % 7) as u8 + 1)
    }

    /// Whether the index is valid for a node `depth` levels below the root.
    pub fn fits_depth(&self, depth: u32) -> bool {
        self.m_index < 7u64.pow(depth)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quadrant {
    Q11,
    Q12,
    Q21,
    Q22,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::Q11, Quadrant::Q12, Quadrant::Q21, Quadrant::Q22];

    /// (row, col) offset of the quadrant in units of half the parent side.
    pub fn offset(self) -> (usize, usize) {
        match self {
            Quadrant::Q11 => (0, 0),
            Quadrant::Q12 => (0, 1),
            Quadrant::Q21 => (1, 0),
            Quadrant::Q22 => (1, 1),
        }
    }

    pub fn from_halves(row_high: bool, col_high: bool) -> Self {
        match (row_high, col_high) {
            (false, false) => Quadrant::Q11,
            (false, true) => Quadrant::Q12,
            (true, false) => Quadrant::Q21,
            (true, true) => Quadrant::Q22,
        }
    }
}

/// One square tile of a matrix.
#[derive(Clone, PartialEq)]
pub struct Block {
    pub row_index: usize,
    pub col_index: usize,
    pub tag: Tag,
    size: usize,
    payload: Arc<[f64]>,
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Block")
            .field("row_index", &self.row_index)
            .field("col_index", &self.col_index)
            .field("tag", &self.tag)
            .field("size", &self.size)
            .finish_non_exhaustive()
    }
}

impl Block {
    pub fn new(
        row_index: usize,
        col_index: usize,
        tag: Tag,
        size: usize,
        payload: Vec<f64>,
    ) -> Result<Self> {
        require_pow2("block size", size)?;
        if payload.len() != size * size {
            return Err(Error::DimensionMismatch(format!(
                "payload of {} values for a {size}x{size} block",
                payload.len()
            )));
        }
        Ok(Block {
            row_index,
            col_index,
            tag,
            size,
            payload: payload.into(),
        })
    }

    pub fn zeros(row_index: usize, col_index: usize, tag: Tag, size: usize) -> Self {
        Block {
            row_index,
            col_index,
            tag,
            size,
            payload: vec![0.0; size * size].into(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn payload(&self) -> &[f64] {
        &self.payload
    }

    pub fn to_dense(&self) -> Dense {
        Dense {
            n: self.size,
            data: self.payload.to_vec(),
        }
    }

    /// Same payload (shared, not copied) under new indices and tag.
    pub fn relocated(&self, row_index: usize, col_index: usize, tag: Tag) -> Self {
        Block {
            row_index,
            col_index,
            tag,
            size: self.size,
            payload: Arc::clone(&self.payload),
        }
    }

    pub fn with_payload(&self, payload: Vec<f64>) -> Result<Self> {
        Block::new(self.row_index, self.col_index, self.tag, self.size, payload)
    }

    pub fn negated(&self) -> Self {
        let payload: Vec<f64> = self.payload.iter().map(|v| -v).collect();
        Block {
            payload: payload.into(),
            ..self.clone()
        }
    }

    fn check_compatible(&self, other: &Block) -> Result<()> {
        if self.size != other.size {
            return Err(Error::BlockSizeMismatch {
                left: self.size,
                right: other.size,
            });
        }
        if (self.row_index, self.col_index) != (other.row_index, other.col_index) {
            return Err(Error::PositionMismatch(
                self.row_index,
                self.col_index,
                other.row_index,
                other.col_index,
            ));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Block, f: impl Fn(f64, f64) -> f64) -> Result<Block> {
        self.check_compatible(other)?;
        let payload: Vec<f64> = self
            .payload
            .iter()
            .zip(other.payload.iter())
            .map(|(x, y)| f(*x, *y))
            .collect();
        Ok(Block {
            payload: payload.into(),
            ..self.clone()
        })
    }
}

/// Elementwise `a + b`; the result keeps `a`'s indices and tag.
pub fn block_add(a: &Block, b: &Block) -> Result<Block> {
    a.zip_with(b, |x, y| x + y)
}

/// Elementwise `a - b`; the result keeps `a`'s indices and tag.
pub fn block_sub(a: &Block, b: &Block) -> Result<Block> {
    a.zip_with(b, |x, y| x - y)
}

/// Quadrant of a sub-matrix of `2 * half_in_blocks` blocks per side that
/// contains `block`.
pub fn quadrant_of(block: &Block, half_in_blocks: usize) -> Quadrant {
    debug_assert!(block.row_index < 2 * half_in_blocks && block.col_index < 2 * half_in_blocks);
    Quadrant::from_halves(
        block.row_index >= half_in_blocks,
        block.col_index >= half_in_blocks,
    )
}

pub fn local_position(block: &Block, half_in_blocks: usize) -> (usize, usize) {
    (
        block.row_index % half_in_blocks,
        block.col_index % half_in_blocks,
    )
}

/// A square matrix stored as `b x b` tiles, one block per position.
#[derive(Clone, Debug)]
pub struct BlockMatrix {
    n: usize,
    block_size: usize,
    blocks: Vec<Block>,
}

impl BlockMatrix {
    /// Validates that `blocks` covers the `b x b` grid exactly once and
    /// stores them sorted by (row, col).
    pub fn from_blocks(n: usize, block_size: usize, mut blocks: Vec<Block>) -> Result<Self> {
        validate_blocking(n, block_size)?;
        let grid = n / block_size;
        let mut seen = vec![false; grid * grid];
        for blk in &blocks {
            if blk.size != block_size {
                return Err(Error::BlockSizeMismatch {
                    left: block_size,
                    right: blk.size,
                });
            }
            if blk.row_index >= grid || blk.col_index >= grid {
                return Err(Error::BlockOutOfGrid {
                    row: blk.row_index,
                    col: blk.col_index,
                    grid,
                });
            }
            let slot = &mut seen[blk.row_index * grid + blk.col_index];
            if *slot {
                return Err(Error::DuplicateBlock {
                    row: blk.row_index,
                    col: blk.col_index,
                });
            }
            *slot = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::MissingBlock {
                row: i / grid,
                col: i % grid,
            });
        }
        blocks.sort_by_key(|b| (b.row_index, b.col_index));
        Ok(BlockMatrix {
            n,
            block_size,
            blocks,
        })
    }

    /// Builds the tiled form of a sparse coordinate listing; absent entries
    /// are zero and every block gets tag `(label, 0)`.
    pub fn from_coordinate_entries(
        entries: &[(usize, usize, f64)],
        n: usize,
        block_size: usize,
        label: Label,
    ) -> Result<Self> {
        validate_blocking(n, block_size)?;
        let grid = n / block_size;
        let mut payloads = vec![vec![0.0; block_size * block_size]; grid * grid];
        let mut seen = HashSet::with_capacity(entries.len());
        for &(row, col, value) in entries {
            if row >= n || col >= n {
                return Err(Error::IndexOutOfRange { row, col, n });
            }
            if !seen.insert((row, col)) {
                return Err(Error::DuplicateEntry { row, col });
            }
            let slot = (row / block_size) * grid + col / block_size;
            payloads[slot][(row % block_size) * block_size + col % block_size] = value;
        }
        let blocks = payloads
            .into_iter()
            .enumerate()
            .map(|(i, p)| Block {
                row_index: i / grid,
                col_index: i % grid,
                tag: Tag::root(label),
                size: block_size,
                payload: p.into(),
            })
            .collect();
        Ok(BlockMatrix {
            n,
            block_size,
            blocks,
        })
    }

    pub fn from_dense(dense: &Dense, block_size: usize, label: Label) -> Result<Self> {
        validate_blocking(dense.n, block_size)?;
        let grid = dense.n / block_size;
        let blocks = (0..grid * grid)
            .map(|i| {
                let (r, c) = (i / grid, i % grid);
                let w = dense.window(r * block_size, c * block_size, block_size);
                Block {
                    row_index: r,
                    col_index: c,
                    tag: Tag::root(label),
                    size: block_size,
                    payload: w.data.into(),
                }
            })
            .collect();
        Ok(BlockMatrix {
            n: dense.n,
            block_size,
            blocks,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Number of block rows (= block columns), `n / block_size`.
    pub fn splits(&self) -> usize {
        self.n / self.block_size
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Block> {
        self.blocks
    }

    pub fn to_dense(&self) -> Result<Dense> {
        let grid = self.splits();
        let mut seen = vec![false; grid * grid];
        let mut out = Dense::zeros(self.n);
        for blk in &self.blocks {
            if blk.row_index >= grid || blk.col_index >= grid {
                return Err(Error::BlockOutOfGrid {
                    row: blk.row_index,
                    col: blk.col_index,
                    grid,
                });
            }
            let slot = &mut seen[blk.row_index * grid + blk.col_index];
            if *slot {
                return Err(Error::DuplicateBlock {
                    row: blk.row_index,
                    col: blk.col_index,
                });
            }
            *slot = true;
            out.paste(
                blk.row_index * self.block_size,
                blk.col_index * self.block_size,
                &blk.payload,
                self.block_size,
            );
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::MissingBlock {
                row: i / grid,
                col: i % grid,
            });
        }
        Ok(out)
    }
}
