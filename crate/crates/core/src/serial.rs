//! Single-node multiplication: the triple-loop product and classic
//! seven-product Strassen recursion.

use crate::blockmat::{require_pow2, Dense};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: usize = 64;

fn check_square_pair(a: &Dense, b: &Dense) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} times {}x{}",
            a.n(),
            a.n(),
            b.n(),
            b.n()
        )));
    }
    Ok(())
}

/// `c[i][j] = sum_k a[i][k] * b[k][j]`, each sum accumulated in ascending k.
pub fn naive_multiply(a: &Dense, b: &Dense) -> Result<Dense> {
    check_square_pair(a, b)?;
    let n = a.n();
    let mut c = Dense::zeros(n);
    multiply_into(a.as_slice(), b.as_slice(), c.as_mut_slice(), n);
    Ok(c)
}

/// Raw row-major kernel over `n x n` slices; `out` must be zeroed.
pub fn multiply_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize) {
    debug_assert!(a.len() == n * n && b.len() == n * n && out.len() == n * n);
    // i-k-j order: for every (i, j) the k-terms still arrive in ascending k.
    for i in 0..n {
        let row = &mut out[i * n..(i + 1) * n];
        for k in 0..n {
            let aik = a[i * n + k];
            let brow = &b[k * n..(k + 1) * n];
            for (o, bk) in row.iter_mut().zip(brow) {
                *o += aik * bk;
            }
        }
    }
}

/// Product plus the work counters of one serial Strassen run.
#[derive(Clone, Debug)]
pub struct StrassenRun {
    pub product: Dense,
    pub base_multiplies: u64,
    /// Quarter-size matrix additions/subtractions, 18 per split.
    pub additions: u64,
}

pub fn serial_strassen(a: &Dense, b: &Dense, threshold: usize) -> Result<StrassenRun> {
    check_square_pair(a, b)?;
    let n = a.n();
    require_pow2("matrix dimension", n)?;
    if threshold == 0 || !threshold.is_power_of_two() || threshold > n {
        return Err(Error::InvalidThreshold { threshold, n });
    }
    let mut run = StrassenRun {
        product: Dense::zeros(0),
        base_multiplies: 0,
        additions: 0,
    };
    run.product = strassen_rec(a, b, threshold, &mut run.base_multiplies, &mut run.additions);
    Ok(run)
}

fn add(x: &Dense, y: &Dense) -> Dense {
    let data = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p + q).collect();
    Dense::from_vec(x.n(), data).expect("same size")
}

fn sub(x: &Dense, y: &Dense) -> Dense {
    let data = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p - q).collect();
    Dense::from_vec(x.n(), data).expect("same size")
}

fn quarters(m: &Dense) -> [Dense; 4] {
    let h = m.n() / 2;
    [m.window(0, 0, h), m.window(0, h, h), m.window(h, 0, h), m.window(h, h, h)]
}

fn strassen_rec(a: &Dense, b: &Dense, threshold: usize, mults: &mut u64, adds: &mut u64) -> Dense {
    let n = a.n();
    if n == threshold {
        *mults += 1;
        let mut c = Dense::zeros(n);
        multiply_into(a.as_slice(), b.as_slice(), c.as_mut_slice(), n);
        return c;
    }
    let [a11, a12, a21, a22] = quarters(a);
    let [b11, b12, b21, b22] = quarters(b);
    let mut rec = |x: &Dense, y: &Dense| strassen_rec(x, y, threshold, mults, adds);

    let m1 = rec(&add(&a11, &a22), &add(&b11, &b22));
    let m2 = rec(&add(&a21, &a22), &b11);
    let m3 = rec(&a11, &sub(&b12, &b22));
    let m4 = rec(&a22, &sub(&b21, &b11));
    let m5 = rec(&add(&a11, &a12), &b22);
    let m6 = rec(&sub(&a21, &a11), &add(&b11, &b12));
    let m7 = rec(&sub(&a12, &a22), &add(&b21, &b22));

    let c11 = add(&sub(&add(&m1, &m4), &m5), &m7);
    let c12 = add(&m3, &m5);
    let c21 = add(&m2, &m4);
    let c22 = add(&add(&sub(&m1, &m2), &m3), &m6);
    *adds += 18;

    let h = n / 2;
    let mut c = Dense::zeros(n);
    c.paste(0, 0, c11.as_slice(), h);
    c.paste(0, h, c12.as_slice(), h);
    c.paste(h, 0, c21.as_slice(), h);
    c.paste(h, h, c22.as_slice(), h);
    c
}
