//! Slice-level matrix kernels. Every output element accumulates over the
//! shared extent in ascending index order, whether or not rows are split
//! across threads.

use crate::exec::for_each_chunk;
use crate::scalar::Scalar;

/// Rows and columns of the register block in [`gemm_acc`].
const MR: usize = 4;
const NR: usize = 16;

/// `c += a · b` with `a` m×k, `b` k×n, `c` m×n.
///
/// Works on MR×NR blocks of `c` held in locals across the whole `k` loop;
/// each element still sums its terms in ascending `p` after its old value.
pub(crate) fn gemm_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    for_each_chunk(c, MR * n, m * k * n, |blk, rows| {
        let i0 = blk * MR;
        let mr = rows.len() / n;
        let mut j0 = 0;
        while j0 < n {
            let nr = NR.min(n - j0);
            if mr == MR && nr == NR {
                block_full(a, b, rows, i0, j0, k, n);
            } else {
                block_edge(a, b, rows, i0, j0, mr, nr, k, n);
            }
            j0 += nr;
        }
    });
}

#[inline(always)]
fn block_full<T: Scalar>(a: &[T], b: &[T], rows: &mut [T], i0: usize, j0: usize, k: usize, n: usize) {
    // Element loops rather than copy_from_slice: the latter's debug-build
    // precondition check takes the address of `acc` and keeps it in memory.
    let mut acc = [[T::zero(); NR]; MR];
    for (r, accr) in acc.iter_mut().enumerate() {
        for (x, &v) in accr.iter_mut().zip(&rows[r * n + j0..r * n + j0 + NR]) {
            *x = v;
        }
    }
    let a_rows: [&[T]; MR] = std::array::from_fn(|r| &a[(i0 + r) * k..(i0 + r + 1) * k]);
    for p in 0..k {
        let brow: &[T; NR] = b[p * n + j0..p * n + j0 + NR].try_into().expect("NR-wide slice");
        for (accr, a_row) in acc.iter_mut().zip(&a_rows) {
            let av = a_row[p];
            for (x, &bv) in accr.iter_mut().zip(brow) {
                *x += av * bv;
            }
        }
    }
    for (r, accr) in acc.iter().enumerate() {
        for (x, &v) in rows[r * n + j0..r * n + j0 + NR].iter_mut().zip(accr) {
            *x = v;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn block_edge<T: Scalar>(
    a: &[T],
    b: &[T],
    rows: &mut [T],
    i0: usize,
    j0: usize,
    mr: usize,
    nr: usize,
    k: usize,
    n: usize,
) {
    for r in 0..mr {
        let a_row = &a[(i0 + r) * k..(i0 + r + 1) * k];
        let out = &mut rows[r * n + j0..r * n + j0 + nr];
        for (p, &av) in a_row.iter().enumerate() {
            let brow = &b[p * n + j0..p * n + j0 + nr];
            for (cv, &bv) in out.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c = a · b`.
pub(crate) fn gemm<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    c.iter_mut().for_each(|v| *v = T::zero());
    gemm_acc(a, b, c, m, k, n);
}

/// `c += aᵀ · b` with `a` k×m, `b` k×n, `c` m×n.
pub(crate) fn gemm_tn_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], k: usize, m: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    let at = transpose(a, k, m);
    gemm_acc(&at, b, c, m, k, n);
}

/// `c += a · bᵀ` with `a` m×k, `b` n×k, `c` m×n.
pub(crate) fn gemm_nt_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    let bt = transpose(b, n, k);
    gemm_acc(a, &bt, c, m, k, n);
}

/// Transposes a rows×cols row-major matrix.
pub(crate) fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    debug_assert_eq!(a.len(), rows * cols);
    let mut out = vec![T::zero(); a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn transposed_variants_agree_with_naive() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i % 7) as f64 - 3.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i % 5) as f64 - 2.0).collect();
        let expect = naive(&a, &b, m, k, n);

        let mut c = vec![0.0; m * n];
        gemm_acc(&a, &b, &mut c, m, k, n);
        assert_eq!(c, expect);

        let mut c = vec![0.0; m * n];
        gemm_tn_acc(&transpose(&a, m, k), &b, &mut c, k, m, n);
        assert_eq!(c, expect);

        let mut c = vec![0.0; m * n];
        gemm_nt_acc(&a, &transpose(&b, k, n), &mut c, m, k, n);
        assert_eq!(c, expect);
    }

    #[test]
    fn blocked_matches_naive_on_ragged_shapes() {
        for (m, k, n) in [(9, 7, 37), (4, 3, 16), (1, 5, 3), (13, 1, 33)] {
            let a: Vec<f64> = (0..m * k).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
            let b: Vec<f64> = (0..k * n).map(|i| ((i * 5) % 11) as f64 - 5.0).collect();
            let mut c: Vec<f64> = (0..m * n).map(|i| i as f64).collect();
            let mut expect = naive(&a, &b, m, k, n);
            expect.iter_mut().enumerate().for_each(|(i, v)| *v += i as f64);
            gemm_acc(&a, &b, &mut c, m, k, n);
            assert_eq!(c, expect, "{m}x{k}x{n}");
        }
    }
}
