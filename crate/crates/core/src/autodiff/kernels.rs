//! Dense kernels shared by the forward and backward passes.

use rayon::prelude::*;

use super::tensor::Scalar;

/// Work (in multiply-adds) below which a batched product stays on the
/// calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

/// `c[m,n] += a[m,k] * b[k,n]`, all row-major.
#[inline]
pub fn gemm_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (c_ij, &b_pj) in c_row.iter_mut().zip(b_row) {
                *c_ij += a_ip * b_pj;
            }
        }
    }
}

/// Transposes a row-major `[rows, cols]` block.
pub fn transpose2<T: Scalar>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

/// Batched `out[b] = a[b] * b_mat[b or shared]`.
///
/// `b_shared` means the right operand is a single `[k,n]` matrix applied
/// to every batch element.
pub fn batched_matmul<T: Scalar>(
    a: &[T],
    b: &[T],
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    b_shared: bool,
) -> Vec<T> {
    let mut out = vec![T::zero(); batch * m * n];
    if b_shared {
        // One tall product: [batch*m, k] x [k, n].
        let rows = batch * m;
        if rows * k * n >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
            let chunk = rows.div_ceil(rayon::current_num_threads()).max(1);
            out.par_chunks_mut(chunk * n)
                .zip(a.par_chunks(chunk * k))
                .for_each(|(c, a_blk)| {
                    let r = a_blk.len() / k;
                    gemm_acc(a_blk, b, c, r, k, n)
                });
        } else {
            gemm_acc(a, b, &mut out, rows, k, n);
        }
        return out;
    }
    let body = |(i, c): (usize, &mut [T])| {
        gemm_acc(
            &a[i * m * k..(i + 1) * m * k],
            &b[i * k * n..(i + 1) * k * n],
            c,
            m,
            k,
            n,
        )
    };
    if batch * m * k * n >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
        out.par_chunks_mut(m * n).enumerate().for_each(body);
    } else {
        out.chunks_mut(m * n).enumerate().for_each(body);
    }
    out
}

/// Transposes the last two axes of a `[batch, rows, cols]` buffer.
pub fn batched_transpose<T: Scalar>(x: &[T], batch: usize, rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for i in 0..batch {
        out.extend(transpose2(
            &x[i * rows * cols..(i + 1) * rows * cols],
            rows,
            cols,
        ));
    }
    out
}

/// Row-wise numerically stable softmax over contiguous rows of width `w`.
pub fn softmax_rows<T: Scalar>(x: &[T], w: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for (src, dst) in x.chunks(w).zip(out.chunks_mut(w)) {
        let max = src.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut total = T::zero();
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s - max).exp();
            total += *d;
        }
        for d in dst.iter_mut() {
            *d /= total;
        }
    }
    out
}

/// Row-wise log-sum-exp over contiguous rows of width `w`.
pub fn logsumexp_rows<T: Scalar>(x: &[T], w: usize) -> Vec<T> {
    x.chunks(w)
        .map(|row| {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let total: T = row.iter().map(|&v| (v - max).exp()).sum();
            max + total.ln()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        let a: Vec<f64> = (0..6).map(|x| x as f64).collect();
        let b: Vec<f64> = (0..12).map(|x| (x as f64) * 0.5 - 1.0).collect();
        let mut c = vec![0.0; 8];
        gemm_acc(&a, &b, &mut c, 2, 3, 4);
        for i in 0..2 {
            for j in 0..4 {
                let expect: f64 = (0..3).map(|p| a[i * 3 + p] * b[p * 4 + j]).sum();
                assert_eq!(c[i * 4 + j], expect);
            }
        }
    }

    #[test]
    fn transpose_round_trip() {
        let x: Vec<f32> = (0..12).map(|v| v as f32).collect();
        let t = transpose2(&x, 3, 4);
        assert_eq!(transpose2(&t, 4, 3), x);
        assert_eq!(t[1], 4.0);
    }
}
