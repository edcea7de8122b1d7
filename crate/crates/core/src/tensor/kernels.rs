// Dense kernels. Every reduction accumulates sequentially in index order;
// the inner loops run across outputs so the compiler can vectorize without
// reordering any sum.

use super::Element;

#[inline]
pub fn add_assign<T: Element>(acc: &mut [T], x: &[T]) {
    debug_assert_eq!(acc.len(), x.len());
    for (a, &b) in acc.iter_mut().zip(x) {
        *a = *a + b;
    }
}

const MR: usize = 4;
const NR: usize = 16;

/// `c[m,n] += a[m,k] · b[k,n]`
///
/// Tiles of `MR × NR` outputs are accumulated in locals; each output still
/// sums its `k` products in order, so tiling does not change the result.
pub fn gemm_nn<T: Element>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    let mut i = 0;
    while i < m {
        let rows = MR.min(m - i);
        let mut j = 0;
        while j < n {
            let cols = NR.min(n - j);
            if rows == MR && cols == NR {
                tile_full(a, b, c, i, j, k, n);
            } else {
                for r in i..i + rows {
                    let arow = &a[r * k..(r + 1) * k];
                    for col in j..j + cols {
                        let mut acc = c[r * n + col];
                        for (p, &av) in arow.iter().enumerate() {
                            acc = acc + av * b[p * n + col];
                        }
                        c[r * n + col] = acc;
                    }
                }
            }
            j += cols;
        }
        i += rows;
    }
}

#[inline(always)]
fn tile_full<T: Element>(a: &[T], b: &[T], c: &mut [T], i: usize, j: usize, k: usize, n: usize) {
    let mut acc = [[T::zero(); NR]; MR];
    for (r, row) in acc.iter_mut().enumerate() {
        row.copy_from_slice(&c[(i + r) * n + j..(i + r) * n + j + NR]);
    }
    for p in 0..k {
        let brow: &[T; NR] = b[p * n + j..p * n + j + NR].try_into().expect("tile width");
        for (r, row) in acc.iter_mut().enumerate() {
            let av = a[(i + r) * k + p];
            for q in 0..NR {
                row[q] = row[q] + av * brow[q];
            }
        }
    }
    for (r, row) in acc.iter().enumerate() {
        c[(i + r) * n + j..(i + r) * n + j + NR].copy_from_slice(row);
    }
}

/// `c[k,n] += a[m,k]ᵀ · g[m,n]`
pub fn gemm_tn<T: Element>(a: &[T], g: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    let at = transpose2(a, m, k);
    gemm_nn(&at, g, c, k, m, n);
}

/// `c[m,k] += g[m,n] · b[k,n]ᵀ`
pub fn gemm_nt<T: Element>(g: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    let bt = transpose2(b, k, n);
    gemm_nn(g, &bt, c, m, n, k);
}

/// Row-major transpose of a `[rows, cols]` matrix.
pub fn transpose2<T: Element>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for (cidx, &v) in x[r * cols..(r + 1) * cols].iter().enumerate() {
            out[cidx * rows + r] = v;
        }
    }
    out
}

/// Splits `shape` around `axis` into `(outer, len, inner)`.
pub fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}
