//! Row-major GEMM wrappers over `matrixmultiply::dgemm`.
//!
//! All products in the crate go through these three entry points so that a
//! given (m, k, n) always reduces in the same order.

use crate::error::{Error, Result};

pub(crate) fn matmul_dims(a: &[usize], b: &[usize]) -> Result<(usize, usize, usize)> {
    if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
        return Err(Error::dim(format!(
            "matmul of {a:?} by {b:?}: inner dimensions must agree"
        )));
    }
    Ok((a[0], a[1], b[1]))
}

#[allow(clippy::too_many_arguments)]
fn dgemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the asserts above bound every index the kernel touches given
    // the dense strides supplied by the three callers below.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = a·b + beta·c`, with a `[m,k]`, b `[k,n]`.
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    dgemm(m, k, n, a, k as isize, 1, b, n as isize, 1, beta, c);
}

/// `c = aᵀ·b + beta·c`, with a stored `[k,m]`, b `[k,n]`.
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    dgemm(m, k, n, a, 1, m as isize, b, n as isize, 1, beta, c);
}

/// `c = a·bᵀ + beta·c`, with a `[m,k]`, b stored `[n,k]`.
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    dgemm(m, k, n, a, k as isize, 1, b, 1, k as isize, beta, c);
}

pub fn frobenius(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest singular value of a row-major `[rows, cols]` matrix by power
/// iteration on `AᵀA`, starting from the all-ones vector.
pub fn spectral_norm(a: &[f64], rows: usize, cols: usize, iterations: usize) -> f64 {
    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut av = vec![0.0; rows];
    let mut sigma = 0.0;
    for _ in 0..iterations.max(1) {
        gemm_nn(rows, cols, 1, a, &v, &mut av, 0.0);
        gemm_tn(cols, rows, 1, a, &av, &mut v, 0.0);
        let norm = frobenius(&v);
        if norm == 0.0 {
            return 0.0;
        }
        sigma = norm.sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    }
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transposed_variants_agree() {
        // a [2,3], b [3,2]
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0; 4];
        gemm_nn(2, 3, 2, &a, &b, &mut c, 0.0);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);

        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let mut c2 = [0.0; 4];
        gemm_tn(2, 3, 2, &at, &b, &mut c2, 0.0);
        assert_eq!(c, c2);

        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0];
        let mut c3 = [1.0; 4];
        gemm_nt(2, 3, 2, &a, &bt, &mut c3, 1.0);
        assert_eq!(c3, [59.0, 65.0, 140.0, 155.0]);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = [3.0, 0.0, 0.0, 0.0, 2.0, 0.0];
        assert!((spectral_norm(&a, 2, 3, 50) - 3.0).abs() < 1e-9);
    }
}
