//! Dense row-major helpers for the small (n <= a few) matrices used by the
//! coefficient functions. Anything heavier goes through nalgebra.

use nalgebra::DMatrix;

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `out = m * v` for a row-major `rows x v.len()` matrix.
#[inline]
pub fn mat_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m[i * cols..(i + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(v) {
            acc += a * b;
        }
        *o = acc;
    }
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

/// Hilbert-Schmidt (Frobenius) norm of a difference of two matrices.
pub fn hs_distance(a: &[f64], b: &[f64]) -> f64 {
    distance(a, b)
}

pub fn to_dmatrix(m: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, m)
}

/// Inverse of a square row-major matrix, `None` if singular.
pub fn inverse(m: &[f64], n: usize) -> Option<Vec<f64>> {
    let inv = to_dmatrix(m, n).try_inverse()?;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = inv[(i, j)];
        }
    }
    Some(out)
}

/// Extreme singular values `(min, max)`.
pub fn singular_range(m: &[f64], rows: usize, cols: usize) -> (f64, f64) {
    let sv = DMatrix::from_row_slice(rows, cols, m).singular_values();
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = sv.iter().cloned().fold(0.0, f64::max);
    (min, max)
}

/// Operator (spectral) norm.
pub fn op_norm(m: &[f64], rows: usize, cols: usize) -> f64 {
    singular_range(m, rows, cols).1
}
