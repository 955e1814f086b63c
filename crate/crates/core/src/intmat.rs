//! Exact integer linear algebra on small matrices.
//!
//! Determinants use fraction-free (Bareiss) elimination in `i128`, which is
//! exact for the sizes and entry magnitudes of tropical transition data
//! (`m <= 8`). Overflow is reported instead of wrapping.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type IntMatrix = DMatrix<i64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntMatrixError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("integer overflow in exact arithmetic")]
    Overflow,
    #[error("matrix is not unimodular (det = {0})")]
    NotUnimodular(i128),
}

fn bareiss_det(mut a: Vec<Vec<i128>>) -> Result<i128, IntMatrixError> {
    let n = a.len();
    if n == 0 {
        return Ok(1);
    }
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[k][k] == 0 {
            let Some(swap) = (k + 1..n).find(|&r| a[r][k] != 0) else {
                return Ok(0);
            };
            a.swap(k, swap);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let lhs = a[i][j]
                    .checked_mul(a[k][k])
                    .ok_or(IntMatrixError::Overflow)?;
                let rhs = a[i][k]
                    .checked_mul(a[k][j])
                    .ok_or(IntMatrixError::Overflow)?;
                a[i][j] = lhs.checked_sub(rhs).ok_or(IntMatrixError::Overflow)? / prev;
            }
        }
        prev = a[k][k];
    }
    Ok(sign * a[n - 1][n - 1])
}

fn rows_i128(m: &IntMatrix) -> Vec<Vec<i128>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] as i128).collect())
        .collect()
}

/// Exact determinant.
pub fn det(m: &IntMatrix) -> Result<i128, IntMatrixError> {
    if m.nrows() != m.ncols() {
        return Err(IntMatrixError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    bareiss_det(rows_i128(m))
}

pub fn is_unimodular(m: &IntMatrix) -> bool {
    matches!(det(m), Ok(d) if d == 1 || d == -1)
}

/// Exact inverse of a unimodular matrix through its adjugate.
pub fn inverse_unimodular(m: &IntMatrix) -> Result<IntMatrix, IntMatrixError> {
    let d = det(m)?;
    if d != 1 && d != -1 {
        return Err(IntMatrixError::NotUnimodular(d));
    }
    let n = m.nrows();
    let mut inv = IntMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            // cofactor C_ji goes to inv[i][j]
            let minor: Vec<Vec<i128>> = (0..n)
                .filter(|&r| r != j)
                .map(|r| {
                    (0..n)
                        .filter(|&c| c != i)
                        .map(|c| m[(r, c)] as i128)
                        .collect()
                })
                .collect();
            let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
            let c = sign * bareiss_det(minor)? * d;
            inv[(i, j)] = i64::try_from(c).map_err(|_| IntMatrixError::Overflow)?;
        }
    }
    Ok(inv)
}

/// Exact rank by fraction-free row reduction with gcd normalisation.
pub fn rank(m: &IntMatrix) -> Result<usize, IntMatrixError> {
    let mut a = rows_i128(m);
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| a[i][c] != 0) else {
            continue;
        };
        a.swap(r, p);
        for i in r + 1..rows {
            if a[i][c] == 0 {
                continue;
            }
            let (f, g) = (a[r][c], a[i][c]);
            for j in c..cols {
                let lhs = a[i][j].checked_mul(f).ok_or(IntMatrixError::Overflow)?;
                let rhs = a[r][j].checked_mul(g).ok_or(IntMatrixError::Overflow)?;
                a[i][j] = lhs.checked_sub(rhs).ok_or(IntMatrixError::Overflow)?;
            }
            let g = a[i].iter().fold(0i128, |acc, &x| gcd(acc, x));
            if g > 1 {
                a[i].iter_mut().for_each(|x| *x /= g);
            }
        }
        r += 1;
        if r == rows {
            break;
        }
    }
    Ok(r)
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn to_f64(m: &IntMatrix) -> DMatrix<f64> {
    m.map(|v| v as f64)
}

pub fn mul_vec(m: &IntMatrix, v: &DVector<f64>) -> DVector<f64> {
    to_f64(m) * v
}

/// Horizontal concatenation `[a | b]`.
pub fn hstack(a: &IntMatrix, b: &IntMatrix) -> IntMatrix {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = IntMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Build from row-major rows; all rows must share a length.
pub fn from_rows(rows: &[Vec<i64>], ncols: usize) -> Option<IntMatrix> {
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(IntMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
