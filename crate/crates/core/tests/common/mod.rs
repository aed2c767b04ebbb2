//! Independent linear-algebra helpers for oracle tests.
//!
//! Everything here is deliberately written with plain nested loops and
//! Gauss-Jordan elimination so the oracles share no code with the library
//! paths they check.

#![allow(clippy::needless_range_loop)]

pub type Mat = Vec<Vec<f64>>;

pub fn transpose(a: &Mat) -> Mat {
    let rows = a.len();
    let cols = a[0].len();
    let mut out = vec![vec![0.0; rows]; cols];
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[j][i] = *v;
        }
    }
    out
}

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let inner = b.len();
    let m = b[0].len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for k in 0..inner {
            for j in 0..m {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn mat_vec(a: &Mat, v: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

/// Inverse of a square matrix by Gauss-Jordan elimination with partial
/// pivoting. Panics on a singular input; oracle fixtures are chosen to be
/// well conditioned.
pub fn gauss_jordan_inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut work: Mat = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut extended = row.clone();
            extended.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            extended
        })
        .collect();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| {
                work[i][col]
                    .abs()
                    .partial_cmp(&work[j][col].abs())
                    .unwrap()
            })
            .unwrap();
        assert!(
            work[pivot_row][col].abs() > 1e-12,
            "oracle fixture produced a singular matrix"
        );
        work.swap(col, pivot_row);
        let pivot = work[col][col];
        for v in work[col].iter_mut() {
            *v /= pivot;
        }
        for row in 0..n {
            if row != col {
                let factor = work[row][col];
                for j in 0..2 * n {
                    let adjust = factor * work[col][j];
                    work[row][j] -= adjust;
                }
            }
        }
    }
    work.iter().map(|row| row[n..].to_vec()).collect()
}

/// Ordinary least squares by explicit normal equations: coefficients,
/// (X'X)^{-1}, residuals and the residual sum of squares.
pub fn normal_equations(design: &Mat, response: &[f64]) -> (Vec<f64>, Mat, Vec<f64>, f64) {
    let xt = transpose(design);
    let xtx = mat_mul(&xt, design);
    let xtx_inv = gauss_jordan_inverse(&xtx);
    let xty = mat_vec(&xt, response);
    let coefficients = mat_vec(&xtx_inv, &xty);
    let fitted = mat_vec(design, &coefficients);
    let residuals: Vec<f64> = response
        .iter()
        .zip(&fitted)
        .map(|(y, f)| y - f)
        .collect();
    let rss = residuals.iter().map(|e| e * e).sum();
    (coefficients, xtx_inv, residuals, rss)
}
