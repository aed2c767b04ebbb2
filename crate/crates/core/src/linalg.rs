//! Dense numerical kernels: least-squares solving and logistic regression
//! by iteratively reweighted least squares.
//!
//! No statistical semantics live here; estimators interpret the output.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative tolerance for declaring a design rank-deficient.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;

const IRLS_MAX_ITERATIONS: usize = 100;
const IRLS_TOLERANCE: f64 = 1e-10;
const SEPARATION_COEFFICIENT_BOUND: f64 = 30.0;
const WEIGHT_FLOOR: f64 = 1e-12;

/// Row-major dense matrix of 64-bit reals.
///
/// Entries are validated finite at construction; kernels never see NaN or
/// infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    /// Build from row-major values. Fails on length mismatch or non-finite
    /// entries.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::dim("matrix storage", rows * cols, values.len()));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite("matrix entries"));
        }
        Ok(DenseMatrix { rows, cols, values })
    }

    /// Build by evaluating `f(row, col)` at every position.
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        DenseMatrix::new(rows, cols, values)
    }

    /// Build from a slice of equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        for r in rows {
            if r.len() != ncols {
                return Err(Error::dim("row length", ncols, r.len()));
            }
        }
        DenseMatrix::new(nrows, ncols, rows.concat())
    }

    /// Assemble columns side by side.
    pub fn from_columns(columns: &[&[f64]]) -> Result<Self> {
        let ncols = columns.len();
        let nrows = columns.first().map_or(0, |c| c.len());
        for c in columns {
            if c.len() != nrows {
                return Err(Error::dim("column length", nrows, c.len()));
            }
        }
        DenseMatrix::from_fn(nrows, ncols, |i, j| columns[j][i])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major storage.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(row < self.rows && col < self.cols, "index out of bounds");
        self.values[row * self.cols + col]
    }

    /// Contiguous view of one row.
    pub fn row(&self, row: usize) -> &[f64] {
        assert!(row < self.rows, "row out of bounds");
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
            .expect("transpose preserves finiteness")
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::dim("matmul inner dimension", self.cols, other.rows));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        DenseMatrix::new(self.rows, other.cols, out)
    }

    /// Matrix-vector product `self * v`.
    pub fn mat_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::dim("mat_vec length", self.cols, v.len()));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Maximum absolute difference from symmetry, `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in 0..i.min(self.cols) {
                if j < self.cols && i < self.rows {
                    worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
                }
            }
        }
        worst
    }

    pub(crate) fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.values)
    }

    pub(crate) fn from_dmatrix(m: &DMatrix<f64>) -> DenseMatrix {
        DenseMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            values: m.transpose().as_slice().to_vec(),
        }
    }
}

/// Output of [`solve_least_squares`].
#[derive(Debug, Clone)]
pub struct LeastSquaresSolution {
    /// Minimizing coefficients, one per design column.
    pub coefficients: Vec<f64>,
    /// Per-observation residuals `y - X b`.
    pub residuals: Vec<f64>,
    /// Residual sum of squares.
    pub rss: f64,
    /// Column rank of the design (equals the column count on success).
    pub rank: usize,
    /// `(X'X)^{-1}`, reconstructed from the triangular factor.
    pub xtx_inverse: DenseMatrix,
}

impl LeastSquaresSolution {
    /// Fitted values `X b` for the design the solution came from.
    pub fn fitted(&self, design: &DenseMatrix) -> Result<Vec<f64>> {
        design.mat_vec(&self.coefficients)
    }
}

/// Solve `min_b ||y - X b||^2` with the default rank tolerance.
pub fn solve_least_squares(design: &DenseMatrix, response: &[f64]) -> Result<LeastSquaresSolution> {
    solve_least_squares_with(design, response, DEFAULT_RANK_TOLERANCE)
}

/// Solve `min_b ||y - X b||^2` via column-pivoted QR.
///
/// The design must be tall (rows >= cols) and of full column rank relative
/// to `rank_tolerance`, otherwise `RankDeficient` is returned. Pivoted QR
/// keeps near-collinear interaction columns from silently corrupting the
/// solution, which raw normal equations would.
pub fn solve_least_squares_with(
    design: &DenseMatrix,
    response: &[f64],
    rank_tolerance: f64,
) -> Result<LeastSquaresSolution> {
    let n = design.rows();
    let k = design.cols();
    if response.len() != n {
        return Err(Error::dim("response length", n, response.len()));
    }
    if n < k {
        return Err(Error::dim("observations (need rows >= cols)", k, n));
    }
    if !response.iter().all(|v| v.is_finite()) {
        return Err(Error::non_finite("response"));
    }

    let a = design.to_dmatrix();
    let b = DVector::from_column_slice(response);
    let qr = a.col_piv_qr();
    let r = qr.r();

    let pivot_scale = r[(0, 0)].abs();
    let rank = (0..k)
        .take_while(|&i| r[(i, i)].abs() > rank_tolerance * pivot_scale)
        .count();
    if rank < k {
        return Err(Error::RankDeficient { rank, cols: k });
    }

    let qtb = qr.q().transpose() * &b;
    let mut coef = r
        .solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient { rank, cols: k })?;
    qr.p().inv_permute_rows(&mut coef);

    // (X'X)^{-1} = P (R'R)^{-1} P' from the same factorization.
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(Error::RankDeficient { rank, cols: k })?;
    let mut xtx_inv = &r_inv * r_inv.transpose();
    qr.p().inv_permute_rows(&mut xtx_inv);
    qr.p().inv_permute_columns(&mut xtx_inv);

    let fitted = design.to_dmatrix() * &coef;
    let residuals: Vec<f64> = response
        .iter()
        .zip(fitted.iter())
        .map(|(y, f)| y - f)
        .collect();
    let rss = residuals.iter().map(|r| r * r).sum();

    Ok(LeastSquaresSolution {
        coefficients: coef.as_slice().to_vec(),
        residuals,
        rss,
        rank,
        xtx_inverse: DenseMatrix::from_dmatrix(&xtx_inv),
    })
}

/// `(X'X)^{-1}` of a full-rank design, via its QR factorization.
pub(crate) fn cross_product_inverse(design: &DenseMatrix, rank_tolerance: f64) -> Result<DenseMatrix> {
    let k = design.cols();
    let qr = design.to_dmatrix().col_piv_qr();
    let r = qr.r();
    let pivot_scale = r[(0, 0)].abs();
    let rank = (0..k)
        .take_while(|&i| r[(i, i)].abs() > rank_tolerance * pivot_scale)
        .count();
    if rank < k {
        return Err(Error::RankDeficient { rank, cols: k });
    }
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(Error::RankDeficient { rank, cols: k })?;
    let mut xtx_inv = &r_inv * r_inv.transpose();
    qr.p().inv_permute_rows(&mut xtx_inv);
    qr.p().inv_permute_columns(&mut xtx_inv);
    Ok(DenseMatrix::from_dmatrix(&xtx_inv))
}

/// Maximum-likelihood logistic fit.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    /// Coefficient estimates, one per design column.
    pub coefficients: Vec<f64>,
    /// Inverse observed information at the estimate.
    pub covariance: DenseMatrix,
    /// IRLS iterations used.
    pub iterations: usize,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fit a binomial-logit model by iteratively reweighted least squares.
///
/// Converges when the largest absolute coefficient change drops below
/// 1e-10, capped at 100 iterations. Diverging coefficients (magnitude
/// beyond 30) or underflowing weights signal separation.
pub fn fit_logistic(design: &DenseMatrix, binary_response: &[f64]) -> Result<LogisticFit> {
    let n = design.rows();
    let k = design.cols();
    if binary_response.len() != n {
        return Err(Error::dim("response length", n, binary_response.len()));
    }
    for (i, &y) in binary_response.iter().enumerate() {
        if y != 0.0 && y != 1.0 {
            return Err(Error::NonBinaryResponse { row: i, value: y });
        }
    }
    let ones = binary_response.iter().filter(|&&y| y == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::Separation);
    }

    let mut beta = vec![0.0; k];
    let mut weighted_design = vec![0.0; n * k];
    let mut weighted_response = vec![0.0; n];

    for iteration in 1..=IRLS_MAX_ITERATIONS {
        let eta = design.mat_vec(&beta)?;
        let mut all_underflow = true;
        for i in 0..n {
            let mu = sigmoid(eta[i]);
            let w = (mu * (1.0 - mu)).max(WEIGHT_FLOOR);
            if w > WEIGHT_FLOOR {
                all_underflow = false;
            }
            let z = eta[i] + (binary_response[i] - mu) / w;
            let sw = w.sqrt();
            for j in 0..k {
                weighted_design[i * k + j] = sw * design.get(i, j);
            }
            weighted_response[i] = sw * z;
        }
        if all_underflow {
            return Err(Error::Separation);
        }

        let wd = DenseMatrix::new(n, k, weighted_design.clone())?;
        let step = solve_least_squares(&wd, &weighted_response)?;
        let delta = step
            .coefficients
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        beta = step.coefficients;

        if beta.iter().any(|b| b.abs() > SEPARATION_COEFFICIENT_BOUND) {
            return Err(Error::Separation);
        }
        if delta < IRLS_TOLERANCE {
            // Information matrix evaluated at the converged estimate.
            let eta = design.mat_vec(&beta)?;
            let info_design = DenseMatrix::from_fn(n, k, |i, j| {
                let mu = sigmoid(eta[i]);
                (mu * (1.0 - mu)).max(WEIGHT_FLOOR).sqrt() * design.get(i, j)
            })?;
            let covariance = cross_product_inverse(&info_design, DEFAULT_RANK_TOLERANCE)?;
            return Ok(LogisticFit {
                coefficients: beta,
                covariance,
                iterations: iteration,
            });
        }
    }

    Err(Error::NonConvergence {
        iterations: IRLS_MAX_ITERATIONS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn intercept_only_fit_is_the_mean() {
        let design = DenseMatrix::new(4, 1, vec![1.0; 4]).unwrap();
        let sol = solve_least_squares(&design, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(sol.coefficients[0], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.rss, 5.0, epsilon = 1e-12);
        assert_eq!(sol.rank, 1);
    }

    #[test]
    fn exact_linear_response_has_zero_residuals() {
        let design =
            DenseMatrix::from_columns(&[&[1.0; 5], &[0.0, 1.0, 2.0, 3.0, 4.0]]).unwrap();
        let response: Vec<f64> = (0..5).map(|i| 2.0 - 3.0 * i as f64).collect();
        let sol = solve_least_squares(&design, &response).unwrap();
        assert_abs_diff_eq!(sol.coefficients[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.coefficients[1], -3.0, epsilon = 1e-12);
        assert!(sol.residuals.iter().all(|r| r.abs() < 1e-12));
        assert!(sol.rss < 1e-20);
    }

    #[test]
    fn duplicate_column_is_rank_deficient() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let design = DenseMatrix::from_columns(&[&[1.0; 4], &x, &x]).unwrap();
        match solve_least_squares(&design, &[1.0, 2.0, 3.0, 4.0]) {
            Err(Error::RankDeficient { rank, cols }) => {
                assert_eq!(cols, 3);
                assert!(rank < 3);
            }
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let design = DenseMatrix::new(3, 1, vec![1.0; 3]).unwrap();
        assert!(matches!(
            solve_least_squares(&design, &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_entries_are_rejected_at_construction() {
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { .. })
        ));
        let design = DenseMatrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            solve_least_squares(&design, &[1.0, f64::INFINITY]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn wide_design_is_rejected() {
        let design = DenseMatrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        assert!(solve_least_squares(&design, &[1.0]).is_err());
    }

    fn two_by_two_design(a: usize, b: usize, c: usize, d: usize) -> (DenseMatrix, Vec<f64>) {
        // Cells: x=1 -> (y=1) a times, (y=0) b times; x=0 -> (y=1) c, (y=0) d.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (x, resp, count) in [(1.0, 1.0, a), (1.0, 0.0, b), (0.0, 1.0, c), (0.0, 0.0, d)] {
            for _ in 0..count {
                rows.push(vec![1.0, x]);
                y.push(resp);
            }
        }
        (DenseMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn logistic_two_by_two_matches_closed_form_log_odds_ratio() {
        let (design, y) = two_by_two_design(40, 10, 10, 40);
        let fit = fit_logistic(&design, &y).unwrap();
        // log((40*40)/(10*10)) = log 16
        assert_abs_diff_eq!(fit.coefficients[1], 16.0_f64.ln(), epsilon = 1e-6);
        assert_abs_diff_eq!(fit.coefficients[0], 0.25_f64.ln(), epsilon = 1e-6);
    }

    #[test]
    fn logistic_balanced_independent_predictor_has_zero_coefficient() {
        let (design, y) = two_by_two_design(25, 25, 25, 25);
        let fit = fit_logistic(&design, &y).unwrap();
        assert_abs_diff_eq!(fit.coefficients[1], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn logistic_degenerate_response_is_separation() {
        let design = DenseMatrix::new(4, 1, vec![1.0; 4]).unwrap();
        assert!(matches!(
            fit_logistic(&design, &[1.0, 1.0, 1.0, 1.0]),
            Err(Error::Separation)
        ));
    }

    #[test]
    fn logistic_perfectly_separated_predictor_is_separation() {
        let (design, y) = two_by_two_design(30, 0, 0, 30);
        assert!(matches!(fit_logistic(&design, &y), Err(Error::Separation)));
    }

    #[test]
    fn logistic_non_binary_response_is_rejected() {
        let design = DenseMatrix::new(3, 1, vec![1.0; 3]).unwrap();
        assert!(matches!(
            fit_logistic(&design, &[0.0, 1.0, 2.0]),
            Err(Error::NonBinaryResponse { row: 2, .. })
        ));
    }

    #[test]
    fn xtx_inverse_survives_column_pivoting() {
        // Wildly different column scales force the pivoted QR to reorder.
        let design = DenseMatrix::from_columns(&[
            &[1e-6, 2e-6, -1e-6, 3e-6, 5e-6],
            &[1.0, 1.0, 1.0, 1.0, 1.0],
            &[1e3, -2e3, 4e3, 0.5e3, -1e3],
        ])
        .unwrap();
        let sol = solve_least_squares(&design, &[1.0, 2.0, 0.0, 1.0, -1.0]).unwrap();
        // Check against X'X * inv = I.
        let xtx = design.transpose().matmul(&design).unwrap();
        let product = xtx.matmul(&sol.xtx_inverse).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(product.get(i, j), expected, epsilon = 1e-8);
            }
        }
    }
}
