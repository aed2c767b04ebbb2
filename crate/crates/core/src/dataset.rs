//! Trial-data model, CSV ingestion, and design-matrix construction.
//!
//! A [`Dataset`] holds complete-case columns for the outcome, the randomized
//! assignment, the mediator, the instrumented baseline covariates X (those
//! interacted with assignment to form instruments), and any additional
//! adjustment covariates Z. [`build_designs`] assembles the fixed-order
//! design matrices every estimator consumes.

use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Complete-case trial data with assigned column roles.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Vec<f64>,
    r: Vec<f64>,
    m: Vec<f64>,
    x: DenseMatrix,
    x_names: Vec<String>,
    z: DenseMatrix,
    z_names: Vec<String>,
}

impl Dataset {
    /// Validate and assemble a dataset from columns.
    ///
    /// Requires at least two rows, equal column lengths, finite outcome and
    /// mediator values, a strictly 0/1 assignment with both arms present,
    /// and unique covariate names across `x_names` and `z_names`.
    pub fn new(
        y: Vec<f64>,
        r: Vec<f64>,
        m: Vec<f64>,
        x: DenseMatrix,
        x_names: Vec<String>,
        z: DenseMatrix,
        z_names: Vec<String>,
    ) -> Result<Dataset> {
        let n = y.len();
        if n < 2 {
            return Err(Error::invalid_spec("dataset requires at least 2 rows"));
        }
        if r.len() != n {
            return Err(Error::dim("assignment length", n, r.len()));
        }
        if m.len() != n {
            return Err(Error::dim("mediator length", n, m.len()));
        }
        if x.rows() != n {
            return Err(Error::dim("x rows", n, x.rows()));
        }
        if z.rows() != n {
            return Err(Error::dim("z rows", n, z.rows()));
        }
        if x_names.len() != x.cols() {
            return Err(Error::dim("x names", x.cols(), x_names.len()));
        }
        if z_names.len() != z.cols() {
            return Err(Error::dim("z names", z.cols(), z_names.len()));
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite("outcome"));
        }
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite("mediator"));
        }
        for (i, &v) in r.iter().enumerate() {
            if v != 0.0 && v != 1.0 {
                return Err(Error::NonBinaryAssignment {
                    detail: format!("row {}: assignment value {v}", i + 1),
                });
            }
        }
        let treated = r.iter().filter(|&&v| v == 1.0).count();
        if treated == 0 || treated == n {
            return Err(Error::NonBinaryAssignment {
                detail: "assignment must contain both 0 and 1".to_string(),
            });
        }
        let mut seen: Vec<&str> = Vec::new();
        for name in x_names.iter().chain(&z_names) {
            if seen.contains(&name.as_str()) {
                return Err(Error::DuplicateColumn { name: name.clone() });
            }
            seen.push(name);
        }
        Ok(Dataset {
            y,
            r,
            m,
            x,
            x_names,
            z,
            z_names,
        })
    }

    /// Assemble a dataset with no adjustment covariates.
    pub fn without_z(
        y: Vec<f64>,
        r: Vec<f64>,
        m: Vec<f64>,
        x: DenseMatrix,
        x_names: Vec<String>,
    ) -> Result<Dataset> {
        let n = y.len();
        let z = DenseMatrix::new(n, 0, Vec::new())?;
        Dataset::new(y, r, m, x, x_names, z, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of instrumented covariates.
    pub fn p(&self) -> usize {
        self.x.cols()
    }

    /// Number of adjustment covariates.
    pub fn q(&self) -> usize {
        self.z.cols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn z(&self) -> &DenseMatrix {
        &self.z
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn z_names(&self) -> &[String] {
        &self.z_names
    }

    /// Subjects with assignment 1.
    pub fn n_treated(&self) -> usize {
        self.r.iter().filter(|&&v| v == 1.0).count()
    }

    /// Subjects with assignment 0.
    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    /// True when every mediator value is 0 or 1.
    pub fn mediator_is_binary(&self) -> bool {
        self.m.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Copy of the dataset with the outcome column replaced.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::new(
            y,
            self.r.clone(),
            self.m.clone(),
            self.x.clone(),
            self.x_names.clone(),
            self.z.clone(),
            self.z_names.clone(),
        )
    }

    /// Copy of the dataset with the mediator column replaced.
    pub fn with_mediator(&self, m: Vec<f64>) -> Result<Dataset> {
        Dataset::new(
            self.y.clone(),
            self.r.clone(),
            m,
            self.x.clone(),
            self.x_names.clone(),
            self.z.clone(),
            self.z_names.clone(),
        )
    }
}

/// Column-role assignment for CSV ingestion.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub outcome: String,
    pub assignment: String,
    pub mediator: String,
    /// Instrumented covariates, in the X column order used everywhere.
    pub x: Vec<String>,
    /// Adjustment covariates.
    pub z: Vec<String>,
}

impl ColumnMap {
    fn mapped_names(&self) -> Vec<&str> {
        let mut names = vec![
            self.outcome.as_str(),
            self.assignment.as_str(),
            self.mediator.as_str(),
        ];
        names.extend(self.x.iter().map(String::as_str));
        names.extend(self.z.iter().map(String::as_str));
        names
    }
}

/// How rows with missing or unparseable cells are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Drop the row and account for it in the load report.
    #[default]
    DropRow,
    /// Fail the load on the first offending cell.
    Fail,
}

/// CSV ingestion options.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub missing_policy: MissingPolicy,
    /// Field delimiter byte.
    pub delimiter: u8,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            missing_policy: MissingPolicy::DropRow,
            delimiter: b',',
        }
    }
}

/// Accounting of what CSV ingestion kept and dropped.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rows_dropped: usize,
    /// Missing-cell counts per mapped column, in column-map order.
    pub drops_by_column: Vec<(String, usize)>,
}

impl LoadReport {
    /// One-line human-readable summary for the diagnostic stream.
    pub fn summary(&self) -> String {
        let mut line = format!("read {} rows, kept {}", self.rows_read, self.rows_kept);
        if self.rows_dropped > 0 {
            let detail: Vec<String> = self
                .drops_by_column
                .iter()
                .filter(|(_, count)| *count > 0)
                .map(|(name, count)| format!("{name}: {count}"))
                .collect();
            line.push_str(&format!(
                ", dropped {} ({})",
                self.rows_dropped,
                detail.join(", ")
            ));
        }
        line
    }
}

/// Load a delimited text file into a complete-case [`Dataset`].
///
/// A header row is required. Empty cells and the literal `NA` count as
/// missing; so do cells that fail to parse as finite numbers. The
/// assignment column must hold only 0 and 1 on the rows that are kept.
pub fn load_csv(
    path: impl AsRef<Path>,
    map: &ColumnMap,
    options: &LoadOptions,
) -> Result<(Dataset, LoadReport)> {
    let mut seen: Vec<&str> = Vec::new();
    for name in map.mapped_names() {
        if seen.contains(&name) {
            return Err(Error::DuplicateColumn {
                name: name.to_string(),
            });
        }
        seen.push(name);
    }

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();

    let mut indices = Vec::with_capacity(seen.len());
    for name in map.mapped_names() {
        let matches: Vec<usize> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| *h == name)
            .map(|(i, _)| i)
            .collect();
        match matches.as_slice() {
            [] => {
                return Err(Error::MissingColumn {
                    name: name.to_string(),
                })
            }
            [i] => indices.push(*i),
            _ => {
                return Err(Error::DuplicateColumn {
                    name: name.to_string(),
                })
            }
        }
    }

    let names = map.mapped_names();
    let ncols = names.len();
    let p = map.x.len();
    let q = map.z.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); ncols];
    let mut drop_counts = vec![0usize; ncols];
    let mut rows_read = 0usize;

    for (record_idx, record) in reader.records().enumerate() {
        let record = record?;
        let data_row = record_idx + 1;
        rows_read += 1;

        let mut parsed = Vec::with_capacity(ncols);
        let mut missing: Vec<usize> = Vec::new();
        for (slot, &col_idx) in indices.iter().enumerate() {
            let raw = record.get(col_idx).unwrap_or("").trim();
            if raw.is_empty() || raw == "NA" {
                missing.push(slot);
                parsed.push((0.0, raw.to_string()));
                continue;
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => parsed.push((v, String::new())),
                _ => {
                    missing.push(slot);
                    parsed.push((0.0, raw.to_string()));
                }
            }
        }

        if !missing.is_empty() {
            match options.missing_policy {
                MissingPolicy::Fail => {
                    let slot = missing[0];
                    return Err(Error::Parse {
                        row: data_row,
                        column: names[slot].to_string(),
                        value: parsed[slot].1.clone(),
                    });
                }
                MissingPolicy::DropRow => {
                    for &slot in &missing {
                        drop_counts[slot] += 1;
                    }
                    continue;
                }
            }
        }

        let assignment = parsed[1].0;
        if assignment != 0.0 && assignment != 1.0 {
            return Err(Error::NonBinaryAssignment {
                detail: format!("row {data_row}: assignment value {assignment}"),
            });
        }
        for (slot, (value, _)) in parsed.into_iter().enumerate() {
            columns[slot].push(value);
        }
    }

    let kept = columns[0].len();
    if kept < 2 {
        return Err(Error::EmptyAfterFiltering);
    }

    let n = kept;
    let x_cols: Vec<&[f64]> = (0..p).map(|j| columns[3 + j].as_slice()).collect();
    let z_cols: Vec<&[f64]> = (0..q).map(|j| columns[3 + p + j].as_slice()).collect();
    let x = if p == 0 {
        DenseMatrix::new(n, 0, Vec::new())?
    } else {
        DenseMatrix::from_columns(&x_cols)?
    };
    let z = if q == 0 {
        DenseMatrix::new(n, 0, Vec::new())?
    } else {
        DenseMatrix::from_columns(&z_cols)?
    };

    let dataset = Dataset::new(
        columns[0].clone(),
        columns[1].clone(),
        columns[2].clone(),
        x,
        map.x.clone(),
        z,
        map.z.clone(),
    )?;
    let report = LoadReport {
        rows_read,
        rows_kept: kept,
        rows_dropped: rows_read - kept,
        drops_by_column: names
            .iter()
            .map(|s| s.to_string())
            .zip(drop_counts)
            .collect(),
    };
    Ok((dataset, report))
}

/// Column layout of the second-stage design `[1, X, Z, R, mediator]`.
#[derive(Debug, Clone, Copy)]
pub struct SecondStageLayout {
    pub p: usize,
    pub q: usize,
}

impl SecondStageLayout {
    pub fn intercept(&self) -> usize {
        0
    }

    pub fn x_range(&self) -> Range<usize> {
        1..1 + self.p
    }

    pub fn z_range(&self) -> Range<usize> {
        1 + self.p..1 + self.p + self.q
    }

    /// Covariate block `[X, Z]`, the slots whose coefficients form beta.
    pub fn beta_range(&self) -> Range<usize> {
        1..1 + self.p + self.q
    }

    pub fn r(&self) -> usize {
        1 + self.p + self.q
    }

    pub fn mediator(&self) -> usize {
        2 + self.p + self.q
    }

    pub fn cols(&self) -> usize {
        3 + self.p + self.q
    }
}

/// Design matrices shared by the estimators.
///
/// The first stage regresses the mediator on `[1, R, X, Z, RX]`; the second
/// stage regresses the outcome on `[1, X, Z, R, mediator-slot]`, where the
/// mediator slot holds either observed or first-stage-fitted values.
#[derive(Debug, Clone)]
pub struct DesignBundle {
    first_stage: DenseMatrix,
    second_stage_base: DenseMatrix,
    x_means: Vec<f64>,
    p: usize,
    q: usize,
}

impl DesignBundle {
    pub fn n(&self) -> usize {
        self.first_stage.rows()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// First-stage design `[1, R, X, Z, RX]`.
    pub fn first_stage(&self) -> &DenseMatrix {
        &self.first_stage
    }

    /// First-stage design with the interaction block removed, `[1, R, X, Z]`.
    pub fn first_stage_restricted(&self) -> DenseMatrix {
        let keep = 2 + self.p + self.q;
        DenseMatrix::from_fn(self.first_stage.rows(), keep, |i, j| self.first_stage.get(i, j))
            .expect("restricted design inherits finiteness")
    }

    /// Positions of the instrument columns RX within the first stage.
    pub fn interaction_range(&self) -> Range<usize> {
        2 + self.p + self.q..2 + 2 * self.p + self.q
    }

    /// Second-stage design without the mediator slot, `[1, X, Z, R]`.
    pub fn second_stage_base(&self) -> &DenseMatrix {
        &self.second_stage_base
    }

    /// Second-stage design with `mediator` in the mediator slot.
    pub fn second_stage(&self, mediator: &[f64]) -> Result<DenseMatrix> {
        let n = self.second_stage_base.rows();
        if mediator.len() != n {
            return Err(Error::dim("mediator length", n, mediator.len()));
        }
        if !mediator.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite("mediator column"));
        }
        let base_cols = self.second_stage_base.cols();
        DenseMatrix::from_fn(n, base_cols + 1, |i, j| {
            if j < base_cols {
                self.second_stage_base.get(i, j)
            } else {
                mediator[i]
            }
        })
    }

    pub fn second_stage_layout(&self) -> SecondStageLayout {
        SecondStageLayout {
            p: self.p,
            q: self.q,
        }
    }

    /// Per-column sample means of X, the plug-in for E[X].
    pub fn x_means(&self) -> &[f64] {
        &self.x_means
    }
}

/// Assemble the fixed-order design matrices for a dataset.
pub fn build_designs(data: &Dataset) -> Result<DesignBundle> {
    let n = data.n();
    let p = data.p();
    let q = data.q();

    let first_stage = DenseMatrix::from_fn(n, 2 + 2 * p + q, |i, j| {
        if j == 0 {
            1.0
        } else if j == 1 {
            data.r()[i]
        } else if j < 2 + p {
            data.x().get(i, j - 2)
        } else if j < 2 + p + q {
            data.z().get(i, j - 2 - p)
        } else {
            data.r()[i] * data.x().get(i, j - 2 - p - q)
        }
    })?;

    let second_stage_base = DenseMatrix::from_fn(n, 2 + p + q, |i, j| {
        if j == 0 {
            1.0
        } else if j < 1 + p {
            data.x().get(i, j - 1)
        } else if j < 1 + p + q {
            data.z().get(i, j - 1 - p)
        } else {
            data.r()[i]
        }
    })?;

    let x_means = (0..p)
        .map(|j| (0..n).map(|i| data.x().get(i, j)).sum::<f64>() / n as f64)
        .collect();

    Ok(DesignBundle {
        first_stage,
        second_stage_base,
        x_means,
        p,
        q,
    })
}
