//! Sensitivity analysis for effect heterogeneity along baseline covariates.
//!
//! The two-stage estimator assumes the direct and mediator effects do not
//! vary with the instrumented covariates. This module quantifies how
//! conclusions move when that fails: for sensitivity slopes `tau_r` and
//! `tau_m`, the outcome is replaced by
//!
//! ```text
//! y_i - r_i * tau_r' (x_i - E[X]) - m_i * tau_m' (x_i - E[X])
//! ```
//!
//! and the two-stage fit is rerun with an unchanged first stage. A grid of
//! slope choices maps out the resulting range of effect estimates.

use crate::dataset::{build_designs, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{FitOptions, MediationFit, TwoStageEngine};

/// One choice of sensitivity slopes, with the covariate reference point
/// they are measured from.
#[derive(Debug, Clone, PartialEq)]
pub struct TauPoint {
    /// Direct-effect slope per instrumented covariate, X column order.
    pub tau_r: Vec<f64>,
    /// Mediator-effect slope per instrumented covariate, X column order.
    pub tau_m: Vec<f64>,
    /// The E[X] plug-in the slopes are centered on.
    pub x_reference: Vec<f64>,
}

impl TauPoint {
    /// Validate entry finiteness and equal lengths.
    pub fn new(tau_r: Vec<f64>, tau_m: Vec<f64>, x_reference: Vec<f64>) -> Result<TauPoint> {
        let p = x_reference.len();
        if tau_r.len() != p {
            return Err(Error::dim("tau_r length", p, tau_r.len()));
        }
        if tau_m.len() != p {
            return Err(Error::dim("tau_m length", p, tau_m.len()));
        }
        for v in tau_r.iter().chain(&tau_m).chain(&x_reference) {
            if !v.is_finite() {
                return Err(Error::non_finite("sensitivity parameters"));
            }
        }
        Ok(TauPoint {
            tau_r,
            tau_m,
            x_reference,
        })
    }

    /// Build a point for a dataset, plugging in the sample means of X as
    /// the reference.
    pub fn for_dataset(data: &Dataset, tau_r: Vec<f64>, tau_m: Vec<f64>) -> Result<TauPoint> {
        let bundle = build_designs(data)?;
        TauPoint::new(tau_r, tau_m, bundle.x_means().to_vec())
    }

    /// The all-zeros point, at which the transformation is the identity.
    pub fn zero(x_reference: Vec<f64>) -> Result<TauPoint> {
        let p = x_reference.len();
        TauPoint::new(vec![0.0; p], vec![0.0; p], x_reference)
    }

    pub fn is_zero(&self) -> bool {
        self.tau_r.iter().chain(&self.tau_m).all(|&v| v == 0.0)
    }
}

/// Transformed outcome under one sensitivity point.
///
/// Returns `y_i - r_i * tau_r'(x_i - ref) - m_i * tau_m'(x_i - ref)`.
pub fn transform_outcome(data: &Dataset, tau: &TauPoint) -> Result<Vec<f64>> {
    let p = data.p();
    if tau.x_reference.len() != p {
        return Err(Error::dim("tau dimension", p, tau.x_reference.len()));
    }
    let n = data.n();
    let mut transformed = Vec::with_capacity(n);
    for i in 0..n {
        let mut dot_r = 0.0;
        let mut dot_m = 0.0;
        for j in 0..p {
            let centered = data.x().get(i, j) - tau.x_reference[j];
            dot_r += tau.tau_r[j] * centered;
            dot_m += tau.tau_m[j] * centered;
        }
        transformed.push(data.y()[i] - data.r()[i] * dot_r - data.m()[i] * dot_m);
    }
    Ok(transformed)
}

/// Two-stage fit of the transformed outcome at one sensitivity point.
///
/// The first stage regresses the observed mediator and is unaffected by
/// the transformation; residuals use the observed mediator against the
/// transformed outcome.
pub fn fit_at_tau(data: &Dataset, tau: &TauPoint) -> Result<MediationFit> {
    fit_at_tau_with(data, tau, &FitOptions::default())
}

/// [`fit_at_tau`] with explicit options.
pub fn fit_at_tau_with(
    data: &Dataset,
    tau: &TauPoint,
    options: &FitOptions,
) -> Result<MediationFit> {
    let engine = TwoStageEngine::prepare(data)?;
    fit_at_tau_on_engine(&engine, data, tau, options)
}

fn fit_at_tau_on_engine(
    engine: &TwoStageEngine,
    data: &Dataset,
    tau: &TauPoint,
    options: &FitOptions,
) -> Result<MediationFit> {
    let outcome = transform_outcome(data, tau)?;
    engine.fit(&outcome, options)
}

/// Iteration order of the sensitivity grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridOrder {
    /// `tau_m` varies in the outer loop, `tau_r` in the inner.
    #[default]
    TauMOuter,
    /// `tau_r` varies in the outer loop, `tau_m` in the inner.
    TauROuter,
}

/// Sensitivity fits across a grid of slope choices.
///
/// Failed points keep their error in place so one bad point never hides
/// the rest of the surface.
#[derive(Debug)]
pub struct SensitivityGrid {
    pub points: Vec<TauPoint>,
    pub fits: Vec<Result<MediationFit>>,
    /// Position of the first all-zeros point, when the grid contains one.
    pub base_index: Option<usize>,
}

impl SensitivityGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn successes(&self) -> usize {
        self.fits.iter().filter(|f| f.is_ok()).count()
    }

    pub fn failures(&self) -> usize {
        self.len() - self.successes()
    }

    /// Fit at the all-zeros point, when present and successful.
    pub fn base_fit(&self) -> Option<&MediationFit> {
        self.base_index.and_then(|i| self.fits[i].as_ref().ok())
    }

    fn range_of(&self, extract: impl Fn(&MediationFit) -> f64) -> Option<(f64, f64)> {
        let mut bounds: Option<(f64, f64)> = None;
        for fit in self.fits.iter().flatten() {
            let v = extract(fit);
            bounds = Some(match bounds {
                None => (v, v),
                Some((lo, hi)) => (lo.min(v), hi.max(v)),
            });
        }
        bounds
    }

    /// (min, max) of the direct-effect estimate over successful fits.
    pub fn theta_r_range(&self) -> Option<(f64, f64)> {
        self.range_of(|fit| fit.theta_r)
    }

    /// (min, max) of the mediator-effect estimate over successful fits.
    pub fn theta_m_range(&self) -> Option<(f64, f64)> {
        self.range_of(|fit| fit.theta_m)
    }

    /// Full-precision CSV with one row per grid point.
    pub fn to_csv(&self) -> String {
        let p = self
            .points
            .first()
            .map_or(0, |point| point.x_reference.len());
        let mut header = Vec::new();
        for j in 0..p {
            header.push(format!("tau_r_{}", j + 1));
        }
        for j in 0..p {
            header.push(format!("tau_m_{}", j + 1));
        }
        header.extend(
            [
                "theta_r",
                "theta_r_lower",
                "theta_r_upper",
                "theta_m",
                "theta_m_lower",
                "theta_m_upper",
                "error",
            ]
            .map(String::from),
        );
        let mut out = header.join(",");
        out.push('\n');
        for (point, fit) in self.points.iter().zip(&self.fits) {
            let mut fields: Vec<String> = point
                .tau_r
                .iter()
                .chain(&point.tau_m)
                .map(|v| format!("{v}"))
                .collect();
            match fit {
                Ok(fit) => {
                    fields.extend([
                        format!("{}", fit.theta_r),
                        format!("{}", fit.ci_theta_r.lower),
                        format!("{}", fit.ci_theta_r.upper),
                        format!("{}", fit.theta_m),
                        format!("{}", fit.ci_theta_m.lower),
                        format!("{}", fit.ci_theta_m.upper),
                        String::new(),
                    ]);
                }
                Err(e) => {
                    fields.extend((0..6).map(|_| String::new()));
                    fields.push(format!("\"{e}\""));
                }
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Evaluate the sensitivity surface over the Cartesian product of slope
/// choices, default iteration order and fit options.
pub fn run_grid(
    data: &Dataset,
    tau_r_values: &[Vec<f64>],
    tau_m_values: &[Vec<f64>],
) -> Result<SensitivityGrid> {
    run_grid_with(
        data,
        tau_r_values,
        tau_m_values,
        GridOrder::default(),
        &FitOptions::default(),
    )
}

/// [`run_grid`] with explicit iteration order and fit options.
///
/// The first stage and the E[X] reference are computed once and shared by
/// every grid point. Per-point failures are recorded in the grid rather
/// than aborting it.
pub fn run_grid_with(
    data: &Dataset,
    tau_r_values: &[Vec<f64>],
    tau_m_values: &[Vec<f64>],
    order: GridOrder,
    options: &FitOptions,
) -> Result<SensitivityGrid> {
    if tau_r_values.is_empty() || tau_m_values.is_empty() {
        return Err(Error::invalid_spec(
            "sensitivity grid needs at least one tau_r and one tau_m vector",
        ));
    }
    let engine = TwoStageEngine::prepare(data)?;
    let x_reference = engine.bundle().x_means().to_vec();

    let mut points = Vec::with_capacity(tau_r_values.len() * tau_m_values.len());
    match order {
        GridOrder::TauMOuter => {
            for tau_m in tau_m_values {
                for tau_r in tau_r_values {
                    points.push(TauPoint::new(
                        tau_r.clone(),
                        tau_m.clone(),
                        x_reference.clone(),
                    )?);
                }
            }
        }
        GridOrder::TauROuter => {
            for tau_r in tau_r_values {
                for tau_m in tau_m_values {
                    points.push(TauPoint::new(
                        tau_r.clone(),
                        tau_m.clone(),
                        x_reference.clone(),
                    )?);
                }
            }
        }
    }

    let fits: Vec<Result<MediationFit>> = points
        .iter()
        .map(|tau| fit_at_tau_on_engine(&engine, data, tau, options))
        .collect();
    let base_index = points.iter().position(TauPoint::is_zero);

    Ok(SensitivityGrid {
        points,
        fits,
        base_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::fit_two_stage;
    use crate::linalg::DenseMatrix;
    use approx::assert_abs_diff_eq;

    fn sensitivity_dataset() -> Dataset {
        let n = 24;
        let x1: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let x2: Vec<f64> = (0..n).map(|i| ((i * 3) % 4) as f64 * 0.5).collect();
        let r: Vec<f64> = (0..n).map(|i| ((i / 2) % 2) as f64).collect();
        let m: Vec<f64> = (0..n)
            .map(|i| {
                0.4 * r[i] + 0.3 * x1[i] - 0.2 * x2[i] + 0.9 * r[i] * x1[i]
                    + 0.5 * r[i] * x2[i]
                    + ((i as f64 * 0.7390851332151607).fract() - 0.5)
            })
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                2.0 - 1.0 * x1[i] + 0.5 * x2[i] + 1.5 * r[i] - 0.8 * m[i]
                    + ((i as f64 * 0.5671432904097838).fract() - 0.5) * 0.6
            })
            .collect();
        let x = DenseMatrix::from_columns(&[&x1, &x2]).unwrap();
        Dataset::without_z(y, r, m, x, vec!["x1".into(), "x2".into()]).unwrap()
    }

    #[test]
    fn zero_tau_transformation_is_the_identity() {
        let data = sensitivity_dataset();
        let tau = TauPoint::for_dataset(&data, vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let transformed = transform_outcome(&data, &tau).unwrap();
        assert_eq!(transformed, data.y());
    }

    #[test]
    fn single_subject_transformation_arithmetic() {
        // A subject with r=1, m=0 and centered covariates (2, -1) under
        // tau_r = (1, 1) loses exactly 1 from the outcome.
        let y = vec![10.0, 0.0];
        let r = vec![1.0, 0.0];
        let m = vec![0.0, 0.0];
        let x = DenseMatrix::from_rows(&[vec![2.0, -1.0], vec![0.0, 0.0]]).unwrap();
        let data = Dataset::without_z(y, r, m, x, vec!["a".into(), "b".into()]).unwrap();
        let tau = TauPoint::new(vec![1.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let transformed = transform_outcome(&data, &tau).unwrap();
        assert_abs_diff_eq!(transformed[0], 9.0);
        assert_abs_diff_eq!(transformed[1], 0.0);
    }

    #[test]
    fn transformation_matches_rowwise_hand_computation() {
        let y = vec![1.0, -2.0, 3.5, 0.0, 4.0];
        let r = vec![1.0, 0.0, 1.0, 1.0, 0.0];
        let m = vec![0.5, 1.0, -1.0, 2.0, 0.0];
        let xv = [[1.0, 2.0], [0.0, -1.0], [3.0, 0.5], [-2.0, 1.5], [1.0, 1.0]];
        let x = DenseMatrix::from_rows(&xv.iter().map(|row| row.to_vec()).collect::<Vec<_>>())
            .unwrap();
        let data =
            Dataset::without_z(y.clone(), r.clone(), m.clone(), x, vec!["a".into(), "b".into()])
                .unwrap();
        let tau_r = [0.5, -1.0];
        let tau_m = [2.0, 0.25];
        let reference = [0.6, 0.8];
        let tau =
            TauPoint::new(tau_r.to_vec(), tau_m.to_vec(), reference.to_vec()).unwrap();

        // Expected values written out term by term, one row at a time.
        let expected: Vec<f64> = (0..5)
            .map(|i| {
                let c0 = xv[i][0] - reference[0];
                let c1 = xv[i][1] - reference[1];
                y[i] - r[i] * (tau_r[0] * c0 + tau_r[1] * c1)
                    - m[i] * (tau_m[0] * c0 + tau_m[1] * c1)
            })
            .collect();
        let transformed = transform_outcome(&data, &tau).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(transformed[i], expected[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn fit_at_tau_equals_two_stage_on_pretransformed_outcome() {
        let data = sensitivity_dataset();
        let tau = TauPoint::for_dataset(&data, vec![0.5, -0.5], vec![1.0, 0.25]).unwrap();
        let direct = fit_at_tau(&data, &tau).unwrap();
        let transformed = transform_outcome(&data, &tau).unwrap();
        let composed = fit_two_stage(&data.with_outcome(transformed).unwrap()).unwrap();
        assert_eq!(direct.theta_r, composed.theta_r);
        assert_eq!(direct.theta_m, composed.theta_m);
        assert_eq!(direct.ci_theta_r, composed.ci_theta_r);
    }

    #[test]
    fn zero_point_in_grid_equals_base_fit() {
        let data = sensitivity_dataset();
        let grid = run_grid(
            &data,
            &[vec![0.0, 0.0], vec![1.0, 0.0]],
            &[vec![0.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        assert_eq!(grid.len(), 4);
        assert_eq!(grid.base_index, Some(0));
        let base = grid.base_fit().unwrap();
        let standalone = fit_two_stage(&data).unwrap();
        assert!((base.theta_r - standalone.theta_r).abs() < 1e-12);
        assert!((base.theta_m - standalone.theta_m).abs() < 1e-12);
    }

    #[test]
    fn grid_points_match_independent_fit_at_tau_calls() {
        let data = sensitivity_dataset();
        let tau_rs = vec![vec![0.0, 0.0], vec![0.5, 1.0]];
        let tau_ms = vec![vec![0.0, 0.0], vec![-1.0, 0.5]];
        let grid = run_grid(&data, &tau_rs, &tau_ms).unwrap();
        for (point, fit) in grid.points.iter().zip(&grid.fits) {
            let fit = fit.as_ref().unwrap();
            let standalone = fit_at_tau(&data, point).unwrap();
            assert_eq!(fit.theta_r, standalone.theta_r);
            assert_eq!(fit.theta_m, standalone.theta_m);
        }
    }

    #[test]
    fn default_order_is_tau_m_outer() {
        let data = sensitivity_dataset();
        let tau_rs = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let tau_ms = vec![vec![0.0, 0.0], vec![2.0, 2.0]];
        let grid = run_grid(&data, &tau_rs, &tau_ms).unwrap();
        let seq: Vec<(f64, f64)> = grid
            .points
            .iter()
            .map(|pt| (pt.tau_m[0], pt.tau_r[0]))
            .collect();
        assert_eq!(seq, vec![(0.0, 0.0), (0.0, 1.0), (2.0, 0.0), (2.0, 1.0)]);
    }

    #[test]
    fn estimates_are_affine_in_tau() {
        let data = sensitivity_dataset();
        let a = TauPoint::for_dataset(&data, vec![0.0, 1.0], vec![2.0, -1.0]).unwrap();
        let b = TauPoint::for_dataset(&data, vec![1.0, -1.0], vec![0.0, 3.0]).unwrap();
        let mid = TauPoint::for_dataset(
            &data,
            vec![0.5, 0.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let fit_a = fit_at_tau(&data, &a).unwrap();
        let fit_b = fit_at_tau(&data, &b).unwrap();
        let fit_mid = fit_at_tau(&data, &mid).unwrap();
        assert_abs_diff_eq!(
            fit_mid.theta_r,
            0.5 * (fit_a.theta_r + fit_b.theta_r),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            fit_mid.theta_m,
            0.5 * (fit_a.theta_m + fit_b.theta_m),
            epsilon = 1e-10
        );
    }

    #[test]
    fn overflowing_point_is_recorded_not_fatal() {
        let data = sensitivity_dataset();
        let grid = run_grid(
            &data,
            &[vec![0.0, 0.0], vec![1e308, 1e308]],
            &[vec![0.0, 0.0]],
        )
        .unwrap();
        assert_eq!(grid.len(), 2);
        assert_eq!(grid.successes(), 1);
        assert_eq!(grid.failures(), 1);
        assert!(grid.theta_r_range().is_some());
    }

    #[test]
    fn empty_grid_specification_is_invalid() {
        let data = sensitivity_dataset();
        assert!(run_grid(&data, &[], &[vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn csv_export_has_one_row_per_point() {
        let data = sensitivity_dataset();
        let grid = run_grid(
            &data,
            &[vec![0.0, 0.0], vec![1.0, 1.0]],
            &[vec![0.0, 0.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let csv = grid.to_csv();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("tau_r_1,tau_r_2,tau_m_1,tau_m_2,theta_r"));
    }
}
