//! Mediation estimators and instrument diagnostics.
//!
//! Three procedures are provided. [`fit_standard`] runs the ordinary
//! least-squares regression of the outcome on covariates, assignment and
//! mediator, which is consistent only under sequential ignorability.
//! [`fit_direct_adjusted`] is the two-step variant that plugs a
//! previously estimated mediator effect into a direct-effect regression.
//! [`fit_two_stage`] instruments the mediator with assignment-by-covariate
//! interactions and is consistent under the IV assumptions even when
//! unmeasured confounders drive both mediator and outcome.
//!
//! Instrument strength is summarized by the first-stage partial F statistic
//! against the Stock-Yogo style thresholds, plus a first-stage odds ratio
//! when the mediator is binary.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::dataset::{build_designs, Dataset, DesignBundle, SecondStageLayout};
use crate::error::{Error, Result};
use crate::linalg::{solve_least_squares, DenseMatrix, LeastSquaresSolution};

/// Which estimator produced a [`MediationFit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Standard,
    TwoStageLS,
}

/// A two-sided confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Reference distribution for confidence-interval quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CiQuantile {
    /// Normal quantiles, the convention the reported intervals use.
    #[default]
    Normal,
    /// Student-t quantiles on n - k degrees of freedom.
    StudentT,
}

/// Options shared by all fitting routines.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Two-sided confidence level, in (0, 1).
    pub ci_level: f64,
    /// Divide the residual sum of squares by n - k instead of n.
    pub dof_adjust: bool,
    pub quantile: CiQuantile,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            ci_level: 0.95,
            dof_adjust: false,
            quantile: CiQuantile::Normal,
        }
    }
}

/// Options for the instrument diagnostics.
#[derive(Debug, Clone)]
pub struct DiagnosticsOptions {
    /// Include X in the first-stage odds-ratio model.
    pub adjust_or_for_x: bool,
    /// Confidence level for the odds-ratio interval.
    pub ci_level: f64,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        DiagnosticsOptions {
            adjust_or_for_x: false,
            ci_level: 0.95,
        }
    }
}

/// First-stage mediator odds ratio for the assignment.
#[derive(Debug, Clone)]
pub struct OddsRatio {
    pub odds_ratio: f64,
    pub log_or: f64,
    pub se_log_or: f64,
    pub ci: Interval,
    /// Whether X was adjusted for in the logistic model.
    pub adjusted: bool,
}

/// Weak-instrument verdict threshold for a given instrument count.
#[derive(Debug, Clone, Copy)]
pub struct WeakIvThreshold {
    pub value: f64,
    /// True when the instrument count exceeds the tabulated range.
    pub extrapolated: bool,
}

/// Instrument-strength diagnostics from the first stage.
#[derive(Debug, Clone)]
pub struct IvDiagnostics {
    /// Partial F for the joint null that all interaction coefficients are
    /// zero in the first stage.
    pub partial_f: f64,
    pub n_instruments: usize,
    pub threshold: f64,
    pub threshold_extrapolated: bool,
    /// True when partial_f exceeds the threshold.
    pub strong: bool,
    /// Present only for a binary mediator with an estimable logistic fit.
    pub first_stage_or: Option<OddsRatio>,
}

/// Estimates, covariance and intervals from one mediation fit.
///
/// Coefficients follow the second-stage column order `[1, X, Z, R, M]`:
/// `alpha` is the intercept, `beta` covers the X then Z columns, `theta_r`
/// is the direct effect of assignment and `theta_m` the mediator effect.
/// Residuals are always computed with the observed mediator, also for the
/// two-stage fit.
#[derive(Debug, Clone)]
pub struct MediationFit {
    pub method: Method,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub theta_r: f64,
    pub theta_m: f64,
    /// Covariance of the full coefficient vector, second-stage order.
    pub covariance: DenseMatrix,
    pub ci_level: f64,
    pub ci_theta_r: Interval,
    pub ci_theta_m: Interval,
    pub residuals: Vec<f64>,
    /// Residual variance estimate used for the homoskedastic covariance.
    pub sigma2_hat: f64,
    /// `(D'D)^{-1}` for the design that defines the estimator (the
    /// instrumented design for the two-stage fit); the sandwich bread.
    pub xtx_inverse: DenseMatrix,
    /// Instrument diagnostics, attached by the two-stage fit.
    pub iv_diagnostics: Option<IvDiagnostics>,
    pub n: usize,
    layout: SecondStageLayout,
}

impl MediationFit {
    pub fn layout(&self) -> SecondStageLayout {
        self.layout
    }

    /// Full coefficient vector in second-stage column order.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut coef = vec![self.alpha];
        coef.extend_from_slice(&self.beta);
        coef.push(self.theta_r);
        coef.push(self.theta_m);
        coef
    }

    pub fn se_theta_r(&self) -> f64 {
        let i = self.layout.r();
        self.covariance.get(i, i).max(0.0).sqrt()
    }

    pub fn se_theta_m(&self) -> f64 {
        let i = self.layout.mediator();
        self.covariance.get(i, i).max(0.0).sqrt()
    }

    /// Recompute the direct-effect and mediator-effect intervals from an
    /// alternative covariance matrix, such as a sandwich estimate.
    pub fn intervals_with(
        &self,
        covariance: &DenseMatrix,
        options: &FitOptions,
    ) -> Result<(Interval, Interval)> {
        let k = self.layout.cols();
        if covariance.rows() != k || covariance.cols() != k {
            return Err(Error::dim("covariance size", k, covariance.rows()));
        }
        let q = ci_quantile(options, self.n, k)?;
        let ir = self.layout.r();
        let im = self.layout.mediator();
        let se_r = covariance.get(ir, ir).max(0.0).sqrt();
        let se_m = covariance.get(im, im).max(0.0).sqrt();
        Ok((
            interval(self.theta_r, se_r, q),
            interval(self.theta_m, se_m, q),
        ))
    }
}

/// Direct-effect estimate from the two-step plug-in procedure.
#[derive(Debug, Clone)]
pub struct DirectEffectEstimate {
    pub theta_r: f64,
    pub se: f64,
    pub ci: Interval,
    pub ci_level: f64,
    /// Always false: the plugged-in mediator effect is treated as known,
    /// so its estimation uncertainty is not propagated.
    pub accounts_for_first_step: bool,
}

fn interval(estimate: f64, se: f64, quantile: f64) -> Interval {
    Interval {
        lower: estimate - quantile * se,
        upper: estimate + quantile * se,
    }
}

fn ci_quantile(options: &FitOptions, n: usize, k: usize) -> Result<f64> {
    if !(options.ci_level > 0.0 && options.ci_level < 1.0) {
        return Err(Error::invalid_spec(format!(
            "ci_level must be in (0, 1), got {}",
            options.ci_level
        )));
    }
    let prob = 1.0 - (1.0 - options.ci_level) / 2.0;
    match options.quantile {
        CiQuantile::Normal => {
            let normal = Normal::new(0.0, 1.0).expect("standard normal is valid");
            Ok(normal.inverse_cdf(prob))
        }
        CiQuantile::StudentT => {
            if n <= k {
                return Err(Error::invalid_spec(
                    "t-quantile intervals require n > number of coefficients",
                ));
            }
            let t = StudentsT::new(0.0, 1.0, (n - k) as f64)
                .expect("positive degrees of freedom");
            Ok(t.inverse_cdf(prob))
        }
    }
}

fn residual_variance(residuals: &[f64], k: usize, options: &FitOptions) -> Result<f64> {
    let n = residuals.len();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    if options.dof_adjust {
        if n <= k {
            return Err(Error::invalid_spec(
                "degrees-of-freedom adjustment requires n > number of coefficients",
            ));
        }
        Ok(rss / (n - k) as f64)
    } else {
        Ok(rss / n as f64)
    }
}

fn scaled(matrix: &DenseMatrix, factor: f64) -> DenseMatrix {
    DenseMatrix::from_fn(matrix.rows(), matrix.cols(), |i, j| factor * matrix.get(i, j))
        .expect("scaling a finite matrix by a finite factor")
}

fn assemble_fit(
    method: Method,
    coefficients: &[f64],
    xtx_inverse: DenseMatrix,
    residuals: Vec<f64>,
    layout: SecondStageLayout,
    options: &FitOptions,
    iv_diagnostics: Option<IvDiagnostics>,
) -> Result<MediationFit> {
    let n = residuals.len();
    let k = layout.cols();
    let sigma2_hat = residual_variance(&residuals, k, options)?;
    let covariance = scaled(&xtx_inverse, sigma2_hat);
    let q = ci_quantile(options, n, k)?;

    let alpha = coefficients[layout.intercept()];
    let beta = coefficients[layout.beta_range()].to_vec();
    let theta_r = coefficients[layout.r()];
    let theta_m = coefficients[layout.mediator()];
    let se_r = covariance.get(layout.r(), layout.r()).max(0.0).sqrt();
    let se_m = covariance
        .get(layout.mediator(), layout.mediator())
        .max(0.0)
        .sqrt();

    Ok(MediationFit {
        method,
        alpha,
        beta,
        theta_r,
        theta_m,
        covariance,
        ci_level: options.ci_level,
        ci_theta_r: interval(theta_r, se_r, q),
        ci_theta_m: interval(theta_m, se_m, q),
        residuals,
        sigma2_hat,
        xtx_inverse,
        iv_diagnostics,
        n,
        layout,
    })
}

/// Ordinary least squares of the outcome on `[1, X, Z, R, M]`.
///
/// Consistent for the direct and mediator effects only under sequential
/// ignorability; serves as the comparison baseline for the two-stage fit.
pub fn fit_standard(data: &Dataset) -> Result<MediationFit> {
    fit_standard_with(data, &FitOptions::default())
}

/// [`fit_standard`] with explicit options.
pub fn fit_standard_with(data: &Dataset, options: &FitOptions) -> Result<MediationFit> {
    let bundle = build_designs(data)?;
    let design = bundle.second_stage(data.m())?;
    let solution = solve_least_squares(&design, data.y())?;
    assemble_fit(
        Method::Standard,
        &solution.coefficients,
        solution.xtx_inverse.clone(),
        solution.residuals,
        bundle.second_stage_layout(),
        options,
        None,
    )
}

/// Two-step direct-effect estimate: regress `Y - theta_m_hat * M` on
/// `[1, X, Z, R]` and report the assignment coefficient.
///
/// `theta_m_hat` normally comes from a regression that controlled for
/// post-baseline confounders; `post_confounders` is accepted to validate
/// its shape, but the second step regresses on baseline columns only. The
/// reported standard error treats `theta_m_hat` as known.
pub fn fit_direct_adjusted(
    data: &Dataset,
    theta_m_hat: f64,
    post_confounders: &DenseMatrix,
) -> Result<DirectEffectEstimate> {
    fit_direct_adjusted_with(data, theta_m_hat, post_confounders, &FitOptions::default())
}

/// [`fit_direct_adjusted`] with explicit options.
pub fn fit_direct_adjusted_with(
    data: &Dataset,
    theta_m_hat: f64,
    post_confounders: &DenseMatrix,
    options: &FitOptions,
) -> Result<DirectEffectEstimate> {
    if !theta_m_hat.is_finite() {
        return Err(Error::non_finite("theta_m_hat"));
    }
    if post_confounders.rows() != data.n() {
        return Err(Error::dim(
            "post_confounders rows",
            data.n(),
            post_confounders.rows(),
        ));
    }
    let bundle = build_designs(data)?;
    let design = bundle.second_stage_base();
    let adjusted_outcome: Vec<f64> = data
        .y()
        .iter()
        .zip(data.m())
        .map(|(y, m)| y - theta_m_hat * m)
        .collect();
    let solution = solve_least_squares(design, &adjusted_outcome)?;

    let k = design.cols();
    let r_index = k - 1;
    let sigma2 = residual_variance(&solution.residuals, k, options)?;
    let se = (sigma2 * solution.xtx_inverse.get(r_index, r_index)).max(0.0).sqrt();
    let q = ci_quantile(options, data.n(), k)?;
    let theta_r = solution.coefficients[r_index];
    Ok(DirectEffectEstimate {
        theta_r,
        se,
        ci: interval(theta_r, se, q),
        ci_level: options.ci_level,
        accounts_for_first_step: false,
    })
}

/// Shared machinery for the two-stage fit: the first stage and both
/// second-stage designs are prepared once, then any outcome vector can be
/// fitted against them. The sensitivity grid relies on this to keep the
/// first stage identical across transformed outcomes.
pub(crate) struct TwoStageEngine {
    bundle: DesignBundle,
    design_fitted: DenseMatrix,
    design_observed: DenseMatrix,
    diagnostics: IvDiagnostics,
}

impl TwoStageEngine {
    pub(crate) fn prepare(data: &Dataset) -> Result<Self> {
        Self::prepare_with(data, &DiagnosticsOptions::default())
    }

    pub(crate) fn prepare_with(
        data: &Dataset,
        diag_options: &DiagnosticsOptions,
    ) -> Result<Self> {
        if data.p() == 0 {
            return Err(Error::NoInstrumentedCovariates);
        }
        let bundle = build_designs(data)?;
        let first_stage = solve_least_squares(bundle.first_stage(), data.m())?;
        let m_hat = first_stage.fitted(bundle.first_stage())?;
        let design_fitted = bundle.second_stage(&m_hat)?;
        let design_observed = bundle.second_stage(data.m())?;
        let diagnostics = diagnostics_from_first_stage(data, &bundle, &first_stage, diag_options)?;
        Ok(TwoStageEngine {
            bundle,
            design_fitted,
            design_observed,
            diagnostics,
        })
    }

    pub(crate) fn bundle(&self) -> &DesignBundle {
        &self.bundle
    }

    /// Second-stage fit of `outcome` with residuals from the observed
    /// mediator.
    pub(crate) fn fit(&self, outcome: &[f64], options: &FitOptions) -> Result<MediationFit> {
        let solution = solve_least_squares(&self.design_fitted, outcome)?;
        let fitted_observed = self.design_observed.mat_vec(&solution.coefficients)?;
        let residuals: Vec<f64> = outcome
            .iter()
            .zip(&fitted_observed)
            .map(|(y, f)| y - f)
            .collect();
        assemble_fit(
            Method::TwoStageLS,
            &solution.coefficients,
            solution.xtx_inverse.clone(),
            residuals,
            self.bundle.second_stage_layout(),
            options,
            Some(self.diagnostics.clone()),
        )
    }
}

/// Two-stage least squares with assignment-by-covariate instruments.
///
/// Stage one regresses the mediator on `[1, R, X, Z, RX]`; stage two
/// regresses the outcome on `[1, X, Z, R, M_hat]`. Residuals and the
/// residual variance use the observed mediator. Instrument diagnostics are
/// attached to the returned fit; weak instruments are reported there, never
/// as an error.
pub fn fit_two_stage(data: &Dataset) -> Result<MediationFit> {
    fit_two_stage_with(data, &FitOptions::default())
}

/// [`fit_two_stage`] with explicit options.
pub fn fit_two_stage_with(data: &Dataset, options: &FitOptions) -> Result<MediationFit> {
    let engine = TwoStageEngine::prepare(data)?;
    engine.fit(data.y(), options)
}

/// [`fit_two_stage`] with explicit fit and diagnostic options.
pub fn fit_two_stage_with_diagnostics(
    data: &Dataset,
    options: &FitOptions,
    diagnostics: &DiagnosticsOptions,
) -> Result<MediationFit> {
    let engine = TwoStageEngine::prepare_with(data, diagnostics)?;
    engine.fit(data.y(), options)
}

/// Sandwich covariance from explicit parts: `bread * meat * bread` with
/// `meat = sum_i e_i^2 a_i' a_i` over the rows of `design_observed`.
pub fn sandwich_from_parts(
    xtx_inverse: &DenseMatrix,
    design_observed: &DenseMatrix,
    residuals: &[f64],
) -> Result<DenseMatrix> {
    let n = design_observed.rows();
    let k = design_observed.cols();
    if residuals.len() != n {
        return Err(Error::dim("residuals length", n, residuals.len()));
    }
    if xtx_inverse.rows() != k || xtx_inverse.cols() != k {
        return Err(Error::dim("bread size", k, xtx_inverse.rows()));
    }
    if !residuals.iter().all(|e| e.is_finite()) {
        return Err(Error::non_finite("residuals"));
    }

    let mut meat = vec![0.0; k * k];
    for (i, e) in residuals.iter().enumerate() {
        let row = design_observed.row(i);
        let w = e * e;
        for a in 0..k {
            let wa = w * row[a];
            for b in 0..k {
                meat[a * k + b] += wa * row[b];
            }
        }
    }
    let meat = DenseMatrix::new(k, k, meat)?;
    let raw = xtx_inverse.matmul(&meat)?.matmul(xtx_inverse)?;
    // Exact symmetry despite accumulation order.
    DenseMatrix::from_fn(k, k, |i, j| 0.5 * (raw.get(i, j) + raw.get(j, i)))
}

/// Heteroskedasticity-robust covariance for a mediation fit.
///
/// Bread and meat both use the regressor rows of the design that defined
/// the estimator, so a two-stage fit gets first-stage-fitted mediator
/// values in the mediator slot while the squared residuals come from the
/// observed mediator. Meat rows built from observed mediator values would
/// fold first-stage residual variance into the mediator-slot entry and
/// overstate that variance. For a standard fit this is the usual robust
/// covariance.
pub fn sandwich_covariance(fit: &MediationFit, data: &Dataset) -> Result<DenseMatrix> {
    let bundle = build_designs(data)?;
    let meat_design = match fit.method {
        Method::Standard => bundle.second_stage(data.m())?,
        Method::TwoStageLS => {
            let first_stage = solve_least_squares(bundle.first_stage(), data.m())?;
            let m_hat = first_stage.fitted(bundle.first_stage())?;
            bundle.second_stage(&m_hat)?
        }
    };
    if meat_design.cols() != fit.xtx_inverse.cols() {
        return Err(Error::dim(
            "design columns for this fit",
            fit.xtx_inverse.cols(),
            meat_design.cols(),
        ));
    }
    sandwich_from_parts(&fit.xtx_inverse, &meat_design, &fit.residuals)
}

const THRESHOLD_TABLE: [(usize, f64); 6] = [
    (1, 8.96),
    (2, 11.59),
    (3, 12.83),
    (5, 15.09),
    (10, 20.88),
    (15, 26.80),
];

/// Weak-instrument threshold for the first-stage partial F.
///
/// Counts between tabulated entries take the next tabulated value above
/// (conservative); counts beyond the table take the largest tabulated value
/// with the `extrapolated` flag set.
pub fn weak_iv_threshold(n_instruments: usize) -> Result<WeakIvThreshold> {
    if n_instruments == 0 {
        return Err(Error::InvalidCount { count: 0 });
    }
    for &(count, value) in &THRESHOLD_TABLE {
        if n_instruments <= count {
            return Ok(WeakIvThreshold {
                value,
                extrapolated: false,
            });
        }
    }
    Ok(WeakIvThreshold {
        value: THRESHOLD_TABLE[THRESHOLD_TABLE.len() - 1].1,
        extrapolated: true,
    })
}

/// Relative floor under which a first-stage residual sum of squares counts
/// as an exact fit.
const EXACT_FIT_RELATIVE_RSS: f64 = 1e-14;

fn partial_f_statistic(
    bundle: &DesignBundle,
    mediator: &[f64],
    full: &LeastSquaresSolution,
) -> Result<f64> {
    let restricted = solve_least_squares(&bundle.first_stage_restricted(), mediator)?;
    let n = bundle.n();
    let p = bundle.p();
    let k_full = bundle.first_stage().cols();

    let scale: f64 = mediator.iter().map(|m| m * m).sum::<f64>().max(f64::MIN_POSITIVE);
    let floor = EXACT_FIT_RELATIVE_RSS * scale;
    if full.rss <= floor {
        // The unrestricted stage fits exactly; either the restricted stage
        // does too (no interaction contribution) or the reduction is total.
        return Ok(if restricted.rss <= floor { 0.0 } else { f64::INFINITY });
    }

    let numerator = (restricted.rss - full.rss).max(0.0) / p as f64;
    let denominator = full.rss / (n - k_full) as f64;
    Ok(numerator / denominator)
}

fn diagnostics_from_first_stage(
    data: &Dataset,
    bundle: &DesignBundle,
    full: &LeastSquaresSolution,
    options: &DiagnosticsOptions,
) -> Result<IvDiagnostics> {
    let f = partial_f_statistic(bundle, data.m(), full)?;
    let p = bundle.p();
    let threshold = weak_iv_threshold(p)?;
    let first_stage_or = match first_stage_odds_ratio_with(data, options) {
        Ok(or) => Some(or),
        Err(Error::NonBinaryMediator)
        | Err(Error::Separation)
        | Err(Error::NonConvergence { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(IvDiagnostics {
        partial_f: f,
        n_instruments: p,
        threshold: threshold.value,
        threshold_extrapolated: threshold.extrapolated,
        strong: f > threshold.value,
        first_stage_or,
    })
}

/// First-stage instrument diagnostics for a dataset.
///
/// The partial F compares the first stage with and without the interaction
/// block. The odds-ratio part requires a binary mediator and an estimable
/// logistic fit; when either fails the diagnostics carry no odds ratio.
pub fn partial_f(data: &Dataset) -> Result<IvDiagnostics> {
    partial_f_with(data, &DiagnosticsOptions::default())
}

/// [`partial_f`] with explicit options.
pub fn partial_f_with(data: &Dataset, options: &DiagnosticsOptions) -> Result<IvDiagnostics> {
    if data.p() == 0 {
        return Err(Error::NoInstrumentedCovariates);
    }
    let bundle = build_designs(data)?;
    let full = solve_least_squares(bundle.first_stage(), data.m())?;
    diagnostics_from_first_stage(data, &bundle, &full, options)
}

/// Logistic odds ratio of the mediator on assignment.
///
/// Fits mediator on `[1, R]`, optionally adding X. Errors with
/// `NonBinaryMediator` when the mediator is not 0/1.
pub fn first_stage_odds_ratio(data: &Dataset) -> Result<OddsRatio> {
    first_stage_odds_ratio_with(data, &DiagnosticsOptions::default())
}

/// [`first_stage_odds_ratio`] with explicit options.
pub fn first_stage_odds_ratio_with(
    data: &Dataset,
    options: &DiagnosticsOptions,
) -> Result<OddsRatio> {
    if !data.mediator_is_binary() {
        return Err(Error::NonBinaryMediator);
    }
    if !(options.ci_level > 0.0 && options.ci_level < 1.0) {
        return Err(Error::invalid_spec(format!(
            "ci_level must be in (0, 1), got {}",
            options.ci_level
        )));
    }
    let n = data.n();
    let p = data.p();
    let cols = if options.adjust_or_for_x { 2 + p } else { 2 };
    let design = DenseMatrix::from_fn(n, cols, |i, j| {
        if j == 0 {
            1.0
        } else if j == 1 {
            data.r()[i]
        } else {
            data.x().get(i, j - 2)
        }
    })?;
    let fit = crate::linalg::fit_logistic(&design, data.m())?;
    let log_or = fit.coefficients[1];
    let se = fit.covariance.get(1, 1).max(0.0).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal is valid");
    let q = normal.inverse_cdf(1.0 - (1.0 - options.ci_level) / 2.0);
    Ok(OddsRatio {
        odds_ratio: log_or.exp(),
        log_or,
        se_log_or: se,
        ci: Interval {
            lower: (log_or - q * se).exp(),
            upper: (log_or + q * se).exp(),
        },
        adjusted: options.adjust_or_for_x,
    })
}
