//! Synthetic-data generation and Monte Carlo validation.
//!
//! Data are drawn from a potential-outcomes model with per-subject effect
//! heterogeneity: each subject carries their own direct effect and mediator
//! effect, whose means may drift with the baseline covariates (the same
//! drift the sensitivity module parameterizes), plus a latent confounder
//! that loads on both the mediator and the baseline outcome. The lab
//! measures estimator bias, interval coverage, and the zero-correlation
//! conditions between instruments and the structural error that the
//! two-stage estimator relies on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{fit_two_stage, sandwich_covariance, FitOptions, MediationFit};
use crate::linalg::DenseMatrix;
use crate::sensitivity::{fit_at_tau, TauPoint};

/// How the mediator is produced from its latent linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MediatorKind {
    /// The predictor itself, a continuous mediator.
    Continuous,
    /// Indicator that the predictor is positive, a 0/1 mediator.
    BinaryThreshold,
}

/// Full data-generating specification.
///
/// Per-subject effects are Gaussian around covariate-dependent means:
/// the direct effect has mean `theta_r_mean + tau_r_true'x` and standard
/// deviation `theta_r_sd`, and likewise for the mediator effect. Covariates
/// and the latent confounder are standard normal, so the population E[X]
/// is zero. `gamma` holds the mediator predictor coefficients in the order
/// `[intercept, r, x..., r*x...]`; its interaction entries are what make
/// the instruments relevant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub n: usize,
    /// Number of instrumented covariates.
    pub p: usize,
    pub theta_r_mean: f64,
    pub theta_m_mean: f64,
    pub theta_r_sd: f64,
    pub theta_m_sd: f64,
    /// Covariate slopes of the direct-effect mean, length p; zero keeps
    /// the effect homogeneous in X.
    pub tau_r_true: Vec<f64>,
    /// Covariate slopes of the mediator-effect mean, length p.
    pub tau_m_true: Vec<f64>,
    /// Baseline-outcome intercept.
    pub alpha: f64,
    /// Baseline-outcome covariate coefficients, length p.
    pub beta: Vec<f64>,
    /// Mediator predictor coefficients `[intercept, r, x..., r*x...]`,
    /// length 2 + 2p.
    pub gamma: Vec<f64>,
    /// Loading of the latent confounder on both mediator and baseline
    /// outcome.
    pub confounding: f64,
    /// Standard deviation of the mediator and outcome noise draws.
    pub noise_sd: f64,
    /// Scales the outcome noise by `sqrt(1 + loading * x1^2)`; zero keeps
    /// the outcome error homoskedastic.
    pub noise_x_loading: f64,
    /// Probability of assignment to the treated arm.
    pub assignment_prob: f64,
    /// Correlate the per-subject mediator effect with the mediator noise,
    /// breaking the independence the two-stage estimator needs. For
    /// negative-control experiments.
    pub violate_iv_a3: bool,
    pub mediator_kind: MediatorKind,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            n: 1000,
            p: 1,
            theta_r_mean: 0.0,
            theta_m_mean: 0.0,
            theta_r_sd: 0.0,
            theta_m_sd: 0.0,
            tau_r_true: vec![0.0],
            tau_m_true: vec![0.0],
            alpha: 0.0,
            beta: vec![0.0],
            gamma: vec![0.0, 0.0, 0.0, 1.0],
            confounding: 0.0,
            noise_sd: 1.0,
            noise_x_loading: 0.0,
            assignment_prob: 0.5,
            violate_iv_a3: false,
            mediator_kind: MediatorKind::Continuous,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    /// Check internal consistency; every generator entry point calls this.
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::invalid_spec("n must be at least 10"));
        }
        if self.p == 0 {
            return Err(Error::invalid_spec(
                "at least one instrumented covariate is required",
            ));
        }
        if self.tau_r_true.len() != self.p || self.tau_m_true.len() != self.p {
            return Err(Error::invalid_spec(format!(
                "tau_r_true and tau_m_true must each have length p = {}",
                self.p
            )));
        }
        if self.beta.len() != self.p {
            return Err(Error::invalid_spec(format!(
                "beta must have length p = {}",
                self.p
            )));
        }
        if self.gamma.len() != 2 + 2 * self.p {
            return Err(Error::invalid_spec(format!(
                "gamma must have length 2 + 2p = {}",
                2 + 2 * self.p
            )));
        }
        if self.theta_r_sd < 0.0 || self.theta_m_sd < 0.0 || self.noise_sd < 0.0 {
            return Err(Error::invalid_spec("standard deviations must be nonnegative"));
        }
        if self.noise_x_loading < 0.0 {
            return Err(Error::invalid_spec("noise_x_loading must be nonnegative"));
        }
        if !(self.assignment_prob > 0.0 && self.assignment_prob < 1.0) {
            return Err(Error::invalid_spec("assignment_prob must be in (0, 1)"));
        }
        let finite = self
            .tau_r_true
            .iter()
            .chain(&self.tau_m_true)
            .chain(&self.beta)
            .chain(&self.gamma)
            .all(|v| v.is_finite())
            && [
                self.theta_r_mean,
                self.theta_m_mean,
                self.theta_r_sd,
                self.theta_m_sd,
                self.alpha,
                self.confounding,
                self.noise_sd,
                self.noise_x_loading,
                self.assignment_prob,
            ]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid_spec("scenario parameters must be finite"));
        }
        Ok(())
    }

    /// True when some interaction coefficient is nonzero, so the
    /// instruments actually predict the mediator.
    pub fn instruments_relevant(&self) -> bool {
        self.gamma[2 + self.p..].iter().any(|g| *g != 0.0)
    }
}

/// Per-subject generating quantities hidden from the estimators.
///
/// The structural error of the outcome equation decomposes into three
/// summands: the direct-effect deviation times assignment, the
/// mediator-effect deviation times the mediator, and the baseline
/// deviation (confounder plus outcome noise). The deviations here are
/// taken from the covariate-dependent means, so under drifting effects
/// `eta_r` excludes the drift while `theta_r_i - theta_r_mean` includes
/// it.
#[derive(Debug, Clone)]
pub struct TruthRecord {
    pub theta_r_i: Vec<f64>,
    pub theta_m_i: Vec<f64>,
    /// Direct-effect draw minus its covariate-dependent mean.
    pub eta_r: Vec<f64>,
    /// Mediator-effect draw minus its covariate-dependent mean.
    pub eta_m: Vec<f64>,
    /// Baseline outcome minus its covariate-linear mean.
    pub base_dev: Vec<f64>,
    pub m_potential_0: Vec<f64>,
    pub m_potential_1: Vec<f64>,
    pub u: Vec<f64>,
}

fn generate_with_stream(spec: &ScenarioSpec, stream: u64) -> Result<(Dataset, TruthRecord)> {
    spec.validate()?;
    let n = spec.n;
    let p = spec.p;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);

    let mut x_rows = vec![0.0; n * p];
    let mut r = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut truth = TruthRecord {
        theta_r_i: Vec::with_capacity(n),
        theta_m_i: Vec::with_capacity(n),
        eta_r: Vec::with_capacity(n),
        eta_m: Vec::with_capacity(n),
        base_dev: Vec::with_capacity(n),
        m_potential_0: Vec::with_capacity(n),
        m_potential_1: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
    };

    for i in 0..n {
        for j in 0..p {
            x_rows[i * p + j] = rng.sample(StandardNormal);
        }
        let x_i = &x_rows[i * p..(i + 1) * p];
        let u: f64 = rng.sample(StandardNormal);
        let r_i = if rng.random_bool(spec.assignment_prob) {
            1.0
        } else {
            0.0
        };

        let drift_r: f64 = spec.tau_r_true.iter().zip(x_i).map(|(t, x)| t * x).sum();
        let drift_m: f64 = spec.tau_m_true.iter().zip(x_i).map(|(t, x)| t * x).sum();

        let noise_m: f64 = rng.sample::<f64, _>(StandardNormal) * spec.noise_sd;
        let eta_r = spec.theta_r_sd * rng.sample::<f64, _>(StandardNormal);
        let eta_m = if spec.violate_iv_a3 && spec.noise_sd > 0.0 {
            // Reuse the mediator noise draw, standardized, as the effect
            // deviation; the two become perfectly correlated.
            spec.theta_m_sd * (noise_m / spec.noise_sd)
        } else {
            spec.theta_m_sd * rng.sample::<f64, _>(StandardNormal)
        };
        let theta_r_i = spec.theta_r_mean + drift_r + eta_r;
        let theta_m_i = spec.theta_m_mean + drift_m + eta_m;

        let x_part: f64 = spec.gamma[2..2 + p].iter().zip(x_i).map(|(g, x)| g * x).sum();
        let rx_part: f64 = spec.gamma[2 + p..].iter().zip(x_i).map(|(g, x)| g * x).sum();
        let predictor = |arm: f64| {
            spec.gamma[0] + spec.gamma[1] * arm + x_part + arm * rx_part
                + spec.confounding * u
                + noise_m
        };
        let realize = |latent: f64| match spec.mediator_kind {
            MediatorKind::Continuous => latent,
            MediatorKind::BinaryThreshold => {
                if latent > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        let m0 = realize(predictor(0.0));
        let m1 = realize(predictor(1.0));
        let m_i = if r_i == 1.0 { m1 } else { m0 };

        let het_scale = (1.0 + spec.noise_x_loading * x_i[0] * x_i[0]).sqrt();
        let noise_y: f64 = rng.sample::<f64, _>(StandardNormal) * spec.noise_sd * het_scale;
        let base_mean: f64 =
            spec.alpha + spec.beta.iter().zip(x_i).map(|(b, x)| b * x).sum::<f64>();
        let base_dev = spec.confounding * u + noise_y;
        let y_i = base_mean + base_dev + theta_m_i * m_i + theta_r_i * r_i;

        r.push(r_i);
        m.push(m_i);
        y.push(y_i);
        truth.theta_r_i.push(theta_r_i);
        truth.theta_m_i.push(theta_m_i);
        truth.eta_r.push(eta_r);
        truth.eta_m.push(eta_m);
        truth.base_dev.push(base_dev);
        truth.m_potential_0.push(m0);
        truth.m_potential_1.push(m1);
        truth.u.push(u);
    }

    let x = DenseMatrix::new(n, p, x_rows)?;
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    let data = Dataset::without_z(y, r, m, x, names)?;
    Ok((data, truth))
}

/// Draw one dataset from a scenario, returning the generating truth
/// alongside it. The same spec always produces the same draw.
pub fn generate(spec: &ScenarioSpec) -> Result<(Dataset, TruthRecord)> {
    generate_with_stream(spec, 0)
}

/// Which estimator a Monte Carlo run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McEstimator {
    /// Ordinary least squares with the observed mediator.
    Standard,
    /// Two-stage least squares with interaction instruments.
    TwoStage,
    /// Two-stage fit of the outcome transformed at the scenario's true
    /// drift slopes.
    AtTrueTau,
}

/// One instrument-versus-error covariance with its Monte Carlo precision.
#[derive(Debug, Clone)]
pub struct MomentCheck {
    /// Instrument label, `r_x1` for assignment times the first covariate.
    pub instrument: String,
    /// What the instrument was correlated against.
    pub target: String,
    pub covariance: f64,
    pub mc_se: f64,
    /// True when the covariance exceeds four standard errors.
    pub flagged: bool,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample covariance of two columns with the Monte Carlo standard error
/// of the estimate (standard deviation of centered products over sqrt n).
fn covariance_with_se(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len();
    let ma = mean(a);
    let mb = mean(b);
    let products: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| (ai - ma) * (bi - mb))
        .collect();
    let cov = mean(&products);
    let var = products.iter().map(|w| (w - cov) * (w - cov)).sum::<f64>() / (n as f64 - 1.0);
    (cov, (var / n as f64).sqrt())
}

fn moment_check(instrument: String, target: &str, a: &[f64], b: &[f64]) -> MomentCheck {
    let (covariance, mc_se) = covariance_with_se(a, b);
    MomentCheck {
        instrument,
        target: target.to_string(),
        covariance,
        mc_se,
        flagged: covariance.abs() > 4.0 * mc_se,
    }
}

/// Instrument-error covariances on one large generated sample.
#[derive(Debug, Clone)]
pub struct MomentConditions {
    pub n: usize,
    /// Checks against the error decomposition of the untransformed
    /// analysis, which assumes no effect drift.
    pub untransformed: Vec<MomentCheck>,
    /// Checks after transforming at the scenario's true drift slopes;
    /// present only when the scenario has nonzero drift.
    pub at_true_tau: Option<Vec<MomentCheck>>,
}

impl MomentConditions {
    pub fn untransformed_flagged(&self) -> usize {
        self.untransformed.iter().filter(|c| c.flagged).count()
    }

    pub fn at_true_tau_flagged(&self) -> Option<usize> {
        self.at_true_tau
            .as_ref()
            .map(|checks| checks.iter().filter(|c| c.flagged).count())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,instrument,target,covariance,mc_se,flagged\n");
        let mut push = |section: &str, checks: &[MomentCheck]| {
            for c in checks {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    section, c.instrument, c.target, c.covariance, c.mc_se, c.flagged
                ));
            }
        };
        push("untransformed", &self.untransformed);
        if let Some(checks) = &self.at_true_tau {
            push("at_true_tau", checks);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("moment conditions on one sample of n = {}\n", self.n);
        let mut push = |header: &str, checks: &[MomentCheck]| {
            out.push_str(header);
            out.push('\n');
            for c in checks {
                out.push_str(&format!(
                    "  cov({}, {}) = {:+.6e} (mc se {:.3e}){}\n",
                    c.instrument,
                    c.target,
                    c.covariance,
                    c.mc_se,
                    if c.flagged { "  FLAGGED" } else { "" }
                ));
            }
        };
        push("untransformed analysis:", &self.untransformed);
        if let Some(checks) = &self.at_true_tau {
            push("transformed at the true drift slopes:", checks);
        }
        out
    }
}

fn instrument_columns(data: &Dataset) -> Vec<(String, Vec<f64>)> {
    (0..data.p())
        .map(|j| {
            let col: Vec<f64> = (0..data.n())
                .map(|i| data.r()[i] * data.x().get(i, j))
                .collect();
            (format!("r_{}", data.x_names()[j]), col)
        })
        .collect()
}

fn section_checks(
    instruments: &[(String, Vec<f64>)],
    summand_r: &[f64],
    summand_m: &[f64],
    summand_base: &[f64],
    fitted_residuals: &[f64],
) -> Vec<MomentCheck> {
    let total: Vec<f64> = (0..summand_r.len())
        .map(|i| summand_r[i] + summand_m[i] + summand_base[i])
        .collect();
    let mut checks = Vec::new();
    for (name, column) in instruments {
        checks.push(moment_check(name.clone(), "direct_dev", column, summand_r));
        checks.push(moment_check(name.clone(), "mediator_dev", column, summand_m));
        checks.push(moment_check(name.clone(), "baseline_dev", column, summand_base));
        checks.push(moment_check(name.clone(), "total_error", column, &total));
        checks.push(moment_check(
            name.clone(),
            "fitted_residual",
            column,
            fitted_residuals,
        ));
    }
    checks
}

/// Verify the zero-correlation conditions on one large sample.
///
/// Per instrument, reports the sample covariance with each structural-error
/// summand, with the total error, and with the fitted two-stage residuals.
/// When the scenario has effect drift, a second section repeats the checks
/// for the drift-corrected analysis transformed at the true slopes.
pub fn check_moment_conditions(spec: &ScenarioSpec, n_large: usize) -> Result<MomentConditions> {
    if n_large < 10_000 {
        return Err(Error::invalid_spec(
            "moment checks need n_large of at least 10000",
        ));
    }
    let mut scenario = spec.clone();
    scenario.n = n_large;
    let (data, truth) = generate(&scenario)?;
    let instruments = instrument_columns(&data);
    let n = data.n();

    // Error decomposition the untransformed analysis relies on: deviations
    // are taken from the constant means, so drift lands in the summands.
    let dev_r: Vec<f64> = (0..n)
        .map(|i| (truth.theta_r_i[i] - scenario.theta_r_mean) * data.r()[i])
        .collect();
    let dev_m: Vec<f64> = (0..n)
        .map(|i| (truth.theta_m_i[i] - scenario.theta_m_mean) * data.m()[i])
        .collect();
    let fit = fit_two_stage(&data)?;
    let untransformed = section_checks(&instruments, &dev_r, &dev_m, &truth.base_dev, &fit.residuals);

    let has_drift = scenario
        .tau_r_true
        .iter()
        .chain(&scenario.tau_m_true)
        .any(|t| *t != 0.0);
    let at_true_tau = if has_drift {
        let tau = TauPoint::for_dataset(
            &data,
            scenario.tau_r_true.clone(),
            scenario.tau_m_true.clone(),
        )?;
        let fit_tau = fit_at_tau(&data, &tau)?;
        let dev_r_tau: Vec<f64> = (0..n).map(|i| truth.eta_r[i] * data.r()[i]).collect();
        let dev_m_tau: Vec<f64> = (0..n).map(|i| truth.eta_m[i] * data.m()[i]).collect();
        Some(section_checks(
            &instruments,
            &dev_r_tau,
            &dev_m_tau,
            &truth.base_dev,
            &fit_tau.residuals,
        ))
    } else {
        None
    };

    Ok(MomentConditions {
        n,
        untransformed,
        at_true_tau,
    })
}

/// Monte Carlo summary for one estimand.
#[derive(Debug, Clone)]
pub struct ParameterSummary {
    pub name: String,
    pub true_value: f64,
    pub mean_estimate: f64,
    /// Empirical standard deviation of the estimates across replicates.
    pub sd_estimate: f64,
    pub bias: f64,
    /// Monte Carlo standard error of the bias.
    pub bias_mc_se: f64,
    /// Share of replicates whose default interval covered the truth.
    pub coverage_homoskedastic: f64,
    /// Share of replicates whose sandwich interval covered the truth.
    pub coverage_sandwich: f64,
}

/// Aggregated Monte Carlo results.
#[derive(Debug, Clone)]
pub struct McReport {
    pub estimator: McEstimator,
    pub replications: usize,
    /// Replicates whose generation or fit failed.
    pub failures: usize,
    pub parameters: Vec<ParameterSummary>,
    /// Mean per-replicate covariance between each instrument and the
    /// fitted residuals, with its standard error across replicates.
    pub moment_checks: Vec<MomentCheck>,
    pub seed: u64,
}

impl McReport {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "parameter,true_value,mean_estimate,sd_estimate,bias,bias_mc_se,\
             coverage_homoskedastic,coverage_sandwich\n",
        );
        for p in &self.parameters {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                p.name,
                p.true_value,
                p.mean_estimate,
                p.sd_estimate,
                p.bias,
                p.bias_mc_se,
                p.coverage_homoskedastic,
                p.coverage_sandwich
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "monte carlo: {:?}, {} replications ({} failed), seed {}\n",
            self.estimator, self.replications, self.failures, self.seed
        );
        for p in &self.parameters {
            out.push_str(&format!(
                "  {}: true {:.4}, mean {:.4}, sd {:.4}, bias {:+.4} (mc se {:.4}), \
                 coverage {:.3} homoskedastic / {:.3} sandwich\n",
                p.name,
                p.true_value,
                p.mean_estimate,
                p.sd_estimate,
                p.bias,
                p.bias_mc_se,
                p.coverage_homoskedastic,
                p.coverage_sandwich
            ));
        }
        for c in &self.moment_checks {
            out.push_str(&format!(
                "  cov({}, fitted residuals) = {:+.6e} (mc se {:.3e}){}\n",
                c.instrument,
                c.covariance,
                c.mc_se,
                if c.flagged { "  FLAGGED" } else { "" }
            ));
        }
        out
    }
}

fn fit_replicate(
    spec: &ScenarioSpec,
    data: &Dataset,
    estimator: McEstimator,
    options: &FitOptions,
) -> Result<MediationFit> {
    match estimator {
        McEstimator::Standard => crate::estimators::fit_standard_with(data, options),
        McEstimator::TwoStage => crate::estimators::fit_two_stage_with(data, options),
        McEstimator::AtTrueTau => {
            let tau = TauPoint::for_dataset(
                data,
                spec.tau_r_true.clone(),
                spec.tau_m_true.clone(),
            )?;
            crate::sensitivity::fit_at_tau_with(data, &tau, options)
        }
    }
}

/// Repeatedly generate and fit, summarizing bias, spread, coverage and the
/// instrument-residual covariances.
///
/// Replicate `k` draws from an independent, deterministic random stream,
/// so reports are reproducible and independent of evaluation order.
/// Failed replicates are counted and skipped.
pub fn run_monte_carlo(
    spec: &ScenarioSpec,
    replications: usize,
    estimator: McEstimator,
) -> Result<McReport> {
    spec.validate()?;
    if replications < 2 {
        return Err(Error::invalid_spec("at least 2 replications are required"));
    }
    let options = FitOptions::default();
    let true_values = [spec.theta_r_mean, spec.theta_m_mean];

    let mut estimates: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut covered_homo = [0usize; 2];
    let mut covered_sandwich = [0usize; 2];
    let mut moment_series: Vec<Vec<f64>> = vec![Vec::new(); spec.p];
    let mut failures = 0usize;

    for k in 0..replications {
        let replicate = (|| -> Result<()> {
            let (data, _) = generate_with_stream(spec, k as u64 + 1)?;
            let fit = fit_replicate(spec, &data, estimator, &options)?;
            let sandwich = sandwich_covariance(&fit, &data)?;
            let (ci_r_sw, ci_m_sw) = fit.intervals_with(&sandwich, &options)?;

            estimates[0].push(fit.theta_r);
            estimates[1].push(fit.theta_m);
            if fit.ci_theta_r.contains(true_values[0]) {
                covered_homo[0] += 1;
            }
            if fit.ci_theta_m.contains(true_values[1]) {
                covered_homo[1] += 1;
            }
            if ci_r_sw.contains(true_values[0]) {
                covered_sandwich[0] += 1;
            }
            if ci_m_sw.contains(true_values[1]) {
                covered_sandwich[1] += 1;
            }
            for (j, series) in moment_series.iter_mut().enumerate() {
                let column: Vec<f64> = (0..data.n())
                    .map(|i| data.r()[i] * data.x().get(i, j))
                    .collect();
                let (cov, _) = covariance_with_se(&column, &fit.residuals);
                series.push(cov);
            }
            Ok(())
        })();
        if replicate.is_err() {
            failures += 1;
        }
    }

    let successes = estimates[0].len();
    if successes < 2 {
        return Err(Error::invalid_spec(format!(
            "only {successes} of {replications} replicates succeeded"
        )));
    }

    let parameters = (0..2)
        .map(|idx| {
            let values = &estimates[idx];
            let m = mean(values);
            let sd = (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
                / (successes as f64 - 1.0))
                .sqrt();
            ParameterSummary {
                name: if idx == 0 { "theta_r" } else { "theta_m" }.to_string(),
                true_value: true_values[idx],
                mean_estimate: m,
                sd_estimate: sd,
                bias: m - true_values[idx],
                bias_mc_se: sd / (successes as f64).sqrt(),
                coverage_homoskedastic: covered_homo[idx] as f64 / successes as f64,
                coverage_sandwich: covered_sandwich[idx] as f64 / successes as f64,
            }
        })
        .collect();

    let moment_checks = moment_series
        .iter()
        .enumerate()
        .map(|(j, series)| {
            let m = mean(series);
            let sd = (series.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
                / (successes as f64 - 1.0))
                .sqrt();
            let se = sd / (successes as f64).sqrt();
            MomentCheck {
                instrument: format!("r_x{}", j + 1),
                target: "fitted_residual".to_string(),
                covariance: m,
                mc_se: se,
                flagged: m.abs() > 4.0 * se,
            }
        })
        .collect();

    Ok(McReport {
        estimator,
        replications,
        failures,
        parameters,
        moment_checks,
        seed: spec.seed,
    })
}
