//! Report rendering in three formats.
//!
//! Text rounds every value to two decimals, ties to even, matching the
//! fixed-width tables the estimates are usually compared against. CSV and
//! JSON print full precision so values round-trip to the library results
//! exactly. JSON field names are a stable schema; non-finite numbers, which
//! JSON cannot carry, are emitted as strings.

use mediv::dataset::LoadReport;
use mediv::estimators::{Interval, IvDiagnostics, MediationFit, Method, OddsRatio};
use mediv::sensitivity::{GridOrder, SensitivityGrid};
use mediv::simlab::{McEstimator, McReport, MomentCheck, MomentConditions, ScenarioSpec};
use mediv::DenseMatrix;
use serde_json::{json, Map, Value};

use crate::config::CovarianceMode;

pub fn fmt2(value: f64) -> String {
    format!("{value:.2}")
}

fn fmt_ci(ci: &Interval) -> String {
    format!("({}, {})", fmt2(ci.lower), fmt2(ci.upper))
}

/// JSON value for a float: a number when finite, a string otherwise.
pub fn number(value: f64) -> Value {
    match serde_json::Number::from_f64(value) {
        Some(n) => Value::Number(n),
        None => Value::String(format!("{value}")),
    }
}

/// Confidence intervals from one covariance matrix for one fit.
pub struct CiSet {
    pub ci_theta_r: Interval,
    pub ci_theta_m: Interval,
    pub covariance: DenseMatrix,
}

/// Everything the `standard` and `iv` commands report.
pub struct FitReport {
    pub command: &'static str,
    pub fit: MediationFit,
    pub homoskedastic: Option<CiSet>,
    pub sandwich: Option<CiSet>,
    pub covariance_mode: CovarianceMode,
    pub n_treated: usize,
    pub n_control: usize,
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
    pub dof_adjust: bool,
    pub load: LoadReport,
}

impl FitReport {
    fn method_title(&self) -> &'static str {
        match self.fit.method {
            Method::Standard => "standard regression",
            Method::TwoStageLS => "two-stage least squares",
        }
    }

    fn method_key(&self) -> &'static str {
        match self.fit.method {
            Method::Standard => "standard",
            Method::TwoStageLS => "two_stage",
        }
    }

    /// The interval set the one-line summary quotes: the homoskedastic one
    /// when present, the sandwich one otherwise.
    fn summary_set(&self) -> Option<&CiSet> {
        self.homoskedastic.as_ref().or(self.sandwich.as_ref())
    }

    pub fn weak_banner(&self) -> Option<String> {
        let diag = self.fit.iv_diagnostics.as_ref()?;
        if diag.strong {
            return None;
        }
        let inner = format!(
            "!!  WEAK INSTRUMENTS: partial F {} is at or below the threshold {}  !!",
            fmt2(diag.partial_f),
            fmt2(diag.threshold)
        );
        let border = "!".repeat(inner.chars().count());
        Some(format!("{border}\n{inner}\n{border}"))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(banner) = self.weak_banner() {
            out.push_str(&banner);
            out.push('\n');
        }
        out.push_str(&format!(
            "{} (n = {}, treated {}, control {})\n",
            self.method_title(),
            self.fit.n,
            self.n_treated,
            self.n_control
        ));
        out.push_str(&format!(
            "{}% confidence intervals\n",
            format_level(self.fit.ci_level)
        ));

        let mut block = |label: &str, set: &CiSet| {
            out.push_str(&format!("{label} covariance:\n"));
            out.push_str(&format!(
                "  theta_R (direct effect)    {:>8}  {}\n",
                fmt2(self.fit.theta_r),
                fmt_ci(&set.ci_theta_r)
            ));
            out.push_str(&format!(
                "  theta_M (mediator effect)  {:>8}  {}\n",
                fmt2(self.fit.theta_m),
                fmt_ci(&set.ci_theta_m)
            ));
        };
        if let Some(set) = &self.homoskedastic {
            block("homoskedastic", set);
        }
        if let Some(set) = &self.sandwich {
            block("sandwich", set);
        }

        out.push_str(&format!(
            "  alpha (intercept)          {:>8}\n",
            fmt2(self.fit.alpha)
        ));
        for (name, value) in self
            .x_names
            .iter()
            .chain(&self.z_names)
            .zip(&self.fit.beta)
        {
            out.push_str(&format!("  beta {name:<21} {:>8}\n", fmt2(*value)));
        }

        if let Some(diag) = &self.fit.iv_diagnostics {
            out.push_str(&render_diagnostics_text(diag));
        }

        if let Some(set) = self.summary_set() {
            let mut summary = format!(
                "summary: {} {} | {} {}",
                fmt2(self.fit.theta_r),
                fmt_ci(&set.ci_theta_r),
                fmt2(self.fit.theta_m),
                fmt_ci(&set.ci_theta_m)
            );
            if let Some(diag) = &self.fit.iv_diagnostics {
                summary.push_str(&format!(
                    " | F={} {}",
                    fmt2(diag.partial_f),
                    if diag.strong { "strong" } else { "weak" }
                ));
            }
            out.push_str(&summary);
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,covariance,estimate,se,ci_lower,ci_upper\n");
        let layout = self.fit.layout();
        let names: Vec<String> = std::iter::once("alpha".to_string())
            .chain(
                self.x_names
                    .iter()
                    .chain(&self.z_names)
                    .map(|n| format!("beta_{n}")),
            )
            .chain(["theta_r".to_string(), "theta_m".to_string()])
            .collect();
        let coefficients = self.fit.coefficients();

        let mut push = |label: &str, set: &CiSet| {
            for (index, name) in names.iter().enumerate() {
                let se = set.covariance.get(index, index).max(0.0).sqrt();
                let (lower, upper) = if index == layout.r() {
                    (
                        set.ci_theta_r.lower.to_string(),
                        set.ci_theta_r.upper.to_string(),
                    )
                } else if index == layout.mediator() {
                    (
                        set.ci_theta_m.lower.to_string(),
                        set.ci_theta_m.upper.to_string(),
                    )
                } else {
                    (String::new(), String::new())
                };
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    name, label, coefficients[index], se, lower, upper
                ));
            }
        };
        if let Some(set) = &self.homoskedastic {
            push("homoskedastic", set);
        }
        if let Some(set) = &self.sandwich {
            push("sandwich", set);
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let layout = self.fit.layout();
        let coefficient_block = |index: usize| -> Value {
            let per_set = |set: &Option<CiSet>| match set {
                None => Value::Null,
                Some(set) => {
                    json!({"se": number(set.covariance.get(index, index).max(0.0).sqrt())})
                }
            };
            json!({
                "estimate": number(self.fit.coefficients()[index]),
                "homoskedastic": per_set(&self.homoskedastic),
                "sandwich": per_set(&self.sandwich),
            })
        };
        let theta_block = |index: usize| -> Value {
            let per_set = |set: &Option<CiSet>| match set {
                None => Value::Null,
                Some(set) => {
                    let ci = if index == layout.r() {
                        &set.ci_theta_r
                    } else {
                        &set.ci_theta_m
                    };
                    json!({
                        "se": number(set.covariance.get(index, index).max(0.0).sqrt()),
                        "ci_lower": number(ci.lower),
                        "ci_upper": number(ci.upper),
                    })
                }
            };
            json!({
                "estimate": number(self.fit.coefficients()[index]),
                "homoskedastic": per_set(&self.homoskedastic),
                "sandwich": per_set(&self.sandwich),
            })
        };

        let beta: Vec<Value> = self
            .x_names
            .iter()
            .chain(&self.z_names)
            .enumerate()
            .map(|(j, name)| {
                let mut entry = Map::new();
                entry.insert("name".into(), Value::String(name.clone()));
                if let Value::Object(block) = coefficient_block(1 + j) {
                    entry.extend(block);
                }
                Value::Object(entry)
            })
            .collect();

        json!({
            "command": self.command,
            "method": self.method_key(),
            "n": self.fit.n,
            "n_treated": self.n_treated,
            "n_control": self.n_control,
            "ci_level": number(self.fit.ci_level),
            "dof_adjust": self.dof_adjust,
            "covariance": self.covariance_mode.label(),
            "sigma2_hat": number(self.fit.sigma2_hat),
            "alpha": coefficient_block(layout.intercept()),
            "beta": beta,
            "theta_r": theta_block(layout.r()),
            "theta_m": theta_block(layout.mediator()),
            "diagnostics": self
                .fit
                .iv_diagnostics
                .as_ref()
                .map_or(Value::Null, diagnostics_json),
            "load": {
                "rows_read": self.load.rows_read,
                "rows_kept": self.load.rows_kept,
                "rows_dropped": self.load.rows_dropped,
            },
        })
    }
}

fn format_level(ci_level: f64) -> String {
    let percent = ci_level * 100.0;
    if (percent - percent.round()).abs() < 1e-9 {
        format!("{}", percent.round())
    } else {
        format!("{percent}")
    }
}

fn render_diagnostics_text(diag: &IvDiagnostics) -> String {
    let mut out = format!(
        "first stage: partial F = {} across {} instrument{} (threshold {}{}): {}\n",
        fmt2(diag.partial_f),
        diag.n_instruments,
        if diag.n_instruments == 1 { "" } else { "s" },
        fmt2(diag.threshold),
        if diag.threshold_extrapolated {
            ", extrapolated"
        } else {
            ""
        },
        if diag.strong { "strong" } else { "weak" }
    );
    if let Some(or) = &diag.first_stage_or {
        out.push_str(&format!(
            "first stage: odds ratio ({}) = {} {}\n",
            if or.adjusted {
                "adjusted for X"
            } else {
                "unadjusted"
            },
            fmt2(or.odds_ratio),
            fmt_ci(&or.ci)
        ));
    }
    out
}

fn odds_ratio_json(or: &OddsRatio) -> Value {
    json!({
        "odds_ratio": number(or.odds_ratio),
        "log_or": number(or.log_or),
        "se_log_or": number(or.se_log_or),
        "ci_lower": number(or.ci.lower),
        "ci_upper": number(or.ci.upper),
        "adjusted": or.adjusted,
    })
}

fn diagnostics_json(diag: &IvDiagnostics) -> Value {
    json!({
        "partial_f": number(diag.partial_f),
        "n_instruments": diag.n_instruments,
        "threshold": number(diag.threshold),
        "threshold_extrapolated": diag.threshold_extrapolated,
        "strong": diag.strong,
        "first_stage_or": diag.first_stage_or.as_ref().map_or(Value::Null, odds_ratio_json),
    })
}

/// Everything the `sensitivity` command reports.
pub struct SensitivityReport {
    pub grid: SensitivityGrid,
    pub order: GridOrder,
    pub n: usize,
    pub ci_level: f64,
    pub load: LoadReport,
}

impl SensitivityReport {
    fn order_key(&self) -> &'static str {
        match self.order {
            GridOrder::TauMOuter => "tau_m_outer",
            GridOrder::TauROuter => "tau_r_outer",
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "sensitivity grid: {} point{} (n = {}, {}% CI, {} outer)\n",
            self.grid.len(),
            if self.grid.len() == 1 { "" } else { "s" },
            self.n,
            format_level(self.ci_level),
            match self.order {
                GridOrder::TauMOuter => "tau_m",
                GridOrder::TauROuter => "tau_r",
            }
        );
        out.push_str(&format!(
            "{:<14} {:<14} {:<24} {:<24}\n",
            "tau_r", "tau_m", "theta_R", "theta_M"
        ));
        for (point, fit) in self.grid.points.iter().zip(&self.grid.fits) {
            let tau_r = point
                .tau_r
                .iter()
                .map(|v| fmt2(*v))
                .collect::<Vec<_>>()
                .join(",");
            let tau_m = point
                .tau_m
                .iter()
                .map(|v| fmt2(*v))
                .collect::<Vec<_>>()
                .join(",");
            match fit {
                Ok(fit) => {
                    out.push_str(&format!(
                        "{:<14} {:<14} {:<24} {:<24}\n",
                        tau_r,
                        tau_m,
                        format!("{} {}", fmt2(fit.theta_r), fmt_ci(&fit.ci_theta_r)),
                        format!("{} {}", fmt2(fit.theta_m), fmt_ci(&fit.ci_theta_m)),
                    ));
                }
                Err(e) => {
                    out.push_str(&format!("{tau_r:<14} {tau_m:<14} failed: {e}\n"));
                }
            }
        }
        if let Some((lo, hi)) = self.grid.theta_r_range() {
            out.push_str(&format!("theta_R range: [{}, {}]\n", fmt2(lo), fmt2(hi)));
        }
        if let Some((lo, hi)) = self.grid.theta_m_range() {
            out.push_str(&format!("theta_M range: [{}, {}]\n", fmt2(lo), fmt2(hi)));
        }
        if self.grid.failures() > 0 {
            out.push_str(&format!("failed points: {}\n", self.grid.failures()));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        self.grid.to_csv()
    }

    pub fn to_json(&self) -> Value {
        let points: Vec<Value> = self
            .grid
            .points
            .iter()
            .zip(&self.grid.fits)
            .map(|(point, fit)| {
                let taus = json!({
                    "tau_r": point.tau_r.iter().map(|v| number(*v)).collect::<Vec<_>>(),
                    "tau_m": point.tau_m.iter().map(|v| number(*v)).collect::<Vec<_>>(),
                });
                let mut entry = taus.as_object().cloned().unwrap_or_default();
                match fit {
                    Ok(fit) => {
                        entry.insert(
                            "theta_r".into(),
                            json!({
                                "estimate": number(fit.theta_r),
                                "se": number(fit.se_theta_r()),
                                "ci_lower": number(fit.ci_theta_r.lower),
                                "ci_upper": number(fit.ci_theta_r.upper),
                            }),
                        );
                        entry.insert(
                            "theta_m".into(),
                            json!({
                                "estimate": number(fit.theta_m),
                                "se": number(fit.se_theta_m()),
                                "ci_lower": number(fit.ci_theta_m.lower),
                                "ci_upper": number(fit.ci_theta_m.upper),
                            }),
                        );
                        entry.insert("error".into(), Value::Null);
                    }
                    Err(e) => {
                        entry.insert("theta_r".into(), Value::Null);
                        entry.insert("theta_m".into(), Value::Null);
                        entry.insert("error".into(), Value::String(e.to_string()));
                    }
                }
                Value::Object(entry)
            })
            .collect();

        let range_json = |range: Option<(f64, f64)>| match range {
            None => Value::Null,
            Some((lo, hi)) => json!({"min": number(lo), "max": number(hi)}),
        };
        let x_reference: Vec<Value> = self
            .grid
            .points
            .first()
            .map(|point| point.x_reference.iter().map(|v| number(*v)).collect())
            .unwrap_or_default();

        json!({
            "command": "sensitivity",
            "n": self.n,
            "ci_level": number(self.ci_level),
            "order": self.order_key(),
            "x_reference": x_reference,
            "points": points,
            "theta_r_range": range_json(self.grid.theta_r_range()),
            "theta_m_range": range_json(self.grid.theta_m_range()),
            "base_index": self.grid.base_index,
            "load": {
                "rows_read": self.load.rows_read,
                "rows_kept": self.load.rows_kept,
                "rows_dropped": self.load.rows_dropped,
            },
        })
    }
}

/// Everything the `simulate` command reports.
pub struct SimulateReport {
    pub scenario: ScenarioSpec,
    pub estimator: McEstimator,
    pub monte_carlo: Option<McReport>,
    pub moment_conditions: Option<MomentConditions>,
}

fn estimator_key(estimator: McEstimator) -> &'static str {
    match estimator {
        McEstimator::TwoStage => "two_stage",
        McEstimator::Standard => "standard",
        McEstimator::AtTrueTau => "at_true_tau",
    }
}

fn moment_check_json(check: &MomentCheck) -> Value {
    json!({
        "instrument": check.instrument,
        "target": check.target,
        "covariance": number(check.covariance),
        "mc_se": number(check.mc_se),
        "flagged": check.flagged,
    })
}

impl SimulateReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(report) = &self.monte_carlo {
            out.push_str(&report.to_text());
        }
        if let Some(conditions) = &self.moment_conditions {
            out.push_str(&conditions.to_text());
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(report) = &self.monte_carlo {
            out.push_str(&report.to_csv());
        }
        if let Some(conditions) = &self.moment_conditions {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&conditions.to_csv());
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let monte_carlo = match &self.monte_carlo {
            None => Value::Null,
            Some(report) => {
                let parameters: Vec<Value> = report
                    .parameters
                    .iter()
                    .map(|p| {
                        json!({
                            "name": p.name,
                            "true_value": number(p.true_value),
                            "mean_estimate": number(p.mean_estimate),
                            "sd_estimate": number(p.sd_estimate),
                            "bias": number(p.bias),
                            "bias_mc_se": number(p.bias_mc_se),
                            "coverage_homoskedastic": number(p.coverage_homoskedastic),
                            "coverage_sandwich": number(p.coverage_sandwich),
                        })
                    })
                    .collect();
                json!({
                    "replications": report.replications,
                    "failures": report.failures,
                    "seed": report.seed,
                    "parameters": parameters,
                    "moment_checks": report
                        .moment_checks
                        .iter()
                        .map(moment_check_json)
                        .collect::<Vec<_>>(),
                })
            }
        };
        let moment_conditions = match &self.moment_conditions {
            None => Value::Null,
            Some(conditions) => json!({
                "n": conditions.n,
                "untransformed": conditions
                    .untransformed
                    .iter()
                    .map(moment_check_json)
                    .collect::<Vec<_>>(),
                "at_true_tau": conditions.at_true_tau.as_ref().map(|checks| {
                    checks.iter().map(moment_check_json).collect::<Vec<_>>()
                }),
            }),
        };

        json!({
            "command": "simulate",
            "estimator": estimator_key(self.estimator),
            "scenario": serde_json::to_value(&self.scenario).unwrap_or(Value::Null),
            "monte_carlo": monte_carlo,
            "moment_conditions": moment_conditions,
        })
    }
}
