//! The four subcommands: load inputs, call the library, and emit one
//! report. Reports go to stdout or `--out`; the load summary and any
//! weak-instrument banner for machine formats go to stderr.

use std::path::Path;

use mediv::dataset::{load_csv, Dataset, LoadReport};
use mediv::estimators::{
    fit_standard_with, fit_two_stage_with_diagnostics, sandwich_covariance, FitOptions,
    MediationFit,
};
use mediv::sensitivity::run_grid_with;
use mediv::simlab::{check_moment_conditions, run_monte_carlo, ScenarioSpec};
use mediv::{Error, Result};
use serde_json::Value;

use crate::config::{
    resolve_analysis, resolve_iv, resolve_sensitivity, resolve_simulate, AnalysisSettings,
    CovarianceMode, ReportFormat,
};
use crate::render::{CiSet, FitReport, SensitivityReport, SimulateReport};
use crate::{AnalysisArgs, IvArgs, SensitivityArgs, SimulateArgs};

fn emit(
    format: ReportFormat,
    out: Option<&Path>,
    text: impl FnOnce() -> String,
    csv: impl FnOnce() -> String,
    json: impl FnOnce() -> Value,
) -> Result<()> {
    let mut content = match format {
        ReportFormat::Text => text(),
        ReportFormat::Csv => csv(),
        ReportFormat::Json => {
            let value = json();
            serde_json::to_string_pretty(&value).map_err(|e| Error::InvalidSpec {
                reason: format!("report serialization failed: {e}"),
            })?
        }
    };
    if !content.ends_with('\n') {
        content.push('\n');
    }
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn load_dataset(settings: &AnalysisSettings) -> Result<(Dataset, LoadReport)> {
    let (data, report) = load_csv(
        &settings.input,
        &settings.column_map,
        &settings.load_options,
    )?;
    eprintln!("{}", report.summary());
    Ok((data, report))
}

/// Interval sets for the requested covariance choices. The homoskedastic
/// set reuses the fit's own covariance and intervals; the sandwich set
/// recomputes both from the robust covariance.
fn interval_sets(
    fit: &MediationFit,
    data: &Dataset,
    mode: CovarianceMode,
    options: &FitOptions,
) -> Result<(Option<CiSet>, Option<CiSet>)> {
    let homoskedastic = mode.wants_homoskedastic().then(|| CiSet {
        ci_theta_r: fit.ci_theta_r,
        ci_theta_m: fit.ci_theta_m,
        covariance: fit.covariance.clone(),
    });
    let sandwich = if mode.wants_sandwich() {
        let covariance = sandwich_covariance(fit, data)?;
        let (ci_theta_r, ci_theta_m) = fit.intervals_with(&covariance, options)?;
        Some(CiSet {
            ci_theta_r,
            ci_theta_m,
            covariance,
        })
    } else {
        None
    };
    Ok((homoskedastic, sandwich))
}

fn fit_report(
    command: &'static str,
    fit: MediationFit,
    data: &Dataset,
    load: LoadReport,
    settings: &AnalysisSettings,
) -> Result<FitReport> {
    let (homoskedastic, sandwich) =
        interval_sets(&fit, data, settings.covariance, &settings.fit_options)?;
    Ok(FitReport {
        command,
        fit,
        homoskedastic,
        sandwich,
        covariance_mode: settings.covariance,
        n_treated: data.n_treated(),
        n_control: data.n_control(),
        x_names: data.x_names().to_vec(),
        z_names: data.z_names().to_vec(),
        dof_adjust: settings.fit_options.dof_adjust,
        load,
    })
}

fn emit_fit_report(report: &FitReport, settings: &AnalysisSettings) -> Result<()> {
    if settings.format != ReportFormat::Text {
        if let Some(banner) = report.weak_banner() {
            eprintln!("{banner}");
        }
    }
    emit(
        settings.format,
        settings.out.as_deref(),
        || report.to_text(),
        || report.to_csv(),
        || report.to_json(),
    )
}

pub fn run_standard(args: &AnalysisArgs) -> Result<()> {
    let settings = resolve_analysis(args)?;
    let (data, load) = load_dataset(&settings)?;
    let fit = fit_standard_with(&data, &settings.fit_options)?;
    let report = fit_report("standard", fit, &data, load, &settings)?;
    emit_fit_report(&report, &settings)
}

pub fn run_iv(args: &IvArgs) -> Result<()> {
    let settings = resolve_iv(args)?;
    let (data, load) = load_dataset(&settings.analysis)?;
    let fit = fit_two_stage_with_diagnostics(
        &data,
        &settings.analysis.fit_options,
        &settings.diagnostics,
    )?;
    let report = fit_report("iv", fit, &data, load, &settings.analysis)?;
    emit_fit_report(&report, &settings.analysis)
}

pub fn run_sensitivity(args: &SensitivityArgs) -> Result<()> {
    let settings = resolve_sensitivity(args)?;
    let (data, load) = load_dataset(&settings.analysis)?;
    let grid = run_grid_with(
        &data,
        &settings.tau_r,
        &settings.tau_m,
        settings.order,
        &settings.analysis.fit_options,
    )?;
    let report = SensitivityReport {
        grid,
        order: settings.order,
        n: data.n(),
        ci_level: settings.analysis.fit_options.ci_level,
        load,
    };
    emit(
        settings.analysis.format,
        settings.analysis.out.as_deref(),
        || report.to_text(),
        || report.to_csv(),
        || report.to_json(),
    )
}

fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path)?;
    let spec: ScenarioSpec = serde_json::from_str(&text).map_err(|e| Error::InvalidSpec {
        reason: format!("scenario file {}: {e}", path.display()),
    })?;
    spec.validate()?;
    Ok(spec)
}

pub fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let settings = resolve_simulate(args)?;
    let mut scenario = load_scenario(&settings.scenario_path)?;
    if let Some(seed) = settings.seed_override {
        scenario.seed = seed;
    }

    let monte_carlo = if settings.reps > 0 {
        Some(run_monte_carlo(&scenario, settings.reps, settings.estimator)?)
    } else {
        None
    };
    let moment_conditions = settings
        .moments
        .map(|n_large| check_moment_conditions(&scenario, n_large))
        .transpose()?;

    let report = SimulateReport {
        scenario,
        estimator: settings.estimator,
        monte_carlo,
        moment_conditions,
    };
    emit(
        settings.format,
        settings.out.as_deref(),
        || report.to_text(),
        || report.to_csv(),
        || report.to_json(),
    )
}
