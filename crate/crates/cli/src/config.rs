//! Configuration resolution: optional JSON config file, command-line flags
//! on top, documented defaults underneath.

use std::path::{Path, PathBuf};

use mediv::dataset::{ColumnMap, LoadOptions, MissingPolicy};
use mediv::estimators::{DiagnosticsOptions, FitOptions};
use mediv::sensitivity::GridOrder;
use mediv::simlab::McEstimator;
use mediv::{Error, Result};
use serde::Deserialize;

use crate::{
    AnalysisArgs, CovarianceChoice, EstimatorChoice, FormatChoice, IvArgs, MissingChoice,
    OrderChoice, SensitivityArgs, SimulateArgs,
};

fn invalid(reason: impl Into<String>) -> Error {
    Error::InvalidSpec {
        reason: reason.into(),
    }
}

/// Config-file counterpart of the command-line flags. Every field is
/// optional; an explicit flag always wins over the file value.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub outcome: Option<String>,
    pub assignment: Option<String>,
    pub mediator: Option<String>,
    pub x: Option<Vec<String>>,
    pub z: Option<Vec<String>>,
    pub ci_level: Option<f64>,
    pub covariance: Option<String>,
    pub dof_adjust: Option<bool>,
    pub format: Option<String>,
    pub out: Option<PathBuf>,
    pub delimiter: Option<char>,
    pub missing: Option<String>,
    pub adjusted_or: Option<bool>,
    pub tau_r: Option<Vec<Vec<f64>>>,
    pub tau_m: Option<Vec<Vec<f64>>>,
    pub order: Option<String>,
    pub scenario: Option<PathBuf>,
    pub reps: Option<usize>,
    pub estimator: Option<String>,
    pub seed: Option<u64>,
    pub moments: Option<usize>,
}

pub fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| invalid(format!("config file {}: {e}", path.display())))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMode {
    Homoskedastic,
    Sandwich,
    Both,
}

impl CovarianceMode {
    pub fn wants_homoskedastic(self) -> bool {
        self != CovarianceMode::Sandwich
    }

    pub fn wants_sandwich(self) -> bool {
        self != CovarianceMode::Homoskedastic
    }

    pub fn label(self) -> &'static str {
        match self {
            CovarianceMode::Homoskedastic => "homoskedastic",
            CovarianceMode::Sandwich => "sandwich",
            CovarianceMode::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

/// Everything a dataset-analysis command needs after merging flags, config
/// file and defaults.
pub struct AnalysisSettings {
    pub input: PathBuf,
    pub column_map: ColumnMap,
    pub load_options: LoadOptions,
    pub fit_options: FitOptions,
    pub covariance: CovarianceMode,
    pub format: ReportFormat,
    pub out: Option<PathBuf>,
}

fn parse_covariance(value: &str) -> Result<CovarianceMode> {
    match value {
        "homoskedastic" => Ok(CovarianceMode::Homoskedastic),
        "sandwich" => Ok(CovarianceMode::Sandwich),
        "both" => Ok(CovarianceMode::Both),
        other => Err(invalid(format!(
            "covariance must be homoskedastic, sandwich or both, got {other:?}"
        ))),
    }
}

fn parse_format(value: &str) -> Result<ReportFormat> {
    match value {
        "text" => Ok(ReportFormat::Text),
        "csv" => Ok(ReportFormat::Csv),
        "json" => Ok(ReportFormat::Json),
        other => Err(invalid(format!(
            "format must be text, csv or json, got {other:?}"
        ))),
    }
}

fn parse_missing(value: &str) -> Result<MissingPolicy> {
    match value {
        "drop" => Ok(MissingPolicy::DropRow),
        "fail" => Ok(MissingPolicy::Fail),
        other => Err(invalid(format!(
            "missing policy must be drop or fail, got {other:?}"
        ))),
    }
}

fn parse_order(value: &str) -> Result<GridOrder> {
    match value {
        "m-outer" => Ok(GridOrder::TauMOuter),
        "r-outer" => Ok(GridOrder::TauROuter),
        other => Err(invalid(format!(
            "order must be m-outer or r-outer, got {other:?}"
        ))),
    }
}

fn parse_estimator(value: &str) -> Result<McEstimator> {
    match value {
        "two-stage" => Ok(McEstimator::TwoStage),
        "standard" => Ok(McEstimator::Standard),
        "at-true-tau" => Ok(McEstimator::AtTrueTau),
        other => Err(invalid(format!(
            "estimator must be two-stage, standard or at-true-tau, got {other:?}"
        ))),
    }
}

fn delimiter_byte(value: char) -> Result<u8> {
    if value.is_ascii() {
        Ok(value as u8)
    } else {
        Err(invalid(format!(
            "delimiter must be a single ASCII character, got {value:?}"
        )))
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| invalid(format!("--{flag} is required (flag or config file)")))
}

pub fn resolve_analysis(args: &AnalysisArgs) -> Result<AnalysisSettings> {
    let file = load_file_config(args.config.as_deref())?;

    let input = required(args.input.clone().or(file.input), "input")?;
    let column_map = ColumnMap {
        outcome: required(args.outcome.clone().or(file.outcome), "outcome")?,
        assignment: required(args.assignment.clone().or(file.assignment), "assignment")?,
        mediator: required(args.mediator.clone().or(file.mediator), "mediator")?,
        x: if args.x.is_empty() {
            file.x.unwrap_or_default()
        } else {
            args.x.clone()
        },
        z: if args.z.is_empty() {
            file.z.unwrap_or_default()
        } else {
            args.z.clone()
        },
    };

    let covariance = match args.covariance {
        Some(CovarianceChoice::Homoskedastic) => CovarianceMode::Homoskedastic,
        Some(CovarianceChoice::Sandwich) => CovarianceMode::Sandwich,
        Some(CovarianceChoice::Both) => CovarianceMode::Both,
        None => file
            .covariance
            .as_deref()
            .map(parse_covariance)
            .transpose()?
            .unwrap_or(CovarianceMode::Homoskedastic),
    };
    let format = match args.format {
        Some(FormatChoice::Text) => ReportFormat::Text,
        Some(FormatChoice::Csv) => ReportFormat::Csv,
        Some(FormatChoice::Json) => ReportFormat::Json,
        None => file
            .format
            .as_deref()
            .map(parse_format)
            .transpose()?
            .unwrap_or(ReportFormat::Text),
    };
    let missing = match args.missing {
        Some(MissingChoice::Drop) => MissingPolicy::DropRow,
        Some(MissingChoice::Fail) => MissingPolicy::Fail,
        None => file
            .missing
            .as_deref()
            .map(parse_missing)
            .transpose()?
            .unwrap_or_default(),
    };
    let delimiter = match args.delimiter.or(file.delimiter) {
        Some(c) => delimiter_byte(c)?,
        None => b',',
    };

    let ci_level = args.ci_level.or(file.ci_level).unwrap_or(0.95);
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(invalid(format!(
            "ci_level must be in (0, 1), got {ci_level}"
        )));
    }
    let dof_adjust = args.dof_adjust || file.dof_adjust.unwrap_or(false);

    Ok(AnalysisSettings {
        input,
        column_map,
        load_options: LoadOptions {
            missing_policy: missing,
            delimiter,
        },
        fit_options: FitOptions {
            ci_level,
            dof_adjust,
            ..FitOptions::default()
        },
        covariance,
        format,
        out: args.out.clone().or(file.out),
    })
}

pub struct IvSettings {
    pub analysis: AnalysisSettings,
    pub diagnostics: DiagnosticsOptions,
}

pub fn resolve_iv(args: &IvArgs) -> Result<IvSettings> {
    let file = load_file_config(args.analysis.config.as_deref())?;
    let analysis = resolve_analysis(&args.analysis)?;
    let adjust_or_for_x = args.adjusted_or || file.adjusted_or.unwrap_or(false);
    let diagnostics = DiagnosticsOptions {
        adjust_or_for_x,
        ci_level: analysis.fit_options.ci_level,
    };
    Ok(IvSettings {
        analysis,
        diagnostics,
    })
}

/// Parse one `--tau-r`/`--tau-m` occurrence: a comma-separated vector.
fn parse_tau_vector(raw: &str, flag: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|part| {
            let trimmed = part.trim();
            trimmed.parse::<f64>().map_err(|_| {
                invalid(format!(
                    "--{flag} expects comma-separated numbers, got {trimmed:?}"
                ))
            })
        })
        .collect()
}

pub struct SensitivitySettings {
    pub analysis: AnalysisSettings,
    pub tau_r: Vec<Vec<f64>>,
    pub tau_m: Vec<Vec<f64>>,
    pub order: GridOrder,
}

pub fn resolve_sensitivity(args: &SensitivityArgs) -> Result<SensitivitySettings> {
    let file = load_file_config(args.analysis.config.as_deref())?;
    let analysis = resolve_analysis(&args.analysis)?;

    let tau_r = if args.tau_r.is_empty() {
        file.tau_r.unwrap_or_default()
    } else {
        args.tau_r
            .iter()
            .map(|raw| parse_tau_vector(raw, "tau-r"))
            .collect::<Result<_>>()?
    };
    let tau_m = if args.tau_m.is_empty() {
        file.tau_m.unwrap_or_default()
    } else {
        args.tau_m
            .iter()
            .map(|raw| parse_tau_vector(raw, "tau-m"))
            .collect::<Result<_>>()?
    };
    if tau_r.is_empty() || tau_m.is_empty() {
        return Err(invalid(
            "sensitivity needs at least one --tau-r and one --tau-m vector",
        ));
    }
    let order = match args.order {
        Some(OrderChoice::MOuter) => GridOrder::TauMOuter,
        Some(OrderChoice::ROuter) => GridOrder::TauROuter,
        None => file
            .order
            .as_deref()
            .map(parse_order)
            .transpose()?
            .unwrap_or_default(),
    };

    Ok(SensitivitySettings {
        analysis,
        tau_r,
        tau_m,
        order,
    })
}

pub struct SimulateSettings {
    pub scenario_path: PathBuf,
    pub reps: usize,
    pub estimator: McEstimator,
    pub seed_override: Option<u64>,
    pub moments: Option<usize>,
    pub format: ReportFormat,
    pub out: Option<PathBuf>,
}

pub fn resolve_simulate(args: &SimulateArgs) -> Result<SimulateSettings> {
    let file = load_file_config(args.config.as_deref())?;

    let scenario_path = required(args.scenario.clone().or(file.scenario), "scenario")?;
    let reps = args.reps.or(file.reps).unwrap_or(1000);
    let estimator = match args.estimator {
        Some(EstimatorChoice::TwoStage) => McEstimator::TwoStage,
        Some(EstimatorChoice::Standard) => McEstimator::Standard,
        Some(EstimatorChoice::AtTrueTau) => McEstimator::AtTrueTau,
        None => file
            .estimator
            .as_deref()
            .map(parse_estimator)
            .transpose()?
            .unwrap_or(McEstimator::TwoStage),
    };
    let moments = args.moments.or(file.moments);
    if reps == 0 && moments.is_none() {
        return Err(invalid(
            "nothing to do: --reps 0 without --moments skips every experiment",
        ));
    }
    let format = match args.format {
        Some(FormatChoice::Text) => ReportFormat::Text,
        Some(FormatChoice::Csv) => ReportFormat::Csv,
        Some(FormatChoice::Json) => ReportFormat::Json,
        None => file
            .format
            .as_deref()
            .map(parse_format)
            .transpose()?
            .unwrap_or(ReportFormat::Text),
    };

    Ok(SimulateSettings {
        scenario_path,
        reps,
        estimator,
        seed_override: args.seed.or(file.seed),
        moments,
        format,
        out: args.out.clone().or(file.out),
    })
}
