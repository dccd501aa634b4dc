//! `vecurve` command-line tool.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use vecurve_core::{EffectFamily, Error, RiskSetRule};

#[derive(Debug, Parser)]
#[command(name = "vecurve", version, about = "Time-varying vaccine efficacy, AUC and cases averted")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one trial and write it as an events CSV.
    ///
    /// Columns: subject_id,arm,stratum,start,stop,status,vaccination_month
    /// (arm 0 = control, 1 = vaccine; one row per at-risk interval ending in
    /// an event or censoring). Lines starting with '#' carry provenance.
    Simulate(SimulateArgs),
    /// Fit an Andersen-Gill model to an events CSV and write FitResult JSON.
    Fit(FitArgs),
    /// AUC of a VE curve over [t1, t2], as JSON.
    Auc(AucArgs),
    /// Cases averted per 1000 persons from an incidence CSV, as JSON.
    ///
    /// Incidence CSV columns: calendar_index,delta_time,e0,t0,e1,t1 with
    /// e1,t1 optional (control-only external tables).
    Nca(NcaArgs),
    /// VE(t) on a grid, as CSV `t,ve`.
    VeCurve(VeCurveArgs),
    /// Seasonal NCA for every start month, as CSV `start_month,nca`.
    NcaByStart(NcaByStartArgs),
    /// Replicate the simulation study over built-in scenarios.
    Study(StudyArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Built-in scenario 1..=8.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub scenario: Option<u8>,
    /// Scenario JSON file (ScenarioSpec).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Override the number of subjects per arm.
    #[arg(long)]
    pub n_per_arm: Option<usize>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    Constant,
    Linear,
    Log,
    Sqrt,
    /// Fit every family and rank them by BIC.
    All,
}

impl FamilyArg {
    fn families(self) -> Vec<EffectFamily> {
        match self {
            FamilyArg::Constant => vec![EffectFamily::Constant],
            FamilyArg::Linear => vec![EffectFamily::Linear],
            FamilyArg::Log => vec![EffectFamily::Log],
            FamilyArg::Sqrt => vec![EffectFamily::Sqrt],
            FamilyArg::All => EffectFamily::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleArg {
    Ag,
    FirstEvent,
}

impl From<RuleArg> for RiskSetRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Ag => RiskSetRule::Ag,
            RuleArg::FirstEvent => RiskSetRule::FirstEvent,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    #[arg(long, value_enum, default_value = "ag")]
    pub rule: RuleArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A VE curve given either by coefficients or by a fit JSON file.
#[derive(Debug, Args, Serialize)]
pub struct CurveArgs {
    /// FitResult JSON written by `fit` (single family).
    #[arg(long, conflicts_with_all = ["family", "beta0", "beta1"])]
    pub fit: Option<PathBuf>,
    #[arg(long, value_enum, requires = "beta0")]
    pub family: Option<CurveFamily>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveFamily {
    Constant,
    Linear,
    Log,
    Sqrt,
}

impl From<CurveFamily> for EffectFamily {
    fn from(f: CurveFamily) -> Self {
        match f {
            CurveFamily::Constant => EffectFamily::Constant,
            CurveFamily::Linear => EffectFamily::Linear,
            CurveFamily::Log => EffectFamily::Log,
            CurveFamily::Sqrt => EffectFamily::Sqrt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AucMethod {
    /// Closed form where available, quadrature for sqrt.
    Auto,
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Args, Serialize)]
pub struct AucArgs {
    #[command(flatten)]
    pub curve: CurveArgs,
    #[arg(long, default_value_t = 0.0)]
    pub t1: f64,
    #[arg(long)]
    pub t2: f64,
    #[arg(long, value_enum, default_value = "auto")]
    pub method: AucMethod,
    /// Simpson panels for quadrature.
    #[arg(long, default_value_t = vecurve_core::ve_metrics::DEFAULT_PANELS)]
    pub panels: usize,
    /// Follow-up the curve was fitted on; labels the result as interpolated
    /// or extrapolated.
    #[arg(long)]
    pub fitted_horizon: Option<f64>,
    /// Events CSV for a subject-level bootstrap interval (refits the model).
    #[arg(long, requires = "fit")]
    pub bootstrap_events: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NcaVariantArg {
    Sf,
    Auc,
    AucSeason,
    AucAge,
}

#[derive(Debug, Args, Serialize)]
pub struct NcaArgs {
    #[arg(long)]
    pub incidence: PathBuf,
    #[arg(long, value_enum)]
    pub variant: NcaVariantArg,
    /// Start month for `auc-season`.
    #[arg(long, required_if_eq("variant", "auc-season"))]
    pub s: Option<u32>,
    #[command(flatten)]
    pub curve: CurveArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct VeCurveArgs {
    #[command(flatten)]
    pub curve: CurveArgs,
    #[arg(long, default_value_t = 0.0)]
    pub start: f64,
    #[arg(long)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct NcaByStartArgs {
    /// Calendar incidence CSV with 12 monthly rows.
    #[arg(long)]
    pub incidence: PathBuf,
    #[command(flatten)]
    pub curve: CurveArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StudyArgs {
    /// Scenario list such as `1-8` or `1,3,5-6`.
    #[arg(long, default_value = "1-8")]
    pub scenarios: String,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Directory for per-scenario JSON and the rendered tables.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            output::print_error("usage", &e.to_string());
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command, &argv) {
        Ok(commands::Outcome::Done) => ExitCode::SUCCESS,
        Ok(commands::Outcome::NumericalWarning(msg)) => {
            output::print_error("degenerate", &msg);
            ExitCode::from(3)
        }
        Err(e) => {
            output::print_error(e.kind(), &e.to_string());
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}
