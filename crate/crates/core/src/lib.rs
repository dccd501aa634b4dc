//! Time-varying vaccine efficacy from recurrent-event trials.
//!
//! Andersen-Gill estimation of a log hazard ratio that varies with time
//! since vaccination, area under the efficacy curve, cases averted and
//! number needed to vaccinate, plus a thinning simulator for replication
//! studies.

pub mod ag_estimator;
pub mod effect;
pub mod error;
pub mod hazard_sim;
pub mod impact_metrics;
pub mod rng;
pub mod study_runner;
pub mod trial_data;
pub mod ve_metrics;

pub use ag_estimator::{compare_bic, fit, BicComparison, FitOptions, FitResult, RiskSetRule};
pub use effect::{EffectFamily, EffectSpec};
pub use error::{Error, Result};
pub use hazard_sim::{builtin_scenario, simulate_trial, BaselineHazard, Censoring, ScenarioId, ScenarioSpec};
pub use impact_metrics::{nca_auc, nca_auc_age, nca_auc_seasonal, nca_by_start_month, nca_sf, nnv, NcaResult, NcaVariant};
pub use study_runner::{run_scenario, run_table1_study, MetricSummary, StudySummary};
pub use trial_data::{Arm, IncidenceInterval, IncidenceTable, Subject, TrialDataset};
pub use ve_metrics::{auc, interval_aucs, AucValue, VeCurve};
