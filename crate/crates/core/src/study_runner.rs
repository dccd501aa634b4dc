//! Replication study: simulate, fit constant and linear effects under the
//! Andersen-Gill rule, summarize VE and AUC, compute NCA variants, and
//! average over replicates.
//!
//! Replicates run in parallel; each draws from its own seed derived from
//! `(base_seed, scenario key, replicate index)`, and results are reduced in
//! replicate order, so summaries are bit-identical for any thread count.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ag_estimator::{fit, FitOptions, FitResult, RiskSetRule};
use crate::effect::EffectFamily;
use crate::error::{Error, Result};
use crate::hazard_sim::{builtin_scenario, simulate_trial, ScenarioId, ScenarioSpec};
use crate::impact_metrics::{nca_auc, nca_auc_age, nca_auc_seasonal, nca_sf};
use crate::rng::replicate_seed;
use crate::trial_data::{tabulate_calendar_incidence, tabulate_incidence};
use crate::ve_metrics::{auc, interval_aucs, VeCurve};

/// Interval partition for NCA over 12 months.
pub const QUARTERS_12: [f64; 4] = [3.0, 3.0, 3.0, 3.0];
/// Interval partition for NCA over 10 months: three quarters and one month.
pub const QUARTERS_10: [f64; 4] = [3.0, 3.0, 3.0, 1.0];
/// Fraction of failed fits above which a scenario summary is flagged.
pub const FAILURE_FLAG_FRACTION: f64 = 0.01;

/// Estimates from one simulated trial. NCA fields are `None` where the
/// scenario does not support them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub ph_beta: f64,
    pub ph_ve: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub auc_0_12: f64,
    pub auc_0_10: f64,
    pub nca_sf_12: Option<f64>,
    pub nca_sf_10: f64,
    pub nca_auc_12: Option<f64>,
    pub nca_auc_10: f64,
    pub nca_auc_season_12: Option<f64>,
    pub nca_auc_age_12: Option<f64>,
}

/// Mean and Monte Carlo standard error over successful replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub mc_se: f64,
    pub n: usize,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let mc_se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, mc_se, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub scenario_id: ScenarioId,
    pub tau: f64,
    pub base_seed: u64,
    pub n_replicates: usize,
    pub n_failed_fits: usize,
    /// More than 1% of replicates failed.
    pub flagged: bool,
    pub season_start: Option<u32>,
    pub ph_beta: Option<MetricSummary>,
    pub ph_ve: Option<MetricSummary>,
    pub beta0: Option<MetricSummary>,
    pub beta1: Option<MetricSummary>,
    pub auc_0_12: Option<MetricSummary>,
    pub auc_0_10: Option<MetricSummary>,
    pub nca_sf_12: Option<MetricSummary>,
    pub nca_sf_10: Option<MetricSummary>,
    pub nca_auc_12: Option<MetricSummary>,
    pub nca_auc_10: Option<MetricSummary>,
    pub nca_auc_season_12: Option<MetricSummary>,
    pub nca_auc_age_12: Option<MetricSummary>,
}

fn converged_fit(ds: &crate::trial_data::TrialDataset, family: EffectFamily) -> Result<FitResult> {
    let f = fit(ds, family, RiskSetRule::Ag, &FitOptions::default())?;
    if !f.converged {
        return Err(Error::Degenerate(
            f.warning.unwrap_or_else(|| "fit did not converge".into()),
        ));
    }
    Ok(f)
}

/// Simulate and analyse one trial.
pub fn run_replicate(spec: &ScenarioSpec, seed: u64) -> Result<ReplicateOutcome> {
    let ds = simulate_trial(spec, seed)?;
    let ph = converged_fit(&ds, EffectFamily::Constant)?;
    let tv = converged_fit(&ds, EffectFamily::Linear)?;
    let curve = VeCurve::new(tv.effect());

    let full_year = spec.tau >= 12.0;
    let nca_pair = |deltas: &[f64]| -> Result<(f64, f64)> {
        let table = tabulate_incidence(&ds, deltas)?;
        let aucs = interval_aucs(&curve, deltas)?;
        Ok((nca_sf(&table)?.value, nca_auc(&aucs, &table)?.value))
    };
    let (sf10, auc10) = nca_pair(&QUARTERS_10)?;
    let (sf12, auc12) = if full_year {
        let (a, b) = nca_pair(&QUARTERS_12)?;
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    let (season, age) = match spec.high_season_start() {
        Some(s) if full_year => {
            let cal = tabulate_calendar_incidence(&ds, 12)?;
            let monthly = interval_aucs(&curve, &[1.0; 12])?;
            (
                Some(nca_auc_seasonal(&monthly, &cal, s)?.value),
                Some(nca_auc_age(&monthly, &cal)?.value),
            )
        }
        _ => (None, None),
    };

    Ok(ReplicateOutcome {
        ph_beta: ph.coef[0],
        ph_ve: 1.0 - ph.coef[0].exp(),
        beta0: tv.coef[0],
        beta1: tv.coef[1],
        auc_0_12: auc(&curve, 0.0, 12.0)?.value,
        auc_0_10: auc(&curve, 0.0, 10.0)?.value,
        nca_sf_12: sf12,
        nca_sf_10: sf10,
        nca_auc_12: auc12,
        nca_auc_10: auc10,
        nca_auc_season_12: season,
        nca_auc_age_12: age,
    })
}

/// Numerical failures of one replicate are counted; input errors abort.
fn replicate_or_failure(spec: &ScenarioSpec, seed: u64) -> Result<Option<ReplicateOutcome>> {
    match run_replicate(spec, seed) {
        Ok(r) => Ok(Some(r)),
        Err(e) if e.is_numerical() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Summarize replicate outcomes (in replicate order).
pub fn summarize(spec: &ScenarioSpec, base_seed: u64, outcomes: &[Option<ReplicateOutcome>]) -> StudySummary {
    let ok: Vec<&ReplicateOutcome> = outcomes.iter().flatten().collect();
    let n_failed = outcomes.len() - ok.len();
    let col = |f: &dyn Fn(&ReplicateOutcome) -> f64| {
        MetricSummary::from_values(&ok.iter().map(|r| f(r)).collect::<Vec<_>>())
    };
    let opt_col = |f: &dyn Fn(&ReplicateOutcome) -> Option<f64>| {
        MetricSummary::from_values(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
    };
    StudySummary {
        scenario_id: spec.scenario_id.clone(),
        tau: spec.tau,
        base_seed,
        n_replicates: outcomes.len(),
        n_failed_fits: n_failed,
        flagged: n_failed as f64 > FAILURE_FLAG_FRACTION * outcomes.len() as f64,
        season_start: if spec.tau >= 12.0 { spec.high_season_start() } else { None },
        ph_beta: col(&|r| r.ph_beta),
        ph_ve: col(&|r| r.ph_ve),
        beta0: col(&|r| r.beta0),
        beta1: col(&|r| r.beta1),
        auc_0_12: col(&|r| r.auc_0_12),
        auc_0_10: col(&|r| r.auc_0_10),
        nca_sf_12: opt_col(&|r| r.nca_sf_12),
        nca_sf_10: col(&|r| r.nca_sf_10),
        nca_auc_12: opt_col(&|r| r.nca_auc_12),
        nca_auc_10: col(&|r| r.nca_auc_10),
        nca_auc_season_12: opt_col(&|r| r.nca_auc_season_12),
        nca_auc_age_12: opt_col(&|r| r.nca_auc_age_12),
    }
}

/// Run `n_replicates` replicates of one scenario.
pub fn run_scenario(spec: &ScenarioSpec, n_replicates: usize, base_seed: u64) -> Result<StudySummary> {
    if n_replicates == 0 {
        return Err(Error::Validation("n_replicates must be >= 1".into()));
    }
    spec.validate()?;
    let key = spec.scenario_id.key();
    let outcomes = (0..n_replicates)
        .into_par_iter()
        .map(|r| replicate_or_failure(spec, replicate_seed(base_seed, key, r as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(spec, base_seed, &outcomes))
}

/// Run the listed built-in scenarios (ids 1..=8).
pub fn run_table1_study(scenarios: &[u8], n_replicates: usize, base_seed: u64) -> Result<Vec<StudySummary>> {
    scenarios
        .iter()
        .map(|&id| run_scenario(&builtin_scenario(id)?, n_replicates, base_seed))
        .collect()
}

fn cell(m: Option<MetricSummary>, scale: f64, decimals: usize, note: &str) -> String {
    match m {
        Some(m) => format!("{:.*}{note}", decimals, m.mean * scale),
        None => String::new(),
    }
}

/// Fixed-width table: scenario, PH beta and VE, time-varying beta0/beta1,
/// AUC over 0-12 and 0-10 months (percent). Footnote `a` marks AUCs
/// interpolated from longer follow-up, `b` those extrapolated beyond it.
pub fn render_table2(summaries: &[StudySummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<9} {:>8} {:>7} {:>8} {:>8} {:>10} {:>10}",
        "Scenario", "beta", "VE(%)", "beta0", "beta1", "AUC0-12(%)", "AUC0-10(%)"
    );
    for s in summaries {
        let (n12, n10) = match s.tau {
            t if t < 12.0 => (" b", ""),
            t if t > 10.0 => ("", " a"),
            _ => ("", ""),
        };
        let _ = writeln!(
            out,
            "{:<9} {:>8} {:>7} {:>8} {:>8} {:>10} {:>10}",
            s.scenario_id.to_string(),
            cell(s.ph_beta, 1.0, 2, ""),
            cell(s.ph_ve, 100.0, 1, ""),
            cell(s.beta0, 1.0, 2, ""),
            cell(s.beta1, 1.0, 3, ""),
            cell(s.auc_0_12, 100.0, 1, n12),
            cell(s.auc_0_10, 100.0, 1, n10),
        );
    }
    out.push_str("a. interpolated from follow-up up to 12 months\n");
    out.push_str("b. extrapolated from follow-up up to 10 months\n");
    out.push_str(&failure_notes(summaries));
    out
}

/// Fixed-width table of cases averted per 1000 persons up to 12 and 10
/// months; blank where the scenario's follow-up or seasonality does not
/// support the measure.
pub fn render_table3(summaries: &[StudySummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<9} {:>10} {:>10} {:>11} {:>11} {:>14} {:>11}",
        "Scenario", "NCA_SF(12)", "NCA_SF(10)", "NCA_AUC(12)", "NCA_AUC(10)", "NCA_season(12)", "NCA_age(12)"
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<9} {:>10} {:>10} {:>11} {:>11} {:>14} {:>11}",
            s.scenario_id.to_string(),
            cell(s.nca_sf_12, 1.0, 0, ""),
            cell(s.nca_sf_10, 1.0, 0, ""),
            cell(s.nca_auc_12, 1.0, 0, ""),
            cell(s.nca_auc_10, 1.0, 0, ""),
            cell(s.nca_auc_season_12, 1.0, 0, ""),
            cell(s.nca_auc_age_12, 1.0, 0, ""),
        );
    }
    out.push_str("Cases averted per 1000 persons over the stated number of months.\n");
    out.push_str(&failure_notes(summaries));
    out
}

fn failure_notes(summaries: &[StudySummary]) -> String {
    let mut out = String::new();
    for s in summaries.iter().filter(|s| s.n_failed_fits > 0) {
        let _ = writeln!(
            out,
            "scenario {}: {} of {} replicates failed to fit{}",
            s.scenario_id,
            s.n_failed_fits,
            s.n_replicates,
            if s.flagged { " (FLAGGED)" } else { "" }
        );
    }
    out
}
