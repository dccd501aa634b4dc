//! Vaccine impact: number of cases averted (NCA) per 1000 persons and number
//! needed to vaccinate (NNV).
//!
//! Incidence enters as `e / t` (events per person-month) times the interval
//! duration, so every NCA is "per 1000 persons over the table's horizon".

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trial_data::IncidenceTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NcaVariant {
    /// Difference of empirical step-function incidences.
    Sf,
    /// Interval AUC times control incidence.
    Auc,
    /// Control incidence shifted to start at calendar month `s`.
    AucSeason,
    /// Mean of the seasonal variant over all twelve start months.
    AucAge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcaResult {
    pub variant: NcaVariant,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<u32>,
    pub horizon_months: f64,
    /// Cases averted per 1000 persons over `horizon_months`.
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_interval: Option<Vec<f64>>,
}

impl NcaResult {
    fn from_parts(variant: NcaVariant, s: Option<u32>, horizon: f64, per_interval: Vec<f64>) -> Self {
        Self {
            variant,
            s,
            horizon_months: horizon,
            value: per_interval.iter().sum(),
            per_interval: Some(per_interval),
        }
    }

    /// Unit label, e.g. "per 1000 person-12-months".
    pub fn unit_label(&self) -> String {
        format!("per 1000 person-{}-months", fmt_months(self.horizon_months))
    }
}

fn fmt_months(m: f64) -> String {
    if m.fract() == 0.0 {
        format!("{}", m as i64)
    } else {
        format!("{m}")
    }
}

fn control_rate(table: &IncidenceTable, k: usize) -> Result<f64> {
    table.intervals()[k].control_rate().ok_or_else(|| {
        Error::Degenerate(format!("interval {} has zero control-arm person-time", k + 1))
    })
}

/// `1000 sum_k (E0k/T0k - E1k/T1k) dt_k`.
pub fn nca_sf(table: &IncidenceTable) -> Result<NcaResult> {
    if table.is_empty() {
        return Err(Error::Validation("incidence table is empty".into()));
    }
    let per = (0..table.len())
        .map(|k| {
            let iv = &table.intervals()[k];
            let r0 = control_rate(table, k)?;
            let r1 = match (iv.e1, iv.t1) {
                (Some(_), Some(t)) if t > 0.0 => iv.vaccine_rate().unwrap(),
                (Some(_), Some(_)) => {
                    return Err(Error::Degenerate(format!(
                        "interval {} has zero vaccine-arm person-time",
                        k + 1
                    )))
                }
                _ => {
                    return Err(Error::Validation(format!(
                        "interval {} lacks vaccine-arm data required for NCA_SF",
                        k + 1
                    )))
                }
            };
            Ok(1000.0 * (r0 - r1) * iv.delta_time)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NcaResult::from_parts(NcaVariant::Sf, None, table.horizon(), per))
}

/// `1000 sum_k AUC_k (E0k/T0k) dt_k`. Only control-arm columns are used, so
/// external control-only incidence tables are accepted.
pub fn nca_auc(aucs: &[f64], table: &IncidenceTable) -> Result<NcaResult> {
    if aucs.len() != table.len() || aucs.is_empty() {
        return Err(Error::Validation(format!(
            "{} interval AUCs for an incidence table of {} intervals",
            aucs.len(),
            table.len()
        )));
    }
    let per = (0..table.len())
        .map(|k| Ok(1000.0 * aucs[k] * control_rate(table, k)? * table.intervals()[k].delta_time))
        .collect::<Result<Vec<_>>>()?;
    Ok(NcaResult::from_parts(NcaVariant::Auc, None, table.horizon(), per))
}

/// Rows of a calendar table indexed by calendar month 1..=12.
fn calendar_rows(table: &IncidenceTable) -> Result<[usize; 12]> {
    let mut rows = [usize::MAX; 12];
    for (i, iv) in table.intervals().iter().enumerate() {
        let c = iv.calendar_index.ok_or_else(|| {
            Error::Validation(format!("calendar table row {} has no calendar_index", i + 1))
        })?;
        let slot = &mut rows[c as usize - 1];
        if *slot != usize::MAX {
            return Err(Error::Validation(format!("calendar month {c} appears twice")));
        }
        *slot = i;
    }
    if let Some(m) = rows.iter().position(|&r| r == usize::MAX) {
        return Err(Error::Validation(format!("calendar table is missing month {}", m + 1)));
    }
    Ok(rows)
}

fn seasonal_terms(aucs: &[f64], table: &IncidenceTable, rows: &[usize; 12], s: u32) -> Result<Vec<f64>> {
    (0..12)
        .map(|k| {
            let month = ((s as usize - 1) + k) % 12;
            let row = rows[month];
            let iv = &table.intervals()[row];
            Ok(1000.0 * aucs[k] * control_rate(table, row)? * iv.delta_time)
        })
        .collect()
}

fn check_seasonal(aucs: &[f64], s: u32) -> Result<()> {
    if aucs.len() != 12 {
        return Err(Error::Validation(format!("seasonal NCA needs 12 monthly AUCs, got {}", aucs.len())));
    }
    if s == 0 {
        return Err(Error::Validation("start month s must be >= 1".into()));
    }
    Ok(())
}

/// Seasonal NCA for vaccination completed at the start of calendar month `s`:
/// analysis month `k` meets the control incidence of calendar month
/// `s + k - 1`, wrapping after December. `s` is taken modulo 12.
pub fn nca_auc_seasonal(aucs: &[f64], calendar_table: &IncidenceTable, s: u32) -> Result<NcaResult> {
    check_seasonal(aucs, s)?;
    let rows = calendar_rows(calendar_table)?;
    let s = (s - 1) % 12 + 1;
    let per = seasonal_terms(aucs, calendar_table, &rows, s)?;
    let horizon = calendar_table.horizon();
    Ok(NcaResult::from_parts(NcaVariant::AucSeason, Some(s), horizon, per))
}

/// Seasonal NCA for every start month `s = 1..=12`.
pub fn nca_by_start_month(aucs: &[f64], calendar_table: &IncidenceTable) -> Result<Vec<NcaResult>> {
    (1..=12).map(|s| nca_auc_seasonal(aucs, calendar_table, s)).collect()
}

/// Age-based delivery: mean of the twelve seasonal values. `per_interval`
/// holds the per-analysis-month means.
pub fn nca_auc_age(aucs: &[f64], calendar_table: &IncidenceTable) -> Result<NcaResult> {
    let all = nca_by_start_month(aucs, calendar_table)?;
    let mut per = vec![0.0; 12];
    for r in &all {
        for (acc, v) in per.iter_mut().zip(r.per_interval.as_deref().unwrap()) {
            *acc += v / 12.0;
        }
    }
    let value = all.iter().map(|r| r.value).sum::<f64>() / 12.0;
    Ok(NcaResult {
        variant: NcaVariant::AucAge,
        s: None,
        horizon_months: calendar_table.horizon(),
        value,
        per_interval: Some(per),
    })
}

/// Persons to vaccinate per case prevented, `1000 / NCA`. Multiply by 1000
/// for persons per 1000 cases when events recur.
pub fn nnv(nca: &NcaResult) -> Result<f64> {
    nnv_from_value(nca.value)
}

pub fn nnv_from_value(nca_value: f64) -> Result<f64> {
    if !(nca_value > 0.0) || !nca_value.is_finite() {
        return Err(Error::Domain(format!("NNV is undefined for NCA = {nca_value}")));
    }
    Ok(1000.0 / nca_value)
}
