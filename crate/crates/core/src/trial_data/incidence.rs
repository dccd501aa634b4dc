use serde::{Deserialize, Serialize};

use super::{Arm, TrialDataset};
use crate::error::{Error, Result};

/// Events and person-time of one follow-up interval, by arm.
///
/// Counts are stored as `f64` so that externally supplied incidence tables
/// (rates scaled to some person-time base) can be ingested verbatim. The
/// vaccine-arm columns are optional: control-only tables are valid input for
/// the control-incidence based impact measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidenceInterval {
    pub delta_time: f64,
    pub e0: f64,
    pub t0: f64,
    pub e1: Option<f64>,
    pub t1: Option<f64>,
    pub calendar_index: Option<u8>,
}

impl IncidenceInterval {
    /// Control-arm incidence `e0 / t0` (events per person-month).
    pub fn control_rate(&self) -> Option<f64> {
        (self.t0 > 0.0).then(|| self.e0 / self.t0)
    }

    pub fn vaccine_rate(&self) -> Option<f64> {
        match (self.e1, self.t1) {
            (Some(e), Some(t)) if t > 0.0 => Some(e / t),
            _ => None,
        }
    }

    fn validate(&self, k: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("incidence interval {}: {what}", k + 1)));
        if !self.delta_time.is_finite() || self.delta_time <= 0.0 {
            return bad("delta_time must be finite and > 0");
        }
        let check = |e: f64, t: f64, arm: u8| -> Result<()> {
            if !e.is_finite() || !t.is_finite() || e < 0.0 || t < 0.0 {
                return Err(Error::Validation(format!(
                    "incidence interval {}: arm {arm} counts and person-time must be finite and >= 0",
                    k + 1
                )));
            }
            if t == 0.0 && e > 0.0 {
                return Err(Error::Validation(format!(
                    "incidence interval {}: arm {arm} has events but zero person-time",
                    k + 1
                )));
            }
            Ok(())
        };
        check(self.e0, self.t0, 0)?;
        match (self.e1, self.t1) {
            (Some(e), Some(t)) => check(e, t, 1)?,
            (None, None) => {}
            _ => return bad("e1 and t1 must be given together"),
        }
        if let Some(c) = self.calendar_index {
            if !(1..=12).contains(&c) {
                return bad("calendar_index outside 1..=12");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IncidenceTable {
    intervals: Vec<IncidenceInterval>,
}

impl IncidenceTable {
    pub fn new(intervals: Vec<IncidenceInterval>) -> Result<Self> {
        for (k, iv) in intervals.iter().enumerate() {
            iv.validate(k)?;
        }
        Ok(Self { intervals })
    }

    /// Table built from per-interval rates, e.g. published monthly incidence
    /// per 1000 person-months: each rate becomes `rate` events over `base`
    /// person-time.
    pub fn from_rates(delta_times: &[f64], control: &[f64], vaccine: Option<&[f64]>, base: f64) -> Result<Self> {
        if control.len() != delta_times.len() || vaccine.is_some_and(|v| v.len() != delta_times.len()) {
            return Err(Error::Validation("rate columns must match delta_times in length".into()));
        }
        let intervals = delta_times
            .iter()
            .enumerate()
            .map(|(k, &dt)| IncidenceInterval {
                delta_time: dt,
                e0: control[k],
                t0: base,
                e1: vaccine.map(|v| v[k]),
                t1: vaccine.map(|_| base),
                calendar_index: None,
            })
            .collect();
        Self::new(intervals)
    }

    /// Copy with the twelve rows labelled as calendar months 1..=12 in order.
    pub fn as_calendar(&self) -> Result<Self> {
        if self.len() != 12 {
            return Err(Error::Validation(format!("a calendar table needs 12 rows, got {}", self.len())));
        }
        let intervals = self
            .intervals
            .iter()
            .enumerate()
            .map(|(k, iv)| IncidenceInterval { calendar_index: Some(k as u8 + 1), ..iv.clone() })
            .collect();
        Self::new(intervals)
    }

    pub fn intervals(&self) -> &[IncidenceInterval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.intervals.iter().map(|i| i.delta_time).sum()
    }

    pub fn delta_times(&self) -> Vec<f64> {
        self.intervals.iter().map(|i| i.delta_time).collect()
    }

    /// Same table with every control-arm event count multiplied by `factor`.
    pub fn scale_control_events(&self, factor: f64) -> Result<Self> {
        let intervals = self
            .intervals
            .iter()
            .map(|iv| IncidenceInterval { e0: iv.e0 * factor, ..iv.clone() })
            .collect();
        Self::new(intervals)
    }
}

/// Per-interval events and person-time by arm over consecutive intervals
/// `(lower_k, upper_k]` starting at 0.
///
/// An event exactly on a boundary belongs to the earlier interval.
pub fn tabulate_incidence(ds: &TrialDataset, delta_times: &[f64]) -> Result<IncidenceTable> {
    if delta_times.is_empty() {
        return Err(Error::Validation("delta_times must not be empty".into()));
    }
    if let Some(d) = delta_times.iter().find(|d| !d.is_finite() || **d <= 0.0) {
        return Err(Error::Validation(format!("interval durations must be > 0, got {d}")));
    }
    let mut bounds = Vec::with_capacity(delta_times.len() + 1);
    bounds.push(0.0);
    let mut acc = 0.0;
    for d in delta_times {
        acc += d;
        bounds.push(acc);
    }
    let k_max = delta_times.len();
    let mut events = vec![[0.0f64; 2]; k_max];
    let mut ptime = vec![[0.0f64; 2]; k_max];

    for s in ds.subjects() {
        let a = s.arm.index();
        for k in 0..k_max {
            let (lo, hi) = (bounds[k], bounds[k + 1]);
            ptime[k][a] += (s.censor_time.min(hi) - lo).max(0.0);
        }
        for &t in &s.event_times {
            // first k with t <= upper_k; events past the horizon are dropped
            let k = bounds[1..].partition_point(|&u| u < t);
            if k < k_max {
                events[k][a] += 1.0;
            }
        }
    }

    let intervals = (0..k_max)
        .map(|k| IncidenceInterval {
            delta_time: delta_times[k],
            e0: events[k][Arm::Control.index()],
            t0: ptime[k][Arm::Control.index()],
            e1: Some(events[k][Arm::Vaccine.index()]),
            t1: Some(ptime[k][Arm::Vaccine.index()]),
            calendar_index: None,
        })
        .collect();
    IncidenceTable::new(intervals)
}

/// Monthly incidence re-indexed by calendar month.
///
/// A subject whose analysis time zero fell in calendar month `m` contributes
/// analysis month `k` (the interval `(k-1, k]`, `k = 1..=months`) to calendar
/// month `((m + k - 2) mod 12) + 1`. The result always has 12 rows, ordered
/// by calendar index, each of duration one month.
pub fn tabulate_calendar_incidence(ds: &TrialDataset, months: u8) -> Result<IncidenceTable> {
    if !(1..=12).contains(&months) {
        return Err(Error::Validation(format!("months must be within 1..=12, got {months}")));
    }
    if !ds.subjects().iter().any(|s| s.arm == Arm::Control) {
        return Err(Error::Validation("calendar incidence requires a non-empty control arm".into()));
    }
    let mut events = [[0.0f64; 2]; 12];
    let mut ptime = [[0.0f64; 2]; 12];
    for s in ds.subjects() {
        let m = s.vaccination_month.ok_or_else(|| {
            Error::Validation(format!("subject {} has no vaccination_month", s.id))
        })? as usize;
        let a = s.arm.index();
        for k in 1..=months as usize {
            let cal = (m + k - 2) % 12;
            let (lo, hi) = ((k - 1) as f64, k as f64);
            ptime[cal][a] += (s.censor_time.min(hi) - lo).max(0.0);
            events[cal][a] += s.event_times.iter().filter(|&&t| t > lo && t <= hi).count() as f64;
        }
    }
    let intervals = (0..12)
        .map(|c| IncidenceInterval {
            delta_time: 1.0,
            e0: events[c][0],
            t0: ptime[c][0],
            e1: Some(events[c][1]),
            t1: Some(ptime[c][1]),
            calendar_index: Some(c as u8 + 1),
        })
        .collect();
    IncidenceTable::new(intervals)
}
