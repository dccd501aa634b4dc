//! Recurrent-event trial data.
//!
//! A [`TrialDataset`] holds one [`Subject`] per participant: arm, stratum,
//! censoring time and the ordered times of their events, all in months since
//! analysis time zero. The on-disk representation is the counting-process
//! long format ([`CountingProcessRecord`]); [`tabulate_incidence`] and
//! [`tabulate_calendar_incidence`] reduce a dataset to per-interval event
//! counts and person-time.

mod csv_io;
mod incidence;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{read_events_csv, read_incidence_csv, write_events_csv, write_incidence_csv};
pub use incidence::{tabulate_calendar_incidence, tabulate_incidence, IncidenceInterval, IncidenceTable};

/// Treatment arm. Serialized as `0` (control) / `1` (vaccine).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Control,
    Vaccine,
}

impl Arm {
    pub fn from_code(code: i64) -> Result<Self> {
        match code {
            0 => Ok(Arm::Control),
            1 => Ok(Arm::Vaccine),
            other => Err(Error::Validation(format!("arm must be 0 or 1, got {other}"))),
        }
    }

    /// The intervention indicator `z`.
    pub fn code(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Vaccine => 1,
        }
    }

    pub fn index(self) -> usize {
        self.code() as usize
    }

    pub fn swapped(self) -> Self {
        match self {
            Arm::Control => Arm::Vaccine,
            Arm::Vaccine => Arm::Control,
        }
    }
}

impl Serialize for Arm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for Arm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let code = i64::deserialize(d)?;
        Arm::from_code(code).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub arm: Arm,
    pub stratum: String,
    /// End of observation, months since time zero.
    pub censor_time: f64,
    /// Strictly increasing, each in `(0, censor_time]`.
    pub event_times: Vec<f64>,
    /// Calendar month (1..=12) in which analysis time zero fell.
    pub vaccination_month: Option<u8>,
}

impl Subject {
    pub fn new(id: impl Into<String>, arm: Arm, stratum: impl Into<String>, censor_time: f64, event_times: Vec<f64>) -> Result<Self> {
        let s = Subject {
            id: id.into(),
            arm,
            stratum: stratum.into(),
            censor_time,
            event_times,
            vaccination_month: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_vaccination_month(mut self, month: u8) -> Result<Self> {
        self.vaccination_month = Some(month);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.id;
        if !self.censor_time.is_finite() || self.censor_time <= 0.0 {
            return Err(Error::Validation(format!(
                "subject {id}: censor time must be finite and > 0, got {}",
                self.censor_time
            )));
        }
        let mut prev = 0.0;
        for &t in &self.event_times {
            if !t.is_finite() {
                return Err(Error::Validation(format!("subject {id}: non-finite event time")));
            }
            if t <= prev {
                return Err(Error::Validation(format!(
                    "subject {id}: event times must be > 0 and strictly increasing (got {t} after {prev})"
                )));
            }
            if t > self.censor_time {
                return Err(Error::Validation(format!(
                    "subject {id}: event at {t} after censor time {}",
                    self.censor_time
                )));
            }
            prev = t;
        }
        if let Some(m) = self.vaccination_month {
            if !(1..=12).contains(&m) {
                return Err(Error::Validation(format!("subject {id}: vaccination month {m} outside 1..=12")));
            }
        }
        Ok(())
    }
}

/// Immutable collection of subjects with unique ids. Time unit is months.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialDataset {
    subjects: Vec<Subject>,
}

impl TrialDataset {
    pub const TIME_UNIT: &'static str = "months";

    pub fn new(subjects: Vec<Subject>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(subjects.len());
        for s in &subjects {
            s.validate()?;
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Validation(format!("duplicate subject id '{}'", s.id)));
            }
        }
        Ok(Self { subjects })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.subjects.iter().map(|s| s.event_times.len()).sum()
    }

    /// Distinct strata in order of first appearance.
    pub fn strata(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.subjects
            .iter()
            .map(|s| s.stratum.as_str())
            .filter(|s| seen.insert(*s))
            .collect()
    }

    pub fn into_subjects(self) -> Vec<Subject> {
        self.subjects
    }

    /// Copy with every subject's arm flipped.
    pub fn with_swapped_arms(&self) -> Self {
        let subjects = self
            .subjects
            .iter()
            .map(|s| Subject { arm: s.arm.swapped(), ..s.clone() })
            .collect();
        Self { subjects }
    }

    /// Apply a time transform to every censor and event time.
    ///
    /// The map must be strictly increasing and keep positive times positive.
    /// The result is re-validated.
    pub fn map_times(&self, map: impl Fn(f64) -> f64) -> Result<Self> {
        let subjects = self
            .subjects
            .iter()
            .map(|s| Subject {
                censor_time: map(s.censor_time),
                event_times: s.event_times.iter().map(|&t| map(t)).collect(),
                ..s.clone()
            })
            .collect();
        Self::new(subjects)
    }

    /// Keep only subjects belonging to `stratum`.
    pub fn stratum_subset(&self, stratum: &str) -> Self {
        Self {
            subjects: self.subjects.iter().filter(|s| s.stratum == stratum).cloned().collect(),
        }
    }

    /// Administrative truncation of follow-up at `horizon`.
    pub fn truncate(&self, horizon: f64) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::Validation(format!("truncation horizon must be > 0, got {horizon}")));
        }
        let subjects = self
            .subjects
            .iter()
            .map(|s| Subject {
                censor_time: s.censor_time.min(horizon),
                event_times: s.event_times.iter().copied().filter(|&t| t <= horizon).collect(),
                ..s.clone()
            })
            .collect();
        Ok(Self { subjects })
    }
}

/// One row of the counting-process long format: the subject was at risk on
/// `(start, stop]` and had an event at `stop` iff `status == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingProcessRecord {
    pub subject_id: String,
    pub arm: Arm,
    pub stratum: String,
    pub start: f64,
    pub stop: f64,
    pub status: u8,
    #[serde(default)]
    pub vaccination_month: Option<u8>,
}

/// Build a dataset from counting-process records.
///
/// Records of one subject may arrive in any order and interleaved with other
/// subjects; subjects keep the order of their first record. The records of
/// each subject must tile `[0, censor_time]` exactly.
pub fn ingest_counting_process<I>(rows: I) -> Result<TrialDataset>
where
    I: IntoIterator<Item = CountingProcessRecord>,
{
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<CountingProcessRecord>> = HashMap::new();
    for row in rows {
        if !row.start.is_finite() || !row.stop.is_finite() {
            return Err(Error::Validation(format!("subject {}: non-finite start/stop", row.subject_id)));
        }
        if row.status > 1 {
            return Err(Error::Validation(format!(
                "subject {}: status must be 0 or 1, got {}",
                row.subject_id, row.status
            )));
        }
        if row.start >= row.stop {
            return Err(Error::Structure(format!(
                "subject {}: record start {} not before stop {}",
                row.subject_id, row.start, row.stop
            )));
        }
        match groups.get_mut(&row.subject_id) {
            Some(g) => g.push(row),
            None => {
                order.push(row.subject_id.clone());
                groups.insert(row.subject_id.clone(), vec![row]);
            }
        }
    }

    let mut subjects = Vec::with_capacity(order.len());
    for id in order {
        let mut recs = groups.remove(&id).expect("grouped above");
        recs.sort_by(|a, b| a.start.total_cmp(&b.start));
        let first = &recs[0];
        let (arm, stratum, vm) = (first.arm, first.stratum.clone(), first.vaccination_month);
        if first.start != 0.0 {
            return Err(Error::Structure(format!(
                "subject {id}: follow-up must start at 0, first record starts at {}",
                first.start
            )));
        }
        let mut events = Vec::new();
        let mut cursor = 0.0;
        for r in &recs {
            if r.arm != arm || r.stratum != stratum || r.vaccination_month != vm {
                return Err(Error::Validation(format!(
                    "subject {id}: arm, stratum and vaccination_month must be constant across records"
                )));
            }
            if r.start < cursor {
                return Err(Error::Structure(format!(
                    "subject {id}: overlapping intervals at {} (previous record ends at {cursor})",
                    r.start
                )));
            }
            if r.start > cursor {
                return Err(Error::Structure(format!(
                    "subject {id}: gap in follow-up between {cursor} and {}",
                    r.start
                )));
            }
            if r.status == 1 {
                events.push(r.stop);
            }
            cursor = r.stop;
        }
        subjects.push(Subject {
            id,
            arm,
            stratum,
            censor_time: cursor,
            event_times: events,
            vaccination_month: vm,
        });
    }
    TrialDataset::new(subjects)
}

/// Split every subject's follow-up at its event times.
pub fn to_counting_process(ds: &TrialDataset) -> Vec<CountingProcessRecord> {
    let mut out = Vec::with_capacity(ds.len() + ds.n_events());
    for s in ds.subjects() {
        let mut start = 0.0;
        let rec = |start: f64, stop: f64, status: u8| CountingProcessRecord {
            subject_id: s.id.clone(),
            arm: s.arm,
            stratum: s.stratum.clone(),
            start,
            stop,
            status,
            vaccination_month: s.vaccination_month,
        };
        for &t in &s.event_times {
            out.push(rec(start, t, 1));
            start = t;
        }
        // An event exactly at the censor time closes follow-up.
        if start < s.censor_time {
            out.push(rec(start, s.censor_time, 0));
        }
    }
    out
}
