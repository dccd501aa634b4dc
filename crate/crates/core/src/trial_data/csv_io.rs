//! CSV readers and writers.
//!
//! Lines starting with `#` are comments; writers use them to carry
//! provenance ahead of the header.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ingest_counting_process, to_counting_process, Arm, CountingProcessRecord, TrialDataset};
use super::{IncidenceInterval, IncidenceTable};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct EventRow {
    subject_id: String,
    arm: i64,
    stratum: String,
    start: f64,
    stop: f64,
    status: i64,
    #[serde(default)]
    vaccination_month: Option<i64>,
}

#[derive(Debug, Serialize)]
struct EventRowOut<'a> {
    subject_id: &'a str,
    arm: u8,
    stratum: &'a str,
    start: f64,
    stop: f64,
    status: u8,
    vaccination_month: Option<u8>,
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn write_comments<W: Write>(out: &mut W, comments: &[String]) -> Result<()> {
    for c in comments {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    Ok(())
}

/// Read an events CSV (`subject_id,arm,stratum,start,stop,status[,vaccination_month]`).
pub fn read_events_csv<R: Read>(input: R) -> Result<TrialDataset> {
    let mut rdr = reader(input);
    let mut records = Vec::new();
    for (line, row) in rdr.deserialize::<EventRow>().enumerate() {
        let row = row.map_err(|e| Error::Validation(format!("events CSV row {}: {e}", line + 1)))?;
        let arm = Arm::from_code(row.arm)?;
        let status = match row.status {
            0 | 1 => row.status as u8,
            s => return Err(Error::Validation(format!("status must be 0 or 1, got {s}"))),
        };
        let vaccination_month = match row.vaccination_month {
            None => None,
            Some(m @ 1..=12) => Some(m as u8),
            Some(m) => return Err(Error::Validation(format!("vaccination_month must be 1..=12, got {m}"))),
        };
        records.push(CountingProcessRecord {
            subject_id: row.subject_id,
            arm,
            stratum: row.stratum,
            start: row.start,
            stop: row.stop,
            status,
            vaccination_month,
        });
    }
    ingest_counting_process(records)
}

/// Write a dataset as an events CSV; `vaccination_month` is emitted only if
/// some subject carries one.
pub fn write_events_csv<W: Write>(ds: &TrialDataset, mut out: W, comments: &[String]) -> Result<()> {
    write_comments(&mut out, comments)?;
    let with_month = ds.subjects().iter().any(|s| s.vaccination_month.is_some());
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let mut header = vec!["subject_id", "arm", "stratum", "start", "stop", "status"];
    if with_month {
        header.push("vaccination_month");
    }
    wtr.write_record(&header)?;
    for r in to_counting_process(ds) {
        let row = EventRowOut {
            subject_id: &r.subject_id,
            arm: r.arm.code(),
            stratum: &r.stratum,
            start: r.start,
            stop: r.stop,
            status: r.status,
            vaccination_month: r.vaccination_month,
        };
        if with_month {
            wtr.serialize(row)?;
        } else {
            wtr.serialize((row.subject_id, row.arm, row.stratum, row.start, row.stop, row.status))?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct IncidenceRow {
    #[serde(default)]
    calendar_index: Option<u8>,
    delta_time: f64,
    e0: f64,
    t0: f64,
    #[serde(default)]
    e1: Option<f64>,
    #[serde(default)]
    t1: Option<f64>,
}

/// Read an incidence CSV (`calendar_index,delta_time,e0,t0,e1,t1`); the
/// calendar index and the vaccine-arm columns may be empty.
pub fn read_incidence_csv<R: Read>(input: R) -> Result<IncidenceTable> {
    let mut rdr = reader(input);
    let mut intervals = Vec::new();
    for (line, row) in rdr.deserialize::<IncidenceRow>().enumerate() {
        let row = row.map_err(|e| Error::Validation(format!("incidence CSV row {}: {e}", line + 1)))?;
        intervals.push(IncidenceInterval {
            delta_time: row.delta_time,
            e0: row.e0,
            t0: row.t0,
            e1: row.e1,
            t1: row.t1,
            calendar_index: row.calendar_index,
        });
    }
    IncidenceTable::new(intervals)
}

pub fn write_incidence_csv<W: Write>(table: &IncidenceTable, mut out: W, comments: &[String]) -> Result<()> {
    write_comments(&mut out, comments)?;
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["calendar_index", "delta_time", "e0", "t0", "e1", "t1"])?;
    for iv in table.intervals() {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        wtr.write_record([
            iv.calendar_index.map(|c| c.to_string()).unwrap_or_default(),
            iv.delta_time.to_string(),
            iv.e0.to_string(),
            iv.t0.to_string(),
            opt(iv.e1),
            opt(iv.t1),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
