//! Output files.
//!
//! `run.csv` columns: tick, window start in seconds, context after the tick,
//! decoded position (m, empty unless an object echo was decoded), true
//! position of the nearest object (m, empty without objects), event kind, and
//! burst events in the classification window for CMS, CLS and LS.
//!
//! `events.log` holds one JSON object per tick with the tick, context,
//! classified event, decayed counters, the transition (or null) and the
//! commands applied. `summary.json` is a single JSON object.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so equal
//! values give equal bytes on every platform.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{EventLog, HarnessError, RunRecord};

pub const RUN_CSV_HEADER: &str =
    "tick,time,context,decoded_position,true_position,event_kind,bursts_cms,bursts_cls,bursts_ls";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_run_csv(record: &RunRecord, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{RUN_CSV_HEADER}")?;
    for r in &record.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.tick,
            r.time,
            r.context,
            opt(r.decoded_position),
            opt(r.true_position),
            r.event_kind,
            r.bursts[0],
            r.bursts[1],
            r.bursts[2]
        )?;
    }
    Ok(())
}

pub fn write_event_log(log: &EventLog, mut w: impl Write) -> std::io::Result<()> {
    for e in &log.entries {
        serde_json::to_writer(&mut w, e)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_summary(summary: &impl Serialize, mut w: impl Write) -> std::io::Result<()> {
    serde_json::to_writer(&mut w, summary)?;
    writeln!(w)
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| io_error(path, source))
}

fn io_error(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `run.csv`, `events.log` and `summary.json` into `dir`, creating it
/// if needed.
pub fn write_outputs(
    dir: &Path,
    record: &RunRecord,
    log: &EventLog,
    summary: &impl Serialize,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let csv = dir.join("run.csv");
    let mut w = create(&csv)?;
    write_run_csv(record, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_error(&csv, e))?;
    let events = dir.join("events.log");
    let mut w = create(&events)?;
    write_event_log(log, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_error(&events, e))?;
    let sum = dir.join("summary.json");
    let mut w = create(&sum)?;
    write_summary(summary, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_error(&sum, e))?;
    Ok(())
}
