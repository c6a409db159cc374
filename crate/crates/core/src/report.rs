//! CSV export of a finished run.
//!
//! Every table has a header row. Undefined values (for example the P5
//! throughput of a run where no agent completed) are written as empty cells.
//! Floats use the shortest representation that parses back to the same
//! value, so metrics recomputed from the tables match the summary exactly.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{DecisionRecord, Sample, SimulationResult};
use crate::error::{Error, Result};
use crate::metrics::{AgentMetrics, SystemMetrics};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const AGENTS_FILE: &str = "agents.csv";
pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SEGMENTS_FILE: &str = "segments.csv";
pub const DECISIONS_FILE: &str = "decisions.csv";
pub const TURNS_FILE: &str = "turns.csv";

/// Files written by [`export_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub summary: PathBuf,
    pub agents: PathBuf,
    pub timeseries: PathBuf,
    pub segments: PathBuf,
    pub decisions: PathBuf,
    pub turns: PathBuf,
}

impl ReportFiles {
    pub fn in_dir(dir: &Path) -> Self {
        ReportFiles {
            summary: dir.join(SUMMARY_FILE),
            agents: dir.join(AGENTS_FILE),
            timeseries: dir.join(TIMESERIES_FILE),
            segments: dir.join(SEGMENTS_FILE),
            decisions: dir.join(DECISIONS_FILE),
            turns: dir.join(TURNS_FILE),
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct SegmentRow {
    pub instance: usize,
    pub start: f64,
    pub end: f64,
    pub level: usize,
    pub level_mhz: u32,
    pub usage: u64,
    pub pending: usize,
    pub queued: usize,
    pub running: usize,
    pub watts: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct TurnRow {
    pub agent_id: String,
    pub turn: usize,
    pub instance: usize,
    pub issued_at: f64,
    pub started_at: f64,
    pub completed_at: f64,
    pub prefill_tokens: u64,
    pub decode_tokens: u64,
}

/// Writes the summary, per-agent, time-series, segment, decision and turn
/// tables into `dir`, creating it if needed.
pub fn export_report(result: &SimulationResult, dir: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles::in_dir(dir);
    write_summary(&result.system, &files.summary)?;
    write_rows::<AgentMetrics, _>(&files.agents, result.agents.iter())?;
    write_rows::<Sample, _>(&files.timeseries, result.samples.iter())?;
    write_rows::<SegmentRow, _>(
        &files.segments,
        result.segments.iter().enumerate().flat_map(|(i, segs)| {
            segs.iter().map(move |s| SegmentRow {
                instance: i,
                start: s.start,
                end: s.end,
                level: s.level,
                level_mhz: s.level_mhz,
                usage: s.usage,
                pending: s.pending,
                queued: s.queued,
                running: s.running,
                watts: s.watts,
            })
        }),
    )?;
    write_rows::<DecisionRecord, _>(&files.decisions, result.decisions.iter())?;
    write_rows::<TurnRow, _>(
        &files.turns,
        result.turns.iter().map(|t| TurnRow {
            agent_id: result.agent_ids[t.agent.0].to_string(),
            turn: t.turn,
            instance: t.instance,
            issued_at: t.issued_at,
            started_at: t.started_at,
            completed_at: t.completed_at,
            prefill_tokens: t.prefill_tokens,
            decode_tokens: t.decode_tokens,
        }),
    )?;
    Ok(files)
}

pub fn write_summary(system: &SystemMetrics, path: &Path) -> Result<()> {
    write_rows::<SystemMetrics, _>(path, std::iter::once(system))
}

/// Writes `rows` as CSV. `R` names the row type so an empty table still
/// gets its header.
fn write_rows<R: Serialize + Default, T: Serialize>(path: &Path, rows: impl Iterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut empty = true;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
        empty = false;
    }
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    if empty {
        inner.write_all(&header_of::<R>()).map_err(|e| Error::io(path, e))?;
    }
    inner.flush().map_err(|e| Error::io(path, e))
}

fn header_of<R: Serialize + Default>() -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    // Serializing plain data into memory cannot fail.
    w.serialize(R::default()).expect("in-memory csv write");
    let buf = w.into_inner().expect("in-memory csv flush");
    let end = buf.iter().position(|&b| b == b'\n').map_or(buf.len(), |i| i + 1);
    buf[..end].to_vec()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    }
}

/// Reads back a summary table.
pub fn read_summary(path: &Path) -> Result<SystemMetrics> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .next()
        .ok_or_else(|| Error::Validation(format!("{}: empty summary", path.display())))?
        .map_err(|e| csv_error(path, e))
}
