//! Trace CSV: one row per training iteration, appended and flushed as the
//! trainer produces it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::trainer::{TraceRow, TraceSink};

pub const TRACE_HEADER: &str = "iteration,tier,o_W,o_I,oracle_calls_cumulative,wall_ms";

pub fn format_row(row: &TraceRow) -> String {
    format!(
        "{},{},{},{},{},{}",
        row.iteration,
        row.tier.as_str(),
        // adding 0 turns -0 into 0
        row.o_w + 0.0,
        row.o_i + 0.0,
        row.oracle_calls_cumulative,
        row.wall_ms
    )
}

pub struct CsvTraceSink<W: Write> {
    out: W,
    last_iteration: Option<usize>,
}

impl CsvTraceSink<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> CsvTraceSink<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{TRACE_HEADER}")?;
        out.flush()?;
        Ok(CsvTraceSink {
            out,
            last_iteration: None,
        })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TraceSink for CsvTraceSink<W> {
    fn record(&mut self, row: &TraceRow) -> Result<()> {
        if let Some(last) = self.last_iteration {
            if row.iteration <= last {
                return Err(Error::Format(format!(
                    "trace iteration {} does not follow {last}",
                    row.iteration
                )));
            }
        }
        self.last_iteration = Some(row.iteration);
        writeln!(self.out, "{}", format_row(row))?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format_row(r));
        s.push('\n');
    }
    s
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    parse_trace_csv(BufReader::new(File::open(path)?))
}

pub fn parse_trace_csv(reader: impl BufRead) -> Result<Vec<TraceRow>> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != TRACE_HEADER {
        return Err(Error::Format("missing trace header".into()));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("malformed trace row {}: '{line}'", k + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad());
        }
        rows.push(TraceRow {
            iteration: f[0].parse().map_err(|_| bad())?,
            tier: f[1].parse().map_err(|_| bad())?,
            o_w: f[2].parse().map_err(|_| bad())?,
            o_i: f[3].parse().map_err(|_| bad())?,
            oracle_calls_cumulative: f[4].parse().map_err(|_| bad())?,
            wall_ms: f[5].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}
