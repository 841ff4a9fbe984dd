use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::Message;

use super::sim::EstimateRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::param("format", format!("expected csv or json, got `{other}`"))),
        }
    }
}

/// Input and output dimensions, which fix the CSV column set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordLayout {
    pub input_dim: usize,
    pub out_dim: usize,
}

pub fn csv_header(layout: RecordLayout) -> String {
    let mut cols = vec!["t".to_string(), "agent".to_string(), "x_index".to_string()];
    cols.extend((0..layout.input_dim).map(|i| format!("x{i}")));
    cols.extend((0..layout.out_dim).map(|i| format!("estimate{i}")));
    cols.push("beta".into());
    cols.push("kappa".into());
    cols.extend((0..layout.out_dim).map(|i| format!("truth{i}")));
    cols.push("abs_error".into());
    cols.join(",")
}

/// Writes records as CSV. A missing estimate leaves its fields empty and an
/// absent bound is written as `inf`.
pub fn write_csv<W: Write>(records: &[EstimateRecord], layout: RecordLayout, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", csv_header(layout))?;
    let mut line = String::new();
    for r in records {
        use std::fmt::Write as _;
        line.clear();
        let _ = write!(line, "{},{},{}", r.t, r.agent, r.x_index);
        for c in &r.x {
            let _ = write!(line, ",{c}");
        }
        match &r.estimate {
            Some(e) => e.iter().for_each(|v| {
                let _ = write!(line, ",{v}");
            }),
            None => (0..layout.out_dim).for_each(|_| line.push(',')),
        }
        let _ = write!(line, ",{},{}", r.beta, r.kappa);
        for v in &r.truth {
            let _ = write!(line, ",{v}");
        }
        line.push(',');
        if let Some(err) = r.abs_error {
            let _ = write!(line, "{err}");
        }
        writeln!(out, "{line}")?;
    }
    out.flush()
}

pub fn export_records(
    records: &[EstimateRecord],
    path: &Path,
    format: Format,
    layout: RecordLayout,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        Format::Csv => write_csv(records, layout, out).map_err(|e| Error::io(path, e)),
        Format::Json => {
            serde_json::to_writer(&mut out, records)?;
            out.flush().map_err(|e| Error::io(path, e))
        }
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    round: u64,
    #[serde(flatten)]
    message: &'a Message,
}

/// One JSON object per line: the round plus the message fields.
pub fn write_messages(messages: &[(u64, Message)], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (round, message) in messages {
        serde_json::to_writer(&mut out, &TraceLine { round: *round, message })?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
