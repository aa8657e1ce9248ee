//! Newline-delimited JSON helpers.
//!
//! All batch inputs and outputs in this crate — review archives, training
//! examples, evaluation cases, suppression rules, replay corpora, feedback
//! logs — are JSON values, one per line. These helpers centralize the
//! line-number bookkeeping for error reports.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads every record from a newline-delimited JSON stream, failing on the
/// first malformed line. Blank lines are skipped.
pub fn read_all<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| JsonlError::Parse {
            line: idx + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Malformed lines from a lenient read: `(line number, error)` pairs.
pub type BadLines = Vec<(usize, serde_json::Error)>;

/// Reads records from a newline-delimited JSON stream, collecting malformed
/// lines as `(line number, error)` instead of failing. Blank lines are
/// skipped. Used where a batch must survive individual bad records.
pub fn read_lenient<T: DeserializeOwned>(
    reader: impl BufRead,
) -> Result<(Vec<T>, BadLines), std::io::Error> {
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(record) => out.push(record),
            Err(err) => bad.push((idx + 1, err)),
        }
    }
    Ok((out, bad))
}

/// Writes one record as a single JSON line.
pub fn write_one<T: Serialize>(writer: &mut impl Write, record: &T) -> Result<(), JsonlError> {
    let line = serde_json::to_string(record).map_err(|source| JsonlError::Parse {
        line: 0,
        source,
    })?;
    writer.write_all(line.as_bytes())?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// Writes a batch of records, one JSON line each.
pub fn write_all<'a, T: Serialize + 'a>(
    writer: &mut impl Write,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<(), JsonlError> {
    for record in records {
        write_one(writer, record)?;
    }
    Ok(())
}
