//! Lossless CSV persistence for run artifacts and analysis results.
//!
//! Every file starts with a `# pubbench <kind> v<version>` line followed by a
//! header row. Timestamps and latencies are decimal integer nanoseconds;
//! absent values are empty fields.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

mod records;
mod run_dir;

pub use records::{IndexRow, ReportRow};
pub use run_dir::{load_run_dir, LoadedRun};

use crate::stack::{PublisherRecord, SampleRecord, TraceEvent};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: expected first line {expected:?}, found {found:?}")]
    Version {
        path: String,
        expected: String,
        found: String,
    },
    #[error("{path}: header mismatch: expected {expected:?}, found {found:?}")]
    Header {
        path: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{path}: row {row}: {reason}")]
    Row {
        path: String,
        row: u64,
        reason: String,
    },
    #[error("{path}: row {row}, column {column}: {reason}")]
    Field {
        path: String,
        row: u64,
        column: &'static str,
        reason: String,
    },
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

impl ReportError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        ReportError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// A field-level parse failure, located by column index.
#[derive(Debug)]
pub struct FieldError {
    pub column: usize,
    pub reason: String,
}

/// Cursor over one parsed CSV row.
pub struct Row<'a> {
    record: &'a csv::StringRecord,
    run_ids: &'a mut Option<Arc<str>>,
}

impl Row<'_> {
    pub fn text(&self, column: usize) -> &str {
        self.record.get(column).unwrap_or("")
    }

    pub fn int<T: FromStr>(&self, column: usize) -> Result<T, FieldError> {
        let raw = self.text(column);
        raw.parse().map_err(|_| FieldError {
            column,
            reason: format!("expected a non-negative integer, found {raw:?}"),
        })
    }

    pub fn opt_int<T: FromStr>(&self, column: usize) -> Result<Option<T>, FieldError> {
        if self.text(column).is_empty() {
            Ok(None)
        } else {
            self.int(column).map(Some)
        }
    }

    pub fn token<T: FromStr<Err = String>>(&self, column: usize) -> Result<T, FieldError> {
        self.text(column)
            .parse()
            .map_err(|reason| FieldError { column, reason })
    }

    /// Run ids repeat on every row; consecutive equal ids share one allocation.
    pub fn run_id(&mut self, column: usize) -> Arc<str> {
        let raw = self.record.get(column).unwrap_or("");
        match self.run_ids {
            Some(id) if &**id == raw => id.clone(),
            _ => {
                let id: Arc<str> = Arc::from(raw);
                *self.run_ids = Some(id.clone());
                id
            }
        }
    }
}

/// A record type with a fixed CSV schema.
pub trait CsvRecord: Sized {
    const KIND: &'static str;
    const COLUMNS: &'static [&'static str];

    fn fields(&self) -> Vec<String>;
    fn parse(row: &mut Row<'_>) -> Result<Self, FieldError>;
}

pub fn version_line<T: CsvRecord>() -> String {
    format!("# pubbench {} v{SCHEMA_VERSION}", T::KIND)
}

pub fn write_records<T: CsvRecord, W: Write>(out: W, records: &[T]) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{}", version_line::<T>())?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer.write_record(T::COLUMNS)?;
    for r in records {
        writer.write_record(r.fields())?;
    }
    writer.flush()?;
    Ok(())
}

/// Parses records written by [`write_records`]. `source` names the input in errors.
pub fn read_records<T: CsvRecord, R: BufRead>(
    mut input: R,
    source: &str,
) -> Result<Vec<T>, ReportError> {
    let mut first = String::new();
    input.read_line(&mut first).map_err(|e| ReportError::Io {
        path: source.to_string(),
        source: e,
    })?;
    let expected = version_line::<T>();
    if first.trim_end_matches(['\n', '\r']) != expected {
        return Err(ReportError::Version {
            path: source.to_string(),
            expected,
            found: first.trim_end().to_string(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let csv_err = |row: u64, e: csv::Error| ReportError::Row {
        path: source.to_string(),
        row,
        reason: e.to_string(),
    };
    let header = reader.headers().map_err(|e| csv_err(0, e))?.clone();
    if header.iter().ne(T::COLUMNS.iter().copied()) {
        return Err(ReportError::Header {
            path: source.to_string(),
            expected: T::COLUMNS.iter().map(|c| c.to_string()).collect(),
            found: header.iter().map(str::to_string).collect(),
        });
    }
    let mut out = Vec::new();
    let mut run_ids = None;
    let mut record = csv::StringRecord::new();
    let mut row_number = 0u64;
    loop {
        row_number += 1;
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_err(row_number, e)),
        }
        let mut row = Row {
            record: &record,
            run_ids: &mut run_ids,
        };
        let parsed = T::parse(&mut row).map_err(|e| ReportError::Field {
            path: source.to_string(),
            row: row_number,
            column: T::COLUMNS[e.column],
            reason: e.reason,
        })?;
        out.push(parsed);
    }
    Ok(out)
}

pub fn emit<T: CsvRecord>(path: &Path, records: &[T]) -> Result<(), ReportError> {
    let file = File::create(path).map_err(|e| ReportError::io(path, e))?;
    write_records(file, records).map_err(|e| ReportError::io(path, e))
}

pub fn load<T: CsvRecord>(path: &Path) -> Result<Vec<T>, ReportError> {
    let file = File::open(path).map_err(|e| ReportError::io(path, e))?;
    read_records(BufReader::new(file), &path.display().to_string())
}

pub fn emit_samples(path: &Path, records: &[SampleRecord]) -> Result<(), ReportError> {
    emit(path, records)
}

pub fn load_samples(path: &Path) -> Result<Vec<SampleRecord>, ReportError> {
    load(path)
}

pub fn emit_publishers(path: &Path, records: &[PublisherRecord]) -> Result<(), ReportError> {
    emit(path, records)
}

pub fn load_publishers(path: &Path) -> Result<Vec<PublisherRecord>, ReportError> {
    load(path)
}

pub fn emit_traces(path: &Path, records: &[TraceEvent]) -> Result<(), ReportError> {
    emit(path, records)
}

pub fn load_traces(path: &Path) -> Result<Vec<TraceEvent>, ReportError> {
    load(path)
}

pub fn emit_report(path: &Path, rows: &[ReportRow]) -> Result<(), ReportError> {
    emit(path, rows)
}

pub fn load_report(path: &Path) -> Result<Vec<ReportRow>, ReportError> {
    load(path)
}

pub fn emit_index(path: &Path, rows: &[IndexRow]) -> Result<(), ReportError> {
    emit(path, rows)
}

pub fn load_index(path: &Path) -> Result<Vec<IndexRow>, ReportError> {
    load(path)
}

/// File names inside one run directory.
pub mod files {
    pub const CONFIG: &str = "config.txt";
    pub const SAMPLES: &str = "samples.csv";
    pub const PUBLISHERS: &str = "publishers.csv";
    pub const TRACES: &str = "traces.csv";
    pub const SUMMARY: &str = "summary.txt";
    pub const REPORT_CSV: &str = "report.csv";
    pub const REPORT_TXT: &str = "report.txt";
    pub const REPORT_IN_TIME_CSV: &str = "report-in-time-only.csv";
    pub const REPORT_IN_TIME_TXT: &str = "report-in-time-only.txt";
    pub const ERROR: &str = "error.txt";
    pub const INDEX: &str = "index.csv";
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ReportError> {
    std::fs::write(path, text).map_err(|e| ReportError::io(path, e))
}
