use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::ValueEnum;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Where tables go: files `<out>/<name>.<ext>`, or stdout when no directory
/// was given.
pub struct Sink {
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Sink {
    pub fn new(out: Option<PathBuf>, format: Format) -> CliResult<Self> {
        if let Some(dir) = &out {
            fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        }
        Ok(Self { out, format })
    }

    pub fn has_dir(&self) -> bool {
        self.out.is_some()
    }

    /// A table of rows; CSV gets `comment` as a leading `#` line.
    pub fn table<T: Serialize>(&self, name: &str, rows: &[T], comment: Option<&str>) -> CliResult<()> {
        let bytes = match self.format {
            Format::Csv => csv_bytes(rows, comment)?,
            Format::Json => json_bytes(&rows)?,
        };
        self.emit(name, &bytes)
    }

    pub fn raw(&self, name: &str, bytes: &[u8]) -> CliResult<()> {
        self.emit(name, bytes)
    }

    fn emit(&self, name: &str, bytes: &[u8]) -> CliResult<()> {
        match &self.out {
            Some(dir) => {
                let path = dir.join(format!("{name}.{}", self.format.ext()));
                fs::write(&path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
            }
            None => {
                let mut so = io::stdout().lock();
                so.write_all(bytes)?;
                Ok(so.flush()?)
            }
        }
    }
}

pub fn csv_bytes<T: Serialize>(rows: &[T], comment: Option<&str>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    if let Some(c) = comment {
        writeln!(buf, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(buf);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn json_bytes<D: Serialize + ?Sized>(doc: &D) -> CliResult<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(doc).map_err(|e| CliError::Io(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}
