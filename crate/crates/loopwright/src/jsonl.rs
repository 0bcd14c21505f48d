//! Line-delimited JSON with an optional leading schema header.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub schema_version: u32,
}

impl Header {
    pub fn new(schema: &str) -> Self {
        Self { schema: schema.into(), schema_version: SCHEMA_VERSION }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

impl JsonlError {
    pub fn line(&self) -> Option<usize> {
        match self {
            JsonlError::Parse { line, .. } => Some(*line),
            JsonlError::Io { .. } => None,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> JsonlError + '_ {
    move |source| JsonlError::Io { path: path.to_path_buf(), source }
}

fn is_header(v: &Value) -> bool {
    v.as_object()
        .is_some_and(|o| o.contains_key("schema") && o.contains_key("schema_version"))
}

/// Every non-blank line as a JSON value with its 1-based line number.
pub fn read_values(path: &Path) -> Result<(Option<Header>, Vec<(usize, Value)>), JsonlError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut header = None;
    let mut values = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| JsonlError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if header.is_none() && values.is_empty() && is_header(&value) {
            header = serde_json::from_value(value).ok();
            continue;
        }
        values.push((i + 1, value));
    }
    Ok((header, values))
}

pub fn parse_value<T: DeserializeOwned>(path: &Path, line: usize, value: Value) -> Result<T, JsonlError> {
    serde_json::from_value(value).map_err(|e| JsonlError::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    })
}

pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let (_, values) = read_values(path)?;
    values.into_iter().map(|(line, v)| parse_value(path, line, v)).collect()
}

/// Writes `schema` as a header line followed by one line per item.
/// Returns the number of items.
pub fn write<'a, T, I>(path: &Path, schema: &str, items: I) -> Result<usize, JsonlError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let mut n = 0;
    let write_line = |out: &mut BufWriter<File>, line: String| -> io::Result<()> {
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")
    };
    let header = serde_json::to_string(&Header::new(schema)).expect("header serializes");
    write_line(&mut out, header).map_err(io_err(path))?;
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| JsonlError::Parse {
            path: path.to_path_buf(),
            line: n + 2,
            message: e.to_string(),
        })?;
        write_line(&mut out, line).map_err(io_err(path))?;
        n += 1;
    }
    out.flush().map_err(io_err(path))?;
    Ok(n)
}
