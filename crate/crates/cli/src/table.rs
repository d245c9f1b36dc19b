//! CSV artifacts: a `# config_hash=… seed=…` comment line, a header row, then
//! RFC-4180 rows with floats written to 17 significant digits.

use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Float(v) if v.is_finite() => write!(f, "{v:.16e}"),
            Cell::Float(v) if v.is_nan() => f.write_str("NaN"),
            Cell::Float(v) if *v > 0.0 => f.write_str("inf"),
            Cell::Float(_) => f.write_str("-inf"),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Empty => Ok(()),
        }
    }
}

/// Provenance written on the comment line of every artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl Stamp {
    pub fn new(canonical_config: &str, seed: Option<u64>) -> Self {
        Self { config_hash: hex::encode(Sha256::digest(canonical_config.as_bytes())), seed }
    }

    fn line(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!("# config_hash={} seed={seed}\n", self.config_hash)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn render(&self, stamp: &Stamp) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("writing to memory");
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string())).expect("writing to memory");
        }
        let body = String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is UTF-8");
        stamp.line() + &body
    }
}

/// A named output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub table: Table,
}

impl Artifact {
    pub fn new(file_name: &str, table: Table) -> Self {
        Self { file_name: file_name.to_string(), table }
    }

    pub fn write(&self, dir: &Path, stamp: &Stamp) -> Result<std::path::PathBuf, CliError> {
        let path = dir.join(&self.file_name);
        std::fs::write(&path, self.table.render(stamp)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Stamp line, header and records of an artifact, as strings.
pub type ParsedArtifact = (String, Vec<String>, Vec<Vec<String>>);

/// Reads an artifact back.
pub fn read_artifact(text: &str) -> Result<ParsedArtifact, CliError> {
    let (stamp, body) =
        text.split_once('\n').filter(|(s, _)| s.starts_with("# ")).ok_or_else(|| CliError::Io("artifact has no stamp line".into()))?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers().map_err(|e| CliError::Io(e.to_string()))?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok((stamp.to_string(), header, rows))
}
