//! Artifact naming and serialization.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::CliError;

/// Arithmetic settings recorded in every report.
pub const ARITHMETIC: &str = "IEEE-754 binary64, round to nearest";

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub version: &'static str,
    /// SOURCE_DATE_EPOCH when set; omitted otherwise so reports stay
    /// deterministic.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
    pub arithmetic: &'static str,
}

impl Provenance {
    pub fn current() -> Self {
        Provenance {
            version: env!("CARGO_PKG_VERSION"),
            timestamp: std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()),
            arithmetic: ARITHMETIC,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunReport<'a, T: Serialize> {
    pub command: &'a str,
    pub config: &'a Config,
    /// Command-line options that shaped the run.
    pub args: &'a serde_json::Value,
    pub results: T,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

/// Writes `{command}_{hash}.{ext}` files into one directory.
pub struct Artifacts {
    dir: PathBuf,
    stem: String,
    pub written: Vec<PathBuf>,
}

impl Artifacts {
    /// The hash covers the resolved config and the command arguments.
    pub fn new(dir: &Path, command: &str, config: &Config, args: &serde_json::Value) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
        let key = serde_json::to_string(&(config, args)).expect("config serializes");
        let digest = Sha256::digest(key.as_bytes());
        let mut hash = String::new();
        for b in &digest[..8] {
            write!(hash, "{b:02x}").unwrap();
        }
        Ok(Artifacts { dir: dir.to_path_buf(), stem: format!("{command}_{hash}"), written: Vec::new() })
    }

    pub fn path(&self, ext: &str) -> PathBuf {
        self.dir.join(format!("{}.{ext}", self.stem))
    }

    pub fn json<T: Serialize>(&mut self, value: &T) -> Result<PathBuf, CliError> {
        let p = self.path("json");
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(format!("serialize: {e}")))?;
        std::fs::write(&p, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        self.written.push(p.clone());
        Ok(p)
    }

    pub fn csv(&mut self, table: &Table) -> Result<PathBuf, CliError> {
        let p = self.path("csv");
        let mut w = csv::Writer::from_path(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", p.display()));
        w.write_record(&table.header).map_err(io)?;
        for r in &table.rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        self.written.push(p.clone());
        Ok(p)
    }
}

/// Doubles with 17 significant digits, so every value round-trips exactly.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Numeric columns of a CSV file by header name.
pub fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let bad = |m: String| CliError::Usage(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| header.iter().position(|h| h.trim() == *n).ok_or_else(|| bad(format!("missing column `{n}`"))))
        .collect::<Result<_, _>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        for (c, &i) in idx.iter().enumerate() {
            let v = rec.get(i).unwrap_or("").trim();
            let x: f64 = v.parse().map_err(|_| bad(format!("row {}: `{v}` is not a number", line + 2)))?;
            cols[c].push(x);
        }
    }
    Ok(cols)
}
