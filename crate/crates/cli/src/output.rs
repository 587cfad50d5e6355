//! CSV and key/value report writers. Floats use `{:.16e}` so runs are
//! byte-for-byte reproducible.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use beamctl_core::{ModalCoeffs, StateZ};

use crate::CliError;

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header `t, <w>_1..<w>_N, ...` for modal columns.
pub fn modal_header(first: &str, groups: &[&str], modes: usize) -> Vec<String> {
    let mut h = vec![first.to_string()];
    for g in groups {
        h.extend((1..=modes).map(|n| format!("{g}_{n}")));
    }
    h
}

pub fn state_row(t: f64, z: &StateZ) -> Vec<String> {
    std::iter::once(t)
        .chain(z.w.iter().copied())
        .chain(z.y.iter().copied())
        .map(fmt)
        .collect()
}

pub fn coeff_row(t: f64, c: &ModalCoeffs) -> Vec<String> {
    std::iter::once(t).chain(c.iter().copied()).map(fmt).collect()
}

pub fn write_csv<I, R>(path: &Path, header: &[String], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Ordered `key = value` lines.
#[derive(Debug, Default)]
pub struct Report {
    text: String,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num(&mut self, key: &str, v: f64) -> &mut Self {
        self.put(key, &fmt(v))
    }

    pub fn put(&mut self, key: &str, v: &dyn std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.text, "{key} = {v}");
        self
    }

    pub fn raw(&mut self, text: &str) -> &mut Self {
        self.text.push_str(text);
        self
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, &self.text).map_err(|e| CliError::io(path, e))
    }
}

/// Output file naming under one directory and prefix.
#[derive(Debug, Clone)]
pub struct Sink {
    dir: PathBuf,
    prefix: String,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: PathBuf, prefix: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self {
            dir,
            prefix: prefix.to_string(),
            written: Vec::new(),
        })
    }

    /// `<dir>/<prefix>_<suffix>`.
    pub fn path(&mut self, suffix: &str) -> PathBuf {
        let p = self.dir.join(format!("{}_{suffix}", self.prefix));
        self.written.push(p.clone());
        p
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}
