//! Output files. Floats are printed with Rust's shortest round-trip formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sliq_core::{Error, Result};

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A header line followed by one line per row.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        let _ = writeln!(text, "{}", row.join(","));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
