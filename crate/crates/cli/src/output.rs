//! CSV and manifest emission: comma-separated, `.` decimal, header row, LF
//! line endings, written atomically (temp file then rename). Every numeric
//! field is checked finite before it reaches a file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};

/// Formats a float for CSV. Rust's shortest-roundtrip formatting keeps the
/// output byte-stable for bit-identical inputs.
pub fn field(v: f64) -> Result<String> {
    ensure!(
        v.is_finite(),
        "refusing to write a non-finite value ({v}) into a CSV"
    );
    Ok(format!("{v}"))
}

pub struct CsvWriter {
    name: String,
    lines: Vec<String>,
}

impl CsvWriter {
    pub fn new(name: impl Into<String>, header: &str) -> Self {
        Self {
            name: name.into(),
            lines: vec![header.to_string()],
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.lines.push(cells.join(","));
    }

    /// Writes `<dir>/<name>` atomically and returns the final path.
    pub fn write(self, dir: &Path) -> Result<PathBuf> {
        let mut body = self.lines.join("\n");
        body.push('\n');
        let path = dir.join(&self.name);
        write_atomic(&path, body.as_bytes())?;
        Ok(path)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .context("output path has no parent directory")?;
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .context("output path has no file name")?;
    let tmp = dir.join(format!(".tmp.{file_name}"));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}
