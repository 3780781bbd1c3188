use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[S], rows: &[Vec<String>]) -> anyhow::Result<PathBuf> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header.iter().map(|s| s.as_ref()))?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<PathBuf> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

/// Fixed-precision float formatting so golden files stay stable.
pub fn num(v: f64) -> String {
    format!("{v:.6}")
}
