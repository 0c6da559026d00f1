//! Result files. Every CSV starts with a `# config-hash:` comment line
//! followed by a header row; floats carry 17 significant digits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// SHA-256 of the canonical config text. The output directory does not
/// enter the hash, so runs into different directories stay comparable.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.output.dir = None;
    format!("{:x}", Sha256::digest(c.serialize().as_bytes()))
}

/// `{:.16e}`, i.e. 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A table of already formatted cells.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, hash: &str) -> std::io::Result<Vec<u8>> {
        let mut buf = Vec::new();
        writeln!(buf, "# config-hash: {hash}")?;
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        drop(w);
        Ok(buf)
    }
}

/// Writes `bytes` to `dir/name`, creating `dir` as needed.
pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, bytes)?;
    Ok(path)
}

/// Pretty JSON with sorted keys and a trailing newline. Non-finite floats
/// become `null`.
pub fn json_bytes(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("JSON values always serialize");
    out.push(b'\n');
    out
}

/// A float as JSON, `null` when not finite.
pub fn json_f64(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}
