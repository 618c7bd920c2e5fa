//! Report writing and provenance.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Output directory plus the per-run provenance every report embeds.
pub struct Sink {
    pub dir: PathBuf,
}

impl Sink {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Sink { dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// CSV with a header row and one record per row.
    pub fn csv<I, R>(&self, name: &str, header: &[&str], rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
    {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn with_writer(&self, name: &str, f: impl FnOnce(&mut fs::File) -> Result<()>) -> Result<PathBuf> {
        let path = self.path(name);
        let mut file = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        f(&mut file)?;
        file.flush()?;
        Ok(path)
    }
}

/// Envelope shared by all JSON reports.
#[derive(Debug, Serialize)]
pub struct Report<'a, C: Serialize, B: Serialize> {
    pub tool_version: &'static str,
    pub config: &'a C,
    /// Checksum of the reaction-time CSV, when one was read.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_sha256: Option<&'a str>,
    #[serde(flatten)]
    pub body: B,
}

pub fn report<'a, C: Serialize, B: Serialize>(config: &'a C, dataset_sha256: Option<&'a str>, body: B) -> Report<'a, C, B> {
    Report {
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        dataset_sha256,
        body,
    }
}

pub fn fmt_f64(x: f64) -> String {
    x.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
