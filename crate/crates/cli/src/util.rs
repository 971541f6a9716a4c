//! Shared plumbing for the subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use qmatch::embeddings::{load_text_embeddings, EmbeddingTable, OovPolicy};
use qmatch::{Error, Result};
use serde::Serialize;

/// A missing input file is a usage error naming the flag.
pub fn require_file(path: &Path, flag: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "--{flag}: file {} does not exist",
            path.display()
        )));
    }
    Ok(())
}

/// Output directory handle; every run echoes its effective configuration.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(path: &Path) -> Result<OutDir> {
        std::fs::create_dir_all(path)?;
        Ok(OutDir {
            root: path.to_path_buf(),
        })
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// `config.echo.json`: the fully resolved configuration of this run.
    pub fn echo_config<T: Serialize>(&self, effective: &T) -> Result<()> {
        self.write_json("config.echo.json", effective)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        std::fs::write(self.join(name), bytes)?;
        Ok(())
    }

    pub fn write_text(&self, name: &str, content: &str) -> Result<()> {
        std::fs::write(self.join(name), content)?;
        Ok(())
    }

    /// JSON-lines writer (one serialized value per line).
    pub fn write_jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let mut out = String::new();
        for row in rows {
            out.push_str(&serde_json::to_string(row)?);
            out.push('\n');
        }
        std::fs::write(self.join(name), out)?;
        Ok(())
    }
}

pub fn parse_oov(s: &str) -> Result<OovPolicy> {
    match s {
        "zero" => Ok(OovPolicy::Zero),
        "learned-unk" => Ok(OovPolicy::LearnedUnk),
        other => Err(Error::Config(format!(
            "--oov must be zero or learned-unk, got {other:?}"
        ))),
    }
}

pub fn load_table(path: &Path, flag: &str, oov: OovPolicy) -> Result<Arc<EmbeddingTable>> {
    require_file(path, flag)?;
    Ok(Arc::new(load_text_embeddings(path, oov)?))
}
