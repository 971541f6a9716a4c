//! Flat `key = value` configuration with one `[section]` per subcommand.
//! Command-line flags override file values; file values override built-in
//! defaults. The default config path comes from `QMATCH_CONFIG`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qmatch::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(content: &str, source: &str) -> Result<ConfigFile> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (lineno, raw) in content.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::format(source, lineno + 1, "expected `key = value` or `[section]`")
            })?;
            sections
                .entry(current.clone())
                .or_default()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigFile { sections })
    }

    pub fn load(path: &Path) -> Result<ConfigFile> {
        let content = std::fs::read_to_string(path)?;
        ConfigFile::parse(&content, &path.display().to_string())
    }

    /// Load `--config`, falling back to `QMATCH_CONFIG`, else empty.
    pub fn resolve(explicit: Option<&Path>) -> Result<ConfigFile> {
        if let Some(p) = explicit {
            return ConfigFile::load(p);
        }
        match std::env::var_os("QMATCH_CONFIG") {
            Some(p) => ConfigFile::load(Path::new(&p)),
            None => Ok(ConfigFile::default()),
        }
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|s| s.as_str())
    }

    /// CLI value > config value > default.
    pub fn get<T: FromStr + Clone>(
        &self,
        cli: Option<T>,
        section: &str,
        key: &str,
        default: T,
    ) -> Result<T> {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.raw(section, key) {
            Some(raw) => raw.parse::<T>().map_err(|_| {
                Error::Config(format!("bad value {raw:?} for {key} in [{section}]"))
            }),
            None => Ok(default),
        }
    }

    /// Optional path: CLI value > config value > none.
    pub fn get_path(&self, cli: Option<PathBuf>, section: &str, key: &str) -> Option<PathBuf> {
        cli.or_else(|| self.raw(section, key).map(PathBuf::from))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_overrides() {
        let cfg = ConfigFile::parse(
            "# comment\n[train-encoder]\ndim = 16\nlr = 0.05\n[rank]\nk = 3\n",
            "test",
        )
        .unwrap();
        assert_eq!(cfg.get(None, "train-encoder", "dim", 300usize).unwrap(), 16);
        assert_eq!(cfg.get(Some(8usize), "train-encoder", "dim", 300).unwrap(), 8);
        assert_eq!(cfg.get(None, "rank", "k", 5usize).unwrap(), 3);
        assert_eq!(cfg.get(None, "rank", "missing", 5usize).unwrap(), 5);
    }

    #[test]
    fn rejects_bare_lines() {
        assert!(ConfigFile::parse("not a kv line\n", "test").is_err());
    }

    #[test]
    fn bad_typed_value_is_a_config_error() {
        let cfg = ConfigFile::parse("[rank]\nk = banana\n", "test").unwrap();
        assert!(matches!(
            cfg.get(None, "rank", "k", 5usize),
            Err(Error::Config(_))
        ));
    }
}
