//! Optional TOML defaults. Command-line flags win over anything set here.
//!
//! ```toml
//! catalog = "catalog.json"
//! models = "models.json"
//! format = "json"
//! seed = 7
//! passes = ["unroll", "flatten", "split_llm", "split_tool"]
//! baseline = "H100::H100"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::io::{read_text, IoError};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub catalog: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub format: Option<String>,
    pub seed: Option<u64>,
    pub passes: Option<Vec<String>>,
    pub baseline: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, toml::de::Error> {
        toml::from_str(text)
    }

    /// Relative paths inside the file resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let mut c = Config::parse(&read_text(path)?).map_err(|source| ConfigError::Toml { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut c.catalog, &mut c.models].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let c = Config::parse("seed = 3\nformat = \"csv\"\n").unwrap();
        assert_eq!((c.seed, c.format.as_deref()), (Some(3), Some("csv")));
        assert!(Config::parse("sede = 3").is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = std::env::temp_dir().join(format!("agentplan-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let f = dir.join("c.toml");
        std::fs::write(&f, "catalog = \"cat.json\"\nmodels = \"/abs/m.json\"\n").unwrap();
        let c = Config::load(&f).unwrap();
        assert_eq!(c.catalog, Some(dir.join("cat.json")));
        assert_eq!(c.models, Some(PathBuf::from("/abs/m.json")));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
