//! Plain-text `key = value` configuration files and the precedence rule
//! flags > file > environment > built-in default.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::CliError;

/// Keys accepted in a configuration file, spelled like the long flags.
pub const KNOWN_KEYS: &[&str] = &[
    "data",
    "format",
    "label-column",
    "header",
    "normalize",
    "stumps",
    "neg-pos-ratio",
    "step1-cap",
    "c1",
    "c2",
    "grid",
    "inner-folds",
    "folds",
    "seed",
    "step0-table",
    "baseline",
    "tol",
    "max-epochs",
    "workers",
    "out",
];

pub const SEED_ENV: &str = "MBKL_SEED";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub path: Option<PathBuf>,
    pub values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<ConfigFile, CliError> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
        let mut cfg = ConfigFile::parse(&text)?;
        cfg.path = Some(path.to_path_buf());
        Ok(cfg)
    }

    /// Blank lines and `#` comments are ignored; keys may use `_` or `-`.
    pub fn parse(text: &str) -> Result<ConfigFile, CliError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            let key = k.trim().to_ascii_lowercase().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("config line {}: unknown key {key:?}", n + 1)));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(ConfigFile { path: None, values })
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config key {key}: {e}")))
            })
            .transpose()
    }

    /// The flag value if given, else the file's.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }
}

/// Seed precedence: flag, config file, `MBKL_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: &ConfigFile, env: Option<&str>) -> Result<u64, CliError> {
    if let Some(s) = file.pick(flag, "seed")? {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("{SEED_ENV}={v:?}: {e}"))),
        None => Ok(0),
    }
}

/// Comma-separated list of positive numbers.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            match t.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
                _ => Err(CliError::Usage(format!("grid entry {t:?} is not a positive number"))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_normalizes_keys() {
        let c = ConfigFile::parse("# comment\nseed = 5\nneg_pos_ratio=2.5 # inline\n\n").unwrap();
        assert_eq!(c.get::<u64>("seed").unwrap(), Some(5));
        assert_eq!(c.get::<f64>("neg-pos-ratio").unwrap(), Some(2.5));
        assert!(ConfigFile::parse("bogus = 1").is_err());
        assert!(ConfigFile::parse("seed").is_err());
        assert!(c.get::<u64>("neg-pos-ratio").is_err());
    }

    #[test]
    fn seed_precedence() {
        let file = ConfigFile::parse("seed = 5").unwrap();
        let empty = ConfigFile::default();
        assert_eq!(resolve_seed(Some(9), &file, Some("3")).unwrap(), 9);
        assert_eq!(resolve_seed(None, &file, Some("3")).unwrap(), 5);
        assert_eq!(resolve_seed(None, &empty, Some("3")).unwrap(), 3);
        assert_eq!(resolve_seed(None, &empty, None).unwrap(), 0);
        assert!(resolve_seed(None, &empty, Some("x")).is_err());
    }

    #[test]
    fn grid_lists() {
        assert_eq!(parse_grid("0.1, 10").unwrap(), vec![0.1, 10.0]);
        assert!(parse_grid("1,-2").is_err());
        assert!(parse_grid("").is_err());
    }
}
