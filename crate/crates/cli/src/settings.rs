//! Optional `key = value` config file resolution: command-line flags win,
//! then the config file, then the built-in default.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use sc2t_core::{Error, Result};

#[derive(Debug, Default)]
pub struct Settings {
    map: HashMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Settings> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::Argument(format!(
                        "{}:{}: expected `key = value`",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Settings { map })
    }

    fn parse<T: FromStr>(&self, key: &str, raw: &str) -> Result<T> {
        raw.parse().map_err(|_| {
            Error::Argument(format!("config key {key}: cannot parse {raw:?}"))
        })
    }

    /// Flag value, else config value, else default.
    pub fn get<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.map.get(key) {
            Some(raw) => self.parse(key, raw),
            None => Ok(default),
        }
    }

    /// Flag value or config value; an error when neither is present.
    pub fn require<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.map.get(key) {
            Some(raw) => self.parse(key, raw),
            None => Err(Error::Argument(format!(
                "--{key} is required (set it on the command line or in the config file)"
            ))),
        }
    }

    /// Optional value from flag or config only.
    pub fn optional<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        if let Some(v) = flag {
            return Ok(Some(v));
        }
        match self.map.get(key) {
            Some(raw) => self.parse(key, raw).map(Some),
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn flags_beat_config_beats_default() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "epochs = 4  # comment\nseed=9").unwrap();
        let s = Settings::load(Some(f.path())).unwrap();
        assert_eq!(s.get("epochs", Some(7usize), 10).unwrap(), 7);
        assert_eq!(s.get("epochs", None::<usize>, 10).unwrap(), 4);
        assert_eq!(s.get("batch", None::<usize>, 128).unwrap(), 128);
        assert_eq!(s.require("seed", None::<u64>).unwrap(), 9);
        assert!(s.require::<u64>("missing", None).is_err());
    }

    #[test]
    fn malformed_config_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "just some words").unwrap();
        assert!(Settings::load(Some(f.path())).is_err());
    }
}
