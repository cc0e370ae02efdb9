//! Flat key = value configuration files. Flags win over file values; file
//! values win over defaults.

use std::collections::BTreeMap;
use std::path::Path;

use ssc_core::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path)?;
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    i + 1
                )));
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("bad value for {key}: {raw:?}"))),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// Flag wins, then the file value, then the default.
pub fn resolve<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Flag wins, then the file value; may stay unset.
pub fn resolve_opt<T: Clone>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    #[test]
    fn parses_and_types_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# comment\nknn = 25\nsigma = 0.2\nsystem = ssc-pic\ntemporal = true").unwrap();
        let cfg = ConfigFile::load(&path).unwrap();
        assert_eq!(cfg.get::<usize>("knn").unwrap(), Some(25));
        assert_eq!(cfg.get::<f64>("sigma").unwrap(), Some(0.2));
        assert_eq!(cfg.get_str("system"), Some("ssc-pic"));
        assert_eq!(cfg.get::<bool>("temporal").unwrap(), Some(true));
        assert_eq!(cfg.get::<usize>("missing").unwrap(), None);
        assert!(cfg.get::<usize>("sigma").is_err());
    }

    #[test]
    fn flags_beat_file_values() {
        assert_eq!(resolve(Some(1), Some(2), 3), 1);
        assert_eq!(resolve(None, Some(2), 3), 2);
        assert_eq!(resolve::<usize>(None, None, 3), 3);
    }
}
