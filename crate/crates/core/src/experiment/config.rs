//! Layered `key=value` settings: config file, then `RPOLAB_*` environment
//! variables, then explicit command-line flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Result};

pub const ENV_PREFIX: &str = "RPOLAB_";

/// Keys are compared in flag form: lowercase with `-` separators.
fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

/// Parses flat `key=value` text. Blank lines and `#` comments are skipped.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                message: format!("expected key=value, got {line:?}"),
            });
        };
        let key = normalize_key(key);
        if key.is_empty() {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                message: "empty key".into(),
            });
        }
        out.insert(key, value.trim().to_owned());
    }
    Ok(out)
}

pub fn parse_config_file(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, path)
}

/// `RPOLAB_TOTAL_TIMESTEPS=5` becomes `total-timesteps = 5`.
pub fn env_overrides<I, K, V>(vars: I) -> BTreeMap<String, String>
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    vars.into_iter()
        .filter_map(|(k, v)| {
            let key = k.as_ref().strip_prefix(ENV_PREFIX)?;
            Some((normalize_key(key), v.as_ref().trim().to_owned()))
        })
        .collect()
}

/// Merged settings; later layers win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layered {
    values: BTreeMap<String, String>,
}

impl Layered {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn layer(mut self, values: BTreeMap<String, String>) -> Self {
        self.values.extend(values);
        self
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(normalize_key(key), value.into());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(&normalize_key(key)).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Usage(format!("invalid value {v:?} for {key}: {e}")))
            })
            .transpose()
    }

    /// Keys not in `known`, for rejecting typos.
    pub fn unknown_keys<'a>(&'a self, known: &'a [&str]) -> impl Iterator<Item = &'a str> + 'a {
        self.values.keys().map(String::as_str).filter(|k| !known.contains(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_normalizes_keys() {
        let m = parse_config_str("# run\nenv = pendulum\n\nTOTAL_TIMESTEPS=4096\n", Path::new("c.cfg")).unwrap();
        assert_eq!(m["env"], "pendulum");
        assert_eq!(m["total-timesteps"], "4096");
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = parse_config_str("env=pendulum\noops\n", Path::new("c.cfg")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(err.to_string().starts_with("c.cfg:2:"));
    }

    #[test]
    fn precedence_file_then_env_then_flags() {
        let file = parse_config_str("alpha=0.1\nseeds=1,2\nenv=cartpole\n", Path::new("f")).unwrap();
        let env = env_overrides([("RPOLAB_ALPHA", "0.7"), ("RPOLAB_ENV", "pointmass"), ("HOME", "/root")]);
        let mut cfg = Layered::new().layer(file).layer(env);
        cfg.set("env", "pendulum");
        assert_eq!(cfg.get::<f64>("alpha").unwrap(), Some(0.7));
        assert_eq!(cfg.raw("seeds"), Some("1,2"));
        assert_eq!(cfg.raw("env"), Some("pendulum"));
        assert_eq!(cfg.raw("home"), None);
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let mut cfg = Layered::new();
        cfg.set("alpha", "half");
        assert!(matches!(cfg.get::<f64>("alpha"), Err(Error::Usage(_))));
        assert_eq!(cfg.get::<f64>("ent-coef").unwrap(), None);
        assert_eq!(cfg.unknown_keys(&["env"]).collect::<Vec<_>>(), vec!["alpha"]);
    }
}
