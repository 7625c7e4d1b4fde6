use std::fmt::{self, Display};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Ordered `key=value` lines. Setting an existing key replaces its value in
/// place.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics if the key contains `=` or a line break, or the value a line
    /// break.
    pub fn set(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        let key = key.into();
        let value = value.to_string();
        assert!(
            !key.contains(['=', '\n', '\r']) && !value.contains(['\n', '\r']),
            "invalid report entry {key:?}"
        );
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key, value)),
        }
        self
    }

    /// Adds every `(key, value)` under `prefix.`.
    pub fn extend_prefixed<K: Display, V: Display>(&mut self, prefix: &str, pairs: impl IntoIterator<Item = (K, V)>) {
        for (k, v) in pairs {
            self.set(format!("{prefix}.{k}"), v);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut report = Report::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: "report".into(),
                line: i + 1,
                message: format!("expected key=value, found {line:?}"),
            })?;
            report.set(k, v);
        }
        Ok(report)
    }
}

impl Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

pub fn emit_report(report: &Report, path: &Path) -> Result<()> {
    fs::write(path, report.to_string()).map_err(|e| Error::io(path, e))
}
