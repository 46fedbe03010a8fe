//! Flat `key = value` files with `[section]` headers.
//!
//! Keys are addressed as `section.key`; keys before any header live in the
//! unnamed section and are addressed by bare name. `#` starts a comment line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    source: Option<PathBuf>,
    /// Section name to key/value pairs, insertion order of sections kept.
    sections: Vec<(String, BTreeMap<String, String>)>,
}

fn full_key(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_owned()
    } else {
        format!("{section}.{key}")
    }
}

impl Config {
    pub fn parse(text: &str, source: Option<&Path>) -> Result<Self> {
        let path = source.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("<config>"));
        let mut cfg = Config {
            source: source.map(Path::to_path_buf),
            sections: Vec::new(),
        };
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| Error::Parse {
                path: path.clone(),
                line: n + 1,
                message: message.to_owned(),
            };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err("unterminated section header"))?.trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(err("section names must be non-empty words"));
                }
                section = name.to_owned();
                cfg.section_mut(&section);
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(err("empty key"));
            }
            let prev = cfg.section_mut(&section).insert(k.to_owned(), v.trim().to_owned());
            if prev.is_some() {
                return Err(err(&format!("duplicate key `{}`", full_key(&section, k))));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, Some(path))
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    fn section_mut(&mut self, name: &str) -> &mut BTreeMap<String, String> {
        let idx = match self.sections.iter().position(|(s, _)| s == name) {
            Some(i) => i,
            None => {
                self.sections.push((name.to_owned(), BTreeMap::new()));
                self.sections.len() - 1
            }
        };
        &mut self.sections[idx].1
    }

    fn split_key(key: &str) -> (&str, &str) {
        key.rsplit_once('.').unwrap_or(("", key))
    }

    /// Applies one `section.key=value` override.
    pub fn set_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| Error::Parse {
            path: PathBuf::from("<override>"),
            line: 0,
            message: format!("expected KEY=VALUE, got `{assignment}`"),
        })?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let (section, k) = Self::split_key(key);
        self.section_mut(section).insert(k.to_owned(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        let (section, k) = Self::split_key(key);
        self.section(section).and_then(|m| m.get(k)).map(String::as_str)
    }

    pub fn section(&self, name: &str) -> Option<&BTreeMap<String, String>> {
        self.sections.iter().find(|(s, _)| s == name).map(|(_, m)| m)
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(s, _)| s.as_str())
    }

    /// Typed lookup; `Ok(None)` when absent.
    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| Error::Parse {
                path: self.source.clone().unwrap_or_else(|| PathBuf::from("<config>")),
                line: 0,
                message: format!("cannot parse `{key}` from `{raw}`"),
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parse_value(key)?.unwrap_or(default))
    }

    /// Renders back to the file format; parsing the output gives an equal
    /// set of sections and values.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let root = self.sections.iter().filter(|(s, _)| s.is_empty());
        let named = self.sections.iter().filter(|(s, _)| !s.is_empty());
        for (name, map) in root.chain(named) {
            if !name.is_empty() {
                if !out.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{name}]");
            }
            for (k, v) in map {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}
