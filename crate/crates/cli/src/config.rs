//! `key = value` config files with `[section]` headers, merged under
//! command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::error::CliError;

pub const KEYS: &[&str] = &[
    "command",
    "op",
    "fn",
    "cap",
    "domain",
    "cells",
    "ns",
    "mode",
    "eps",
    "p",
    "seed",
    "trials",
    "out",
    "strict",
    "allow-large-2d",
];

/// Where a setting came from, for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Flag(String),
    File { path: String, line: usize, column: usize },
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Flag(name) => write!(f, "--{name}"),
            Origin::File { path, line, column } => write!(f, "{path}:{line}:{column}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Setting {
    pub value: String,
    pub origin: Origin,
}

impl Setting {
    pub fn flag(name: &str, value: impl Into<String>) -> Self {
        Setting {
            value: value.into(),
            origin: Origin::Flag(name.to_string()),
        }
    }

    /// Diagnostic for a parse failure at 1-based `column` of the value.
    pub fn error_at(&self, column: usize, message: impl fmt::Display) -> CliError {
        let text = match &self.origin {
            Origin::Flag(name) => format!("--{name} `{}` column {column}: {message}", self.value),
            Origin::File { path, line, column: start } => {
                format!("{path}:{line}:{}: {message}", start + column.saturating_sub(1))
            }
        };
        CliError::Parse(text)
    }
}

pub type Settings = BTreeMap<String, Setting>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    pub global: Settings,
    pub sections: Vec<(String, Settings)>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("{}: cannot read config: {e}", path.display())))?;
        ConfigFile::parse(&path.display().to_string(), &text)
    }

    pub fn parse(path: &str, text: &str) -> Result<ConfigFile, CliError> {
        let mut cfg = ConfigFile::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let at = |column: usize, message: String| CliError::Parse(format!("{path}:{line}:{column}: {message}"));
            let content = raw.split_once('#').map_or(raw, |(c, _)| c);
            let indent = content.len() - content.trim_start().len();
            let trimmed = content.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| at(indent + 1, "unterminated section header".into()))?
                    .trim();
                if name.is_empty() || cfg.sections.iter().any(|(n, _)| n == name) {
                    return Err(at(indent + 2, format!("empty or duplicate section name `{name}`")));
                }
                cfg.sections.push((name.to_string(), Settings::new()));
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| at(indent + 1, "expected `key = value`".into()))?;
            let key_name = key.trim();
            if !KEYS.contains(&key_name) {
                return Err(at(indent + 1, format!("unknown key `{key_name}`")));
            }
            let value_start = key.len() + 1 + (value.len() - value.trim_start().len());
            let setting = Setting {
                value: value.trim().to_string(),
                origin: Origin::File {
                    path: path.to_string(),
                    line,
                    column: value_start + 1,
                },
            };
            let target = match cfg.sections.last_mut() {
                Some((_, s)) => s,
                None => &mut cfg.global,
            };
            if target.insert(key_name.to_string(), setting).is_some() {
                return Err(at(indent + 1, format!("duplicate key `{key_name}`")));
            }
        }
        Ok(cfg)
    }

    pub fn section(&self, name: &str) -> Option<&Settings> {
        self.sections.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }
}

/// Layers later maps over earlier ones.
pub fn merge(layers: &[&Settings]) -> Settings {
    let mut out = Settings::new();
    for layer in layers {
        for (k, v) in layer.iter() {
            out.insert(k.clone(), v.clone());
        }
    }
    out
}
