//! Component value files.
//!
//! A flat `NAME = value` text format, one entry per line, `#` comments.
//! Values accept the SI suffixes `p n u m k M` (and `µ` for micro).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

const CANONICAL: &str = include_str!("../config/centaur.conf");

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `NAME = value`")]
    Syntax { line: usize },
    #[error("line {line}: cannot parse value `{value}`")]
    Value { line: usize, value: String },
    #[error("line {line}: `{name}` defined twice")]
    Duplicate { line: usize, name: String },
    #[error("missing component `{0}`")]
    Missing(String),
    #[error("component `{name}` must be positive and finite, got {value}")]
    NonPositive { name: String, value: f64 },
    #[error("reading config: {0}")]
    Io(String),
}

/// Parse a number with an optional trailing SI multiplier.
pub fn parse_si(text: &str) -> Option<f64> {
    let text = text.trim();
    let (number, scale) = match text.chars().last()? {
        'p' => (&text[..text.len() - 1], 1e-12),
        'n' => (&text[..text.len() - 1], 1e-9),
        'u' => (&text[..text.len() - 1], 1e-6),
        'µ' => (&text[..text.len() - 'µ'.len_utf8()], 1e-6),
        'm' => (&text[..text.len() - 1], 1e-3),
        'k' => (&text[..text.len() - 1], 1e3),
        'M' => (&text[..text.len() - 1], 1e6),
        _ => (text, 1.0),
    };
    let value: f64 = number.trim().parse().ok()?;
    // "4.7k" should be exactly 4700, not 4.7 * 1000 = 4700.000000000001.
    let scaled = if scale >= 1.0 {
        value * scale
    } else {
        value / (1.0 / scale).round()
    };
    scaled.is_finite().then_some(scaled)
}

/// Named component values in SI base units.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentConfig {
    values: BTreeMap<String, f64>,
}

impl ComponentConfig {
    /// The schematic values shipped with the crate.
    pub fn canonical() -> Self {
        CANONICAL.parse().expect("bundled config is valid")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.as_ref().display())))?;
        text.parse()
    }

    /// Canonical values overridden by the entries of `path`.
    pub fn canonical_with_overrides(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let mut config = Self::canonical();
        for (name, value) in Self::from_file(path)?.values {
            config.values.insert(name, value);
        }
        Ok(config)
    }

    /// Look up a component, requiring a strictly positive finite value.
    pub fn get(&self, name: &str) -> Result<f64, ConfigError> {
        let value = *self
            .values
            .get(name)
            .ok_or_else(|| ConfigError::Missing(name.to_string()))?;
        if !(value.is_finite() && value > 0.0) {
            return Err(ConfigError::NonPositive {
                name: name.to_string(),
                value,
            });
        }
        Ok(value)
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), value);
    }

    pub fn remove(&mut self, name: &str) -> Option<f64> {
        self.values.remove(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl Default for ComponentConfig {
    fn default() -> Self {
        Self::canonical()
    }
}

impl FromStr for ComponentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (name, value) = content
                .split_once('=')
                .ok_or(ConfigError::Syntax { line })?;
            let name = name.trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(ConfigError::Syntax { line });
            }
            let parsed = parse_si(value).ok_or_else(|| ConfigError::Value {
                line,
                value: value.trim().to_string(),
            })?;
            if values.insert(name.to_string(), parsed).is_some() {
                return Err(ConfigError::Duplicate {
                    line,
                    name: name.to_string(),
                });
            }
        }
        Ok(Self { values })
    }
}

impl fmt::Display for ComponentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, value) in &self.values {
            writeln!(f, "{name} = {value:e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn si_suffixes() {
        assert_eq!(parse_si("4.7k"), Some(4700.0));
        assert_eq!(parse_si("1M"), Some(1e6));
        assert_eq!(parse_si("3.9n"), Some(3.9e-9));
        assert_eq!(parse_si("100p"), Some(100e-12));
        assert_eq!(parse_si("4.7u"), Some(4.7e-6));
        assert_eq!(parse_si("4.7µ"), Some(4.7e-6));
        assert_eq!(parse_si("25.85m"), Some(0.02585));
        assert_eq!(parse_si("560"), Some(560.0));
        assert_eq!(parse_si("1e3"), Some(1000.0));
        assert_eq!(parse_si("k"), None);
        assert_eq!(parse_si("abc"), None);
        assert_eq!(parse_si(""), None);
    }

    #[test]
    fn canonical_tone_values() {
        let c = ComponentConfig::canonical();
        assert_eq!(c.get("R21").unwrap(), 1800.0);
        assert_eq!(c.get("R22").unwrap(), 4700.0);
        assert_eq!(c.get("R23").unwrap(), 100e3);
        assert_eq!(c.get("R24").unwrap(), 560.0);
        assert_eq!(c.get("RV2").unwrap(), 10e3);
        assert_eq!(c.get("C14").unwrap(), 3.9e-9);
    }

    #[test]
    fn errors() {
        assert_eq!(
            "R1 4k".parse::<ComponentConfig>(),
            Err(ConfigError::Syntax { line: 1 })
        );
        assert_eq!(
            "# c\nR1 = 4x".parse::<ComponentConfig>(),
            Err(ConfigError::Value {
                line: 2,
                value: "4x".into()
            })
        );
        assert!(matches!(
            "R1 = 1\nR1 = 2".parse::<ComponentConfig>(),
            Err(ConfigError::Duplicate { line: 2, .. })
        ));
        let c: ComponentConfig = "R1 = -1".parse().unwrap();
        assert!(matches!(c.get("R1"), Err(ConfigError::NonPositive { .. })));
        assert_eq!(c.get("R9"), Err(ConfigError::Missing("R9".into())));
    }

    #[test]
    fn display_round_trips() {
        let c = ComponentConfig::canonical();
        let back: ComponentConfig = c.to_string().parse().unwrap();
        assert_eq!(c, back);
    }
}
