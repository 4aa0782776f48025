//! Experiment files: an `ExperimentConfig` in TOML plus an optional
//! `[sweep]` table describing the grid to run.

use std::path::Path;

use anyhow::{Context, Result};
use geossl::training::ExperimentConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub name: Option<String>,
    pub axis: Option<String>,
    #[serde(default)]
    pub values: Vec<toml::Value>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Extra overrides applied to every cell.
    #[serde(default)]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentFile {
    /// Config part, re-serialized without the `[sweep]` table.
    pub config_text: Option<String>,
    pub sweep: Option<SweepSpec>,
}

impl ExperimentFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| geossl::Error::Config(format!("config parse: {e}")))?;
        let sweep = match table.remove("sweep") {
            Some(v) => Some(v.try_into::<SweepSpec>().map_err(|e| geossl::Error::Config(format!("[sweep]: {e}")))?),
            None => None,
        };
        Ok(Self { config_text: Some(toml::to_string(&table)?), sweep })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::read(p),
            None => Ok(Self::default()),
        }
    }

    pub fn resolve(&self, overrides: &[String]) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig::resolve(self.config_text.as_deref(), overrides)?)
    }
}

/// Renders a TOML value the way it is written in an override, without
/// quotes around strings.
pub fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses a comma-separated `--values` list into TOML literals.
pub fn parse_values(list: &str) -> Result<Vec<toml::Value>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| Ok(geossl::training::parse_override(&format!("v={s}"))?.1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_table_is_split_off() {
        let f = ExperimentFile::parse("method = \"byol\"\n[sweep]\naxis = \"module\"\nvalues = [\"rotation\", \"shear\"]\nseeds = [0, 1]\n").unwrap();
        let s = f.sweep.clone().unwrap();
        assert_eq!(s.axis.as_deref(), Some("module"));
        assert_eq!(s.values.len(), 2);
        let cfg = f.resolve(&[]).unwrap();
        assert_eq!(cfg.method, geossl::training::Method::Byol);
    }

    #[test]
    fn values() {
        let v = parse_values("rotation, 0.2,3,true").unwrap();
        assert_eq!(v.iter().map(value_label).collect::<Vec<_>>(), ["rotation", "0.2", "3", "true"]);
    }
}
