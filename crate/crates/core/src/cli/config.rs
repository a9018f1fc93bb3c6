//! The run configuration file and `--set section.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::baseline::ProbeConfig;
use crate::encoder::{EncoderConfig, PretrainConfig};
use crate::evalkit::{LabelMapping, SplitPolicy};
use crate::head::HeadConfig;
use crate::ingest::WindowingConfig;
use crate::pairing::PairingConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// A `windows.bin` file or a directory holding one (and `classes.toml`).
    pub windows: Option<PathBuf>,
    pub classes: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub split: SplitPolicy,
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub ingest: WindowingConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub pairing: PairingConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    #[serde(default)]
    pub head: HeadConfig,
    #[serde(default)]
    pub baseline: ProbeConfig,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Defaults everywhere, with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        let mut cfg: RunConfig = toml::from_str(&format!("seed = {seed}")).expect("defaults parse");
        cfg.propagate_seed();
        cfg
    }

    /// Parse TOML, apply overrides, and push the global seed into every section.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.propagate_seed();
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg =
            Self::from_toml_str(&text, overrides).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.windows, &mut cfg.data.classes, &mut cfg.eval.mapping].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.propagate_seed();
    }

    fn propagate_seed(&mut self) {
        self.encoder.seed = self.seed;
        self.pretrain.seed = self.seed;
        self.head.seed = self.seed;
        self.baseline.seed = self.seed;
    }

    /// Check every section and that referenced paths exist.
    pub fn validate(&self) -> Result<()> {
        self.ingest.validate()?;
        self.augment.validate()?;
        self.pairing.validate()?;
        self.encoder.validate()?;
        let head = HeadConfig { num_classes: self.head.num_classes.max(2), ..self.head.clone() };
        head.validate()?;
        if self.encoder.window_len != self.ingest.window_len() {
            return Err(Error::Config(format!(
                "encoder.window_len {} does not match ingest windows of {} samples",
                self.encoder.window_len,
                self.ingest.window_len()
            )));
        }
        for p in [&self.data.windows, &self.data.classes, &self.eval.mapping].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("referenced path {} does not exist", p.display())));
            }
        }
        if let Some(m) = &self.eval.mapping {
            LabelMapping::from_path(m)?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, else as a string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
    let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields one item");
    let mut cur = table;
    for k in parents {
        cur = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{spec}': '{k}' is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
