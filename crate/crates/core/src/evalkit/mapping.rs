//! Translating one dataset's activity names onto another's classes.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PAMAP2_TO_CAPTURE24: &str = include_str!("../../mappings/pamap2_to_capture24.toml");
pub const PILOT_TO_CAPTURE24: &str = include_str!("../../mappings/pilot_to_capture24.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UnmappedPolicy {
    #[default]
    Drop,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TargetSources {
    #[serde(default)]
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MappingFile {
    target_classes: Vec<String>,
    #[serde(default)]
    unmapped_policy: UnmappedPolicy,
    #[serde(default)]
    target: IndexMap<String, TargetSources>,
}

/// Validated source-name → target-class mapping.
///
/// A name that is itself a target class maps to that class, so labels
/// already in the target vocabulary pass through.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMapping {
    target_classes: Vec<String>,
    policy: UnmappedPolicy,
    target: IndexMap<String, TargetSources>,
    lookup: HashMap<String, usize>,
}

/// Output of [`apply_mapping`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MappedLabels {
    /// Target class index, or `None` when dropped.
    pub labels: Vec<Option<usize>>,
    pub dropped: usize,
    pub dropped_by_label: BTreeMap<String, usize>,
}

impl LabelMapping {
    pub fn new(target_classes: Vec<String>, target: IndexMap<String, TargetSources>, policy: UnmappedPolicy) -> Result<Self> {
        let mut lookup = HashMap::new();
        for (i, c) in target_classes.iter().enumerate() {
            if lookup.insert(c.clone(), i).is_some() {
                return Err(Error::Config(format!("target class '{c}' listed twice")));
            }
        }
        let mut sources: HashMap<String, usize> = HashMap::new();
        for (name, entry) in &target {
            let Some(&idx) = lookup.get(name) else {
                return Err(Error::Config(format!("mapping target '{name}' is not in target_classes")));
            };
            for s in &entry.sources {
                if let Some(prev) = sources.insert(s.clone(), idx) {
                    if prev != idx {
                        return Err(Error::Config(format!(
                            "source '{s}' maps to both '{}' and '{name}'",
                            target_classes[prev]
                        )));
                    }
                }
            }
        }
        lookup.extend(sources);
        Ok(LabelMapping {
            target_classes,
            policy,
            target,
            lookup,
        })
    }

    pub fn identity(classes: &[String]) -> Result<Self> {
        Self::new(classes.to_vec(), IndexMap::new(), UnmappedPolicy::Drop)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let f: MappingFile = toml::from_str(text).map_err(|e| Error::Config(format!("bad mapping: {e}")))?;
        Self::new(f.target_classes, f.target, f.unmapped_policy)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let f: MappingFile = serde_json::from_str(text).map_err(|e| Error::Config(format!("bad mapping: {e}")))?;
        Self::new(f.target_classes, f.target, f.unmapped_policy)
    }

    /// TOML, or JSON when the extension is `.json`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn pamap2_to_capture24() -> Self {
        Self::from_toml_str(PAMAP2_TO_CAPTURE24).expect("shipped mapping is valid")
    }

    pub fn pilot_to_capture24() -> Self {
        Self::from_toml_str(PILOT_TO_CAPTURE24).expect("shipped mapping is valid")
    }

    pub fn target_classes(&self) -> &[String] {
        &self.target_classes
    }

    pub fn policy(&self) -> UnmappedPolicy {
        self.policy
    }

    pub fn sources_of(&self, target: &str) -> &[String] {
        self.target.get(target).map_or(&[], |t| &t.sources)
    }

    /// Target classes that at least one declared source feeds.
    pub fn coverage(&self) -> Vec<String> {
        if self.target.is_empty() {
            return self.target_classes.clone();
        }
        self.target_classes
            .iter()
            .filter(|c| !self.sources_of(c).is_empty())
            .cloned()
            .collect()
    }

    pub fn map_name(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn to_toml(&self) -> String {
        let f = MappingFile {
            target_classes: self.target_classes.clone(),
            unmapped_policy: self.policy,
            target: self.target.clone(),
        };
        toml::to_string(&f).expect("mapping serializes")
    }
}

pub fn apply_mapping<S: AsRef<str>>(labels: &[S], m: &LabelMapping) -> Result<MappedLabels> {
    let mut out = MappedLabels::default();
    for l in labels {
        let l = l.as_ref();
        match m.map_name(l) {
            Some(i) => out.labels.push(Some(i)),
            None if m.policy == UnmappedPolicy::Error => {
                return Err(Error::Data(format!("label '{l}' has no mapping")));
            }
            None => {
                out.labels.push(None);
                out.dropped += 1;
                *out.dropped_by_label.entry(l.to_string()).or_default() += 1;
            }
        }
    }
    if out.dropped > 0 {
        log::info!("dropped {} unmapped labels", out.dropped);
    }
    Ok(out)
}
