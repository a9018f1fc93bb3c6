//! Window caches on disk and the class-name table next to them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::ingest::{cache, Window};
use crate::{Error, Result};

pub const WINDOWS_FILE: &str = "windows.bin";
pub const CLASSES_FILE: &str = "classes.toml";

/// Class ids (as stored on windows) and their names, in id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    ids: Vec<i32>,
    names: Vec<String>,
}

impl ClassTable {
    pub fn new(pairs: impl IntoIterator<Item = (i32, String)>) -> Result<Self> {
        let map: BTreeMap<i32, String> = pairs.into_iter().collect();
        let mut seen = std::collections::HashSet::new();
        for n in map.values() {
            if !seen.insert(n) {
                return Err(Error::Config(format!("class name '{n}' used twice")));
            }
        }
        Ok(ClassTable {
            ids: map.keys().copied().collect(),
            names: map.into_values().collect(),
        })
    }

    /// Numeric names for every label seen in `windows`.
    pub fn from_windows(windows: &[Window]) -> Result<Self> {
        let ids: std::collections::BTreeSet<i32> = windows.iter().filter_map(|w| w.label).collect();
        Self::new(ids.into_iter().map(|i| (i, i.to_string())))
    }

    /// `"<id>" = "<name>"` lines.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("bad class table: {e}")))?;
        let mut pairs = Vec::new();
        for (k, v) in table {
            let id: i32 = k.trim().parse().map_err(|_| Error::Config(format!("class id '{k}' is not an integer")))?;
            let name = v
                .as_str()
                .ok_or_else(|| Error::Config(format!("class {id}: name must be a string")))?;
            pairs.push((id, name.to_string()));
        }
        Self::new(pairs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        self.ids
            .iter()
            .zip(&self.names)
            .map(|(id, n)| format!("\"{id}\" = {}\n", toml::Value::String(n.clone())))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, id: i32) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn name_of(&self, id: i32) -> Option<&str> {
        self.index_of(id).map(|i| self.names[i].as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub windows: Vec<Window>,
    pub classes: Option<ClassTable>,
}

impl Dataset {
    pub fn classes_or_numeric(&self) -> Result<ClassTable> {
        match &self.classes {
            Some(c) => Ok(c.clone()),
            None => ClassTable::from_windows(&self.windows),
        }
    }
}

fn resolve_paths(data: &Path) -> (PathBuf, PathBuf) {
    if data.is_dir() {
        (data.join(WINDOWS_FILE), data.join(CLASSES_FILE))
    } else {
        (data.to_path_buf(), data.with_file_name(CLASSES_FILE))
    }
}

/// Load a window cache; `data` is the file or its directory.
pub fn load_dataset(data: &Path, classes: Option<&Path>) -> Result<Dataset> {
    let (windows_path, default_classes) = resolve_paths(data);
    if !windows_path.exists() {
        return Err(Error::io(
            &windows_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "window cache not found"),
        ));
    }
    let windows = cache::load(&windows_path)?;
    let classes = match classes {
        Some(p) => Some(ClassTable::load(p)?),
        None if default_classes.exists() => Some(ClassTable::load(&default_classes)?),
        None => None,
    };
    if let Some(c) = &classes {
        if let Some(w) = windows.iter().find(|w| w.label.is_some_and(|l| c.index_of(l).is_none())) {
            return Err(Error::Data(format!(
                "window label {} is missing from the class table",
                w.label.expect("checked")
            )));
        }
    }
    Ok(Dataset { windows, classes })
}

pub fn save_dataset(dir: &Path, windows: &[Window], classes: &ClassTable) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    cache::save(&dir.join(WINDOWS_FILE), windows)?;
    classes.save(&dir.join(CLASSES_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_table_round_trip_sorts_numerically() {
        let t = ClassTable::new([(10, "ten".to_string()), (2, "two".into()), (-1, "neg \"q\"".into())]).unwrap();
        assert_eq!(t.names(), &["neg \"q\"", "two", "ten"]);
        assert_eq!(ClassTable::from_toml_str(&t.to_toml()).unwrap(), t);
        assert_eq!(t.index_of(10), Some(2));
        assert_eq!(t.index_of(3), None);
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(ClassTable::new([(1, "a".to_string()), (2, "a".into())]).is_err());
    }
}
