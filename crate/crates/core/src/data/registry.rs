use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::{Error, Result};

/// Environment variable that overrides the directory holding dataset files.
pub const DATA_DIR_ENV: &str = "HEDGEFOREST_DATA_DIR";

const REGISTRY_FORMAT_VERSION: u32 = 1;
const PMLB_REGISTRY: &str = include_str!("../../data/pmlb_registry.json");

/// Dataset name to file (and optional download URL) mapping, with the
/// expected shape of each file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registry {
    pub format_version: u32,
    pub datasets: Vec<RegistryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryEntry {
    pub name: String,
    pub n_total: usize,
    /// Number of feature columns (excluding the target).
    pub d: usize,
    /// File name relative to the data directory, or an absolute path.
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default = "default_target", skip_serializing_if = "is_default_target")]
    pub target_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

fn default_target() -> String {
    super::DEFAULT_TARGET_COLUMN.to_string()
}

fn is_default_target(s: &str) -> bool {
    s == super::DEFAULT_TARGET_COLUMN
}

impl Registry {
    pub fn parse(text: &str) -> Result<Self> {
        let reg: Registry =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("registry: {e}")))?;
        if reg.format_version != REGISTRY_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported registry format_version {} (expected {REGISTRY_FORMAT_VERSION})",
                reg.format_version
            )));
        }
        let mut names: Vec<&str> = reg.datasets.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Format(format!("duplicate registry entry `{}`", w[0])));
        }
        for e in &reg.datasets {
            if e.name.is_empty() || e.file.is_empty() {
                return Err(Error::Format("registry entries need a name and a file".into()));
            }
        }
        Ok(reg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The fourteen PMLB regression datasets with their published shapes.
    pub fn pmlb() -> Self {
        Self::parse(PMLB_REGISTRY).expect("bundled registry is valid")
    }

    pub fn get(&self, name: &str) -> Option<&RegistryEntry> {
        self.datasets.iter().find(|e| e.name == name)
    }
}

impl RegistryEntry {
    pub fn local_path(&self, data_dir: &Path) -> PathBuf {
        let file = Path::new(&self.file);
        if file.is_absolute() {
            file.to_path_buf()
        } else {
            data_dir.join(file)
        }
    }

    /// Checks the loaded dataset against the expected shape.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        if dataset.n_total() != self.n_total || dataset.n_features() != self.d {
            return Err(Error::ShapeMismatch {
                name: self.name.clone(),
                expected_rows: self.n_total,
                expected_cols: self.d,
                found_rows: dataset.n_total(),
                found_cols: dataset.n_features(),
            });
        }
        Ok(())
    }

    /// Loads the local file and validates its shape.
    pub fn load(&self, data_dir: &Path) -> Result<Dataset> {
        let mut ds = super::load_tsv(self.local_path(data_dir), &self.target_column)?;
        ds.name = self.name.clone();
        self.validate(&ds)?;
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_registry_has_fourteen_datasets() {
        let reg = Registry::pmlb();
        assert_eq!(reg.datasets.len(), 14);
        let shape = |n: &str| {
            let e = reg.get(n).unwrap();
            (e.n_total, e.d)
        };
        assert_eq!(shape("197_cpu_act"), (8192, 21));
        assert_eq!(shape("564_fried"), (40768, 10));
        assert_eq!(shape("201_pol"), (15000, 48));
        assert!(reg.datasets.iter().all(|e| e.n_total >= 6000));
    }

    #[test]
    fn rejects_unknown_version_and_duplicates() {
        assert!(Registry::parse(r#"{"format_version":2,"datasets":[]}"#).is_err());
        let dup = r#"{"format_version":1,"datasets":[
            {"name":"a","n_total":2,"d":1,"file":"a.tsv"},
            {"name":"a","n_total":2,"d":1,"file":"b.tsv"}]}"#;
        assert!(Registry::parse(dup).is_err());
        assert!(Registry::parse("not json").is_err());
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let entry = RegistryEntry {
            name: "201_pol".into(),
            n_total: 15000,
            d: 48,
            file: "201_pol.tsv".into(),
            url: None,
            target_column: "target".into(),
            sha256: None,
        };
        let ds = super::super::parse_tsv("a\ttarget\n1\t2\n3\t4\n".as_bytes(), "target", "x").unwrap();
        let msg = entry.validate(&ds).unwrap_err().to_string();
        assert!(msg.contains("15000 x 48") && msg.contains("2 x 1"), "{msg}");
    }
}
