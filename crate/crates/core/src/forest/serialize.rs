//! Versioned JSON layout for fitted forests:
//!
//! ```text
//! { "format_version": 1, "n_features": d, "n_train": n, "config": {...},
//!   "trees": [ { "nodes": [ {"kind":"split","feature":..,"threshold":..,"left":..,"right":..}
//!                          | {"kind":"leaf","value":..}, ... ],
//!                "in_bag_counts": [..n entries..] }, ... ] }
//! ```

use serde::{Deserialize, Serialize};

use super::{FittedForest, ForestConfig, Node, RegressionTree};
use crate::{Error, Result};

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestFile {
    format_version: u32,
    n_features: usize,
    n_train: usize,
    config: ForestConfig,
    trees: Vec<RegressionTree>,
}

impl FittedForest {
    pub fn to_json(&self) -> String {
        let file = ForestFile {
            format_version: FOREST_FORMAT_VERSION,
            n_features: self.n_features,
            n_train: self.n_train,
            config: self.config.clone(),
            trees: self.trees.clone(),
        };
        serde_json::to_string(&file).expect("forest serializes")
    }

    /// Parses and structurally validates a serialized forest, so that
    /// prediction on the result cannot index out of bounds or loop.
    pub fn from_json(text: &[u8]) -> Result<Self> {
        let file: ForestFile =
            serde_json::from_slice(text).map_err(|e| Error::Format(format!("forest json: {e}")))?;
        if file.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported forest format_version {}",
                file.format_version
            )));
        }
        if file.n_features == 0 {
            return Err(Error::Format("n_features must be positive".into()));
        }
        if file.trees.is_empty() || file.trees.len() != file.config.num_trees {
            return Err(Error::Format(format!(
                "expected {} trees, found {}",
                file.config.num_trees,
                file.trees.len()
            )));
        }
        for (j, t) in file.trees.iter().enumerate() {
            validate_tree(t, file.n_features, file.n_train)
                .map_err(|m| Error::Format(format!("tree {j}: {m}")))?;
        }
        Ok(FittedForest {
            trees: file.trees,
            config: file.config,
            n_features: file.n_features,
            n_train: file.n_train,
        })
    }
}

fn validate_tree(t: &RegressionTree, d: usize, n_train: usize) -> std::result::Result<(), String> {
    if t.nodes.is_empty() {
        return Err("no nodes".into());
    }
    if t.in_bag_counts.len() != n_train {
        return Err(format!("in_bag_counts has {} entries, expected {n_train}", t.in_bag_counts.len()));
    }
    let len = t.nodes.len();
    let mut referenced = vec![false; len];
    for (k, node) in t.nodes.iter().enumerate() {
        match *node {
            Node::Split { feature, threshold, left, right } => {
                if feature >= d {
                    return Err(format!("node {k}: feature {feature} out of range"));
                }
                if threshold.is_nan() {
                    return Err(format!("node {k}: NaN threshold"));
                }
                for child in [left, right] {
                    if child <= k || child >= len {
                        return Err(format!("node {k}: invalid child {child}"));
                    }
                    if std::mem::replace(&mut referenced[child], true) {
                        return Err(format!("node {child} has two parents"));
                    }
                }
            }
            Node::Leaf { value } => {
                if !value.is_finite() {
                    return Err(format!("node {k}: non-finite leaf value"));
                }
            }
        }
    }
    if referenced[0] || referenced[1..].iter().any(|r| !r) {
        return Err("nodes do not form a single tree".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_friedman;
    use crate::forest::fit_forest;

    #[test]
    fn json_round_trip() {
        let ds = generate_friedman(60, 1.0, 3).unwrap();
        let f = fit_forest(&ds.features, &ds.target, &ForestConfig { num_trees: 3, seed: 5, ..Default::default() }).unwrap();
        let back = FittedForest::from_json(f.to_json().as_bytes()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_malformed_trees() {
        let leaf = r#"{"kind":"leaf","value":1.0}"#;
        let make = |nodes: &str, counts: &str| {
            format!(
                r#"{{"format_version":1,"n_features":2,"n_train":2,
                "config":{{"num_trees":1}},
                "trees":[{{"nodes":[{nodes}],"in_bag_counts":{counts}}}]}}"#
            )
        };
        assert!(FittedForest::from_json(make(leaf, "[1,1]").as_bytes()).is_ok());
        // wrong in-bag length
        assert!(FittedForest::from_json(make(leaf, "[1]").as_bytes()).is_err());
        // self loop
        let cyc = r#"{"kind":"split","feature":0,"threshold":0.5,"left":0,"right":1},{"kind":"leaf","value":1.0}"#;
        assert!(FittedForest::from_json(make(cyc, "[1,1]").as_bytes()).is_err());
        // feature out of range
        let bad = format!(r#"{{"kind":"split","feature":2,"threshold":0.5,"left":1,"right":2}},{leaf},{leaf}"#);
        assert!(FittedForest::from_json(make(&bad, "[1,1]").as_bytes()).is_err());
        // orphan node
        let orphan = format!("{leaf},{leaf}");
        assert!(FittedForest::from_json(make(&orphan, "[1,1]").as_bytes()).is_err());
        // shared child
        let shared = format!(r#"{{"kind":"split","feature":0,"threshold":0.5,"left":1,"right":1}},{leaf}"#);
        assert!(FittedForest::from_json(make(&shared, "[1,1]").as_bytes()).is_err());
        assert!(FittedForest::from_json(b"{}").is_err());
    }
}
