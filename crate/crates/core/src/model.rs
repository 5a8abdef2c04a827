//! Versioned JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boosting::Ensemble;
use crate::config::BoostConfig;
use crate::error::{Error, Result};
use crate::fit::Method;
use crate::losses::LossSpec;

pub const FORMAT_VERSION: u32 = 1;

/// Provenance of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub seed: u64,
    pub config: BoostConfig,
    pub n_train: usize,
    pub n_val: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub method: Method,
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// Scale loss of the first stage, for the two-stage methods.
    pub rho0: Option<LossSpec>,
    /// Bounded loss of the second stage.
    pub rho1: Option<LossSpec>,
    pub ensemble: Ensemble,
    pub manifest: TrainManifest,
}

impl ModelFile {
    pub fn new(
        method: Method,
        feature_names: Vec<String>,
        target_name: String,
        ensemble: Ensemble,
        manifest: TrainManifest,
    ) -> Self {
        let (rho0, rho1) = match method {
            Method::RrBoost => (Some(manifest.config.rho0), Some(manifest.config.rho1)),
            Method::SBoost => (Some(manifest.config.rho0), None),
            _ => (None, None),
        };
        Self {
            format_version: FORMAT_VERSION,
            method,
            feature_names,
            target_name,
            rho0,
            rho1,
            ensemble,
            manifest,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Model("missing format_version".into()))?;
        if version > FORMAT_VERSION as u64 {
            return Err(Error::Model(format!(
                "model format version {version} is newer than supported version {FORMAT_VERSION}"
            )));
        }
        let model: ModelFile = serde_json::from_value(value).map_err(|e| Error::Model(e.to_string()))?;
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        let e = &self.ensemble;
        if e.stop_index > e.steps.len() || e.stage_boundary > e.steps.len() {
            return Err(Error::Model("stopping indices exceed the number of steps".into()));
        }
        if let Some(j) = e.max_feature() {
            if j >= self.feature_names.len() {
                return Err(Error::Model(format!(
                    "tree references feature {j} but only {} names are stored",
                    self.feature_names.len()
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::Step;
    use crate::tree::{Node, Tree};

    fn sample() -> ModelFile {
        let stump = Tree {
            root: Node::Split {
                feature: 1,
                threshold: 0.1 + 0.2,
                left: Box::new(Node::Leaf { value: -1.0 / 3.0 }),
                right: Box::new(Node::Leaf { value: 2.0f64.sqrt() }),
            },
            max_depth: 1,
            min_node: 7,
        };
        let mut e = Ensemble::from_init(Tree::constant(std::f64::consts::PI), 0.3);
        e.steps.push(Step { alpha: 1.0 / 7.0, tree: stump });
        e.stop_index = 1;
        e.stage_boundary = 1;
        e.sigma_hat = Some(1.2345678901234567);
        let manifest = TrainManifest {
            seed: 3,
            config: BoostConfig::default(),
            n_train: 10,
            n_val: 5,
        };
        ModelFile::new(Method::RrBoost, vec!["a".into(), "b".into()], "y".into(), e, manifest)
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = sample();
        let back = ModelFile::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        for x in [[0.0, 0.3], [0.0, 0.30000000000000004], [5.0, -2.0]] {
            assert_eq!(back.ensemble.predict_row(&x).to_bits(), m.ensemble.predict_row(&x).to_bits());
        }
    }

    #[test]
    fn newer_versions_rejected() {
        let mut m = sample();
        m.format_version = FORMAT_VERSION + 1;
        let err = ModelFile::from_json(&m.to_json().unwrap()).unwrap_err();
        assert!(err.to_string().contains("newer"));
    }

    #[test]
    fn inconsistent_files_rejected() {
        let mut m = sample();
        m.ensemble.stop_index = 4;
        assert!(ModelFile::from_json(&m.to_json().unwrap()).is_err());
        let mut m = sample();
        m.feature_names.pop();
        assert!(ModelFile::from_json(&m.to_json().unwrap()).is_err());
        assert!(ModelFile::from_json("{}").is_err());
    }
}
