//! Unweighted mean of per-space head scores. Nothing here is trained.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hopfield::HopfieldHead;
use crate::scores::ScoreVector;
use crate::store::ClassRegistry;

pub const MANIFEST_FORMAT: &str = "ensemble/1";

#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePredictor {
    /// Sorted by space name so the mean is independent of insertion order.
    heads: Vec<HopfieldHead>,
    registry: ClassRegistry,
}

impl EnsemblePredictor {
    pub fn new(registry: ClassRegistry, mut heads: Vec<HopfieldHead>) -> Result<Self> {
        if heads.is_empty() {
            return Err(Error::Config("an ensemble needs at least one head".into()));
        }
        let checksum = registry.checksum();
        let mut spaces = BTreeSet::new();
        for head in &heads {
            if head.num_classes() != registry.len() {
                return Err(Error::Config(format!(
                    "head `{}` has {} classes, registry has {}",
                    head.space,
                    head.num_classes(),
                    registry.len()
                )));
            }
            if head.registry_checksum.as_deref().is_some_and(|c| c != checksum) {
                return Err(Error::Config(format!("head `{}` was trained on another registry", head.space)));
            }
            if !spaces.insert(head.space.clone()) {
                return Err(Error::Config(format!("duplicate head for space `{}`", head.space)));
            }
        }
        heads.sort_by(|a, b| a.space.cmp(&b.space));
        Ok(Self { heads, registry })
    }

    pub fn heads(&self) -> &[HopfieldHead] {
        &self.heads
    }

    pub fn registry(&self) -> &ClassRegistry {
        &self.registry
    }

    pub fn spaces(&self) -> impl Iterator<Item = &str> {
        self.heads.iter().map(|h| h.space.as_str())
    }

    /// `query` returns the crop's vector in a given space.
    pub fn predict_with<'a>(&self, mut query: impl FnMut(&str) -> Option<&'a [f64]>) -> Result<ScoreVector> {
        let mut total = vec![0.0; self.registry.len()];
        for head in &self.heads {
            let v = query(&head.space).ok_or_else(|| Error::UnknownSpace(head.space.clone()))?;
            let scores = head.predict(v)?;
            for (t, s) in total.iter_mut().zip(scores.as_slice()) {
                *t += s;
            }
        }
        let n = self.heads.len() as f64;
        total.iter_mut().for_each(|t| *t /= n);
        Ok(ScoreVector(total))
    }

    pub fn predict(&self, queries: &BTreeMap<String, Vec<f64>>) -> Result<ScoreVector> {
        self.predict_with(|space| queries.get(space).map(Vec::as_slice))
    }
}

pub fn ensemble_predict(ens: &EnsemblePredictor, queries: &BTreeMap<String, Vec<f64>>) -> Result<ScoreVector> {
    ens.predict(queries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub space: String,
    pub path: PathBuf,
}

/// Lists head files (relative to the manifest's directory) plus the registry checksum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format: String,
    pub registry_checksum: String,
    pub heads: Vec<ManifestEntry>,
}

impl EnsembleManifest {
    pub fn new(registry: &ClassRegistry, heads: Vec<ManifestEntry>) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            registry_checksum: registry.checksum(),
            heads,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        crate::fsutil::write_text(path, &serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Self = serde_json::from_str(&text)?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::Config(format!("unsupported manifest format `{}`", manifest.format)));
        }
        Ok(manifest)
    }

    /// Loads the listed heads, optionally restricted to `spaces`.
    pub fn load_predictor(
        &self,
        manifest_path: impl AsRef<Path>,
        registry: ClassRegistry,
        spaces: Option<&[String]>,
    ) -> Result<EnsemblePredictor> {
        if registry.checksum() != self.registry_checksum {
            return Err(Error::Config("manifest registry checksum does not match the store".into()));
        }
        let base = manifest_path.as_ref().parent().unwrap_or(Path::new("."));
        let mut heads = Vec::new();
        for entry in &self.heads {
            if spaces.is_some_and(|s| !s.contains(&entry.space)) {
                continue;
            }
            let head = HopfieldHead::load(base.join(&entry.path))?;
            if head.space != entry.space {
                return Err(Error::Config(format!(
                    "manifest lists `{}` but the head file is for `{}`",
                    entry.space, head.space
                )));
            }
            heads.push(head);
        }
        if let Some(wanted) = spaces {
            for s in wanted {
                if !heads.iter().any(|h| &h.space == s) {
                    return Err(Error::UnknownSpace(s.clone()));
                }
            }
        }
        EnsemblePredictor::new(registry, heads)
    }
}
