//! Deterministic Gaussian-cluster embeddings that stand in for foundation
//! model outputs.
//!
//! Each space draws its own class centers; listed class pairs can be pulled
//! toward their midpoint in one space only, which makes those classes
//! confusable there while other spaces still separate them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{purpose, StreamRng};
use crate::store::{ClassRegistry, Complexity, EmbeddingRecord, EmbeddingStore, Split};

/// Crops per synthetic image id.
const CROPS_PER_IMAGE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub num_classes: usize,
    pub dim: usize,
    pub spaces: Vec<String>,
    pub samples_per_class_per_split: BTreeMap<Split, usize>,
    pub cluster_sigma: f64,
    pub center_scale: f64,
    #[serde(default)]
    pub confusion_pairs: BTreeMap<String, Vec<(usize, usize)>>,
    #[serde(default)]
    pub confusion_blend: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_classes: 10,
            dim: 32,
            spaces: vec!["space_a".into(), "space_b".into(), "space_c".into()],
            samples_per_class_per_split: BTreeMap::from([
                (Split::Representative, 5),
                (Split::Train, 40),
                (Split::Validation, 20),
            ]),
            cluster_sigma: 0.3,
            center_scale: 1.0,
            confusion_pairs: BTreeMap::new(),
            confusion_blend: 0.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_classes == 0 || self.dim == 0 {
            return bad("num_classes and dim must be positive".into());
        }
        if self.spaces.is_empty() {
            return bad("at least one space is required".into());
        }
        let distinct: BTreeSet<&String> = self.spaces.iter().collect();
        if distinct.len() != self.spaces.len() {
            return bad("space names must be distinct".into());
        }
        if self.samples_per_class_per_split.is_empty()
            || self.samples_per_class_per_split.values().any(|&n| n == 0)
        {
            return bad("samples_per_class_per_split entries must be positive".into());
        }
        if !(self.cluster_sigma > 0.0 && self.center_scale > 0.0) {
            return bad("cluster_sigma and center_scale must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.confusion_blend) {
            return bad("confusion_blend must lie in [0, 1]".into());
        }
        let mut used = BTreeSet::new();
        for (space, pairs) in &self.confusion_pairs {
            if !self.spaces.contains(space) {
                return bad(format!("confusion pairs reference unknown space `{space}`"));
            }
            for &(a, b) in pairs {
                if a >= self.num_classes || b >= self.num_classes || a == b {
                    return bad(format!("invalid confusion pair ({a}, {b})"));
                }
                if !used.insert((a.min(b), a.max(b))) {
                    return bad(format!("confusion pair ({a}, {b}) appears in more than one space"));
                }
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> ClassRegistry {
        ClassRegistry::from_names(
            (0..self.num_classes).map(|c| (format!("class_{c:02}"), Complexity::ALL[c % 3])),
        )
        .expect("generated names are unique")
    }

    /// Class centers of one space after confusion blending, indexed `[class][dim]`.
    pub fn centers(&self, space_index: usize) -> Vec<Vec<f64>> {
        let space = &self.spaces[space_index];
        let mut rng = StreamRng::new(self.seed, purpose::SYNTH_CENTERS, space_index as u32);
        let mut centers: Vec<Vec<f64>> = (0..self.num_classes)
            .map(|_| (0..self.dim).map(|_| self.center_scale * rng.normal()).collect())
            .collect();
        let blend = self.confusion_blend;
        for &(a, b) in self.confusion_pairs.get(space).into_iter().flatten() {
            let mid: Vec<f64> = centers[a].iter().zip(&centers[b]).map(|(x, y)| 0.5 * (x + y)).collect();
            for c in [a, b] {
                for (v, m) in centers[c].iter_mut().zip(&mid) {
                    *v = (1.0 - blend) * *v + blend * m;
                }
            }
        }
        centers
    }
}

/// Generates a store whose crops carry the same id in every space.
///
/// Crops are numbered split by split (representative, train, validation),
/// class by class, so ids and their split membership depend only on the
/// sample counts.
pub fn synth_generate(config: &SyntheticConfig) -> Result<EmbeddingStore> {
    config.validate()?;
    let registry = config.registry();
    let mut store = EmbeddingStore::new(registry.clone());

    let mut layout: Vec<(String, usize, Split)> = Vec::new();
    for (&split, &n) in &config.samples_per_class_per_split {
        for c in 0..config.num_classes {
            for _ in 0..n {
                layout.push((format!("crop-{:06}", layout.len()), c, split));
            }
        }
    }

    for (si, space) in config.spaces.iter().enumerate() {
        store.add_space(space.clone(), config.dim)?;
        let centers = config.centers(si);
        let mut rng = StreamRng::new(config.seed, purpose::SYNTH_SAMPLES, si as u32);
        for (k, (id, c, _)) in layout.iter().enumerate() {
            let vector = centers[*c]
                .iter()
                .map(|mu| mu + config.cluster_sigma * rng.normal())
                .collect();
            store.push(EmbeddingRecord {
                id: id.clone(),
                space: space.clone(),
                vector,
                class_id: Some(*c),
                image_id: Some(format!("img-{:05}", k / CROPS_PER_IMAGE)),
                complexity: registry.complexity(*c),
            })?;
        }
    }

    let mut splits: BTreeMap<Split, BTreeSet<String>> = BTreeMap::new();
    for (id, _, split) in layout {
        splits.entry(split).or_default().insert(id);
    }
    store.set_splits(splits)?;
    Ok(store)
}
