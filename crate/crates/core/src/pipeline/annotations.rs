use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rng::{purpose, StreamRng};
use crate::store::{ClassEntry, Complexity, EmbeddingStore, Split};

pub const ANNOTATION_FORMAT: &str = "annoset/1";

const IMAGE_WIDTH: u32 = 640;
const IMAGE_HEIGHT: u32 = 480;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    /// Full per-class score vector behind `class_id`, when produced by a labeler.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity: Option<Complexity>,
    /// Mask or box payload; carried through untouched.
    #[serde(default)]
    pub geometry: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub format: String,
    pub images: Vec<ImageEntry>,
    pub annotations: Vec<Annotation>,
    pub categories: Vec<ClassEntry>,
}

impl AnnotationSet {
    pub fn new(images: Vec<ImageEntry>, annotations: Vec<Annotation>, categories: Vec<ClassEntry>) -> Result<Self> {
        let set = Self {
            format: ANNOTATION_FORMAT.into(),
            images,
            annotations,
            categories,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != ANNOTATION_FORMAT {
            return Err(Error::Config(format!("unsupported annotation format `{}`", self.format)));
        }
        let images: BTreeSet<&str> = self.images.iter().map(|i| i.id.as_str()).collect();
        let mut ids = BTreeSet::new();
        for a in &self.annotations {
            if !ids.insert(a.id.as_str()) {
                return Err(Error::DuplicateRecord(a.id.clone()));
            }
            if !images.contains(a.image_id.as_str()) {
                return Err(Error::Config(format!(
                    "annotation `{}` references unknown image `{}`",
                    a.id, a.image_id
                )));
            }
            if let Some(c) = a.class_id {
                if c >= self.categories.len() {
                    return Err(Error::UnknownClass(format!("{c} (annotation `{}`)", a.id)));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: Self = serde_json::from_str(&text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        crate::fsutil::write_text(path, &self.to_json()?)
    }

    /// Ground-truth annotations for the crops of one split. Crops come from
    /// the first space in name order; `with_labels = false` strips the class
    /// so the set can serve as class-agnostic proposals.
    pub fn from_store(store: &EmbeddingStore, split: Split, with_labels: bool) -> Result<Self> {
        let (_, space) = store
            .spaces()
            .iter()
            .next()
            .ok_or_else(|| Error::UnknownSpace("<none>".into()))?;
        let members = store.split(split);
        let mut images = Vec::new();
        let mut seen = BTreeSet::new();
        let mut annotations = Vec::new();
        for (k, r) in space.records().iter().filter(|r| members.contains(&r.id)).enumerate() {
            let image_id = r.image_id.clone().unwrap_or_else(|| format!("img-{}", r.id));
            if seen.insert(image_id.clone()) {
                images.push(ImageEntry {
                    id: image_id.clone(),
                    width: IMAGE_WIDTH,
                    height: IMAGE_HEIGHT,
                });
            }
            let slot = (k % 8) as u32;
            annotations.push(Annotation {
                id: r.id.clone(),
                image_id,
                class_id: r.class_id.filter(|_| with_labels),
                confidence: None,
                scores: None,
                complexity: if with_labels {
                    r.complexity.or_else(|| r.class_id.and_then(|c| store.registry().complexity(c)))
                } else {
                    None
                },
                geometry: serde_json::json!({ "bbox": [20 + 150 * (slot % 4), 40 + 200 * (slot / 4), 120, 160] }),
            });
        }
        Self::new(images, annotations, store.registry().classes().to_vec())
    }
}

fn pick_count(rate: f64, n: usize) -> usize {
    ((rate * n as f64).round() as usize).min(n)
}

/// Removes `round(drop_rate * n)` proposals chosen uniformly with `seed`.
/// Images and the order of the survivors are kept.
pub fn perturb_proposals(annotations: &AnnotationSet, drop_rate: f64, seed: u64) -> Result<AnnotationSet> {
    if !(0.0..=1.0).contains(&drop_rate) {
        return Err(Error::Config(format!("drop_rate {drop_rate} outside [0, 1]")));
    }
    let n = annotations.annotations.len();
    let mut idx: Vec<usize> = (0..n).collect();
    StreamRng::new(seed, purpose::PERTURB, 0).shuffle(&mut idx);
    let dropped: BTreeSet<usize> = idx.into_iter().take(pick_count(drop_rate, n)).collect();
    let mut out = annotations.clone();
    out.annotations = annotations
        .annotations
        .iter()
        .enumerate()
        .filter(|(i, _)| !dropped.contains(i))
        .map(|(_, a)| a.clone())
        .collect();
    Ok(out)
}

/// Reassigns `round(rate * n)` labeled annotations to a different class.
pub fn relabel_noise(annotations: &AnnotationSet, rate: f64, seed: u64) -> Result<AnnotationSet> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("relabel rate {rate} outside [0, 1]")));
    }
    let num_classes = annotations.categories.len();
    let mut out = annotations.clone();
    if num_classes < 2 {
        return Ok(out);
    }
    let mut labeled: Vec<usize> = (0..out.annotations.len())
        .filter(|&i| out.annotations[i].class_id.is_some())
        .collect();
    let mut rng = StreamRng::new(seed, purpose::RELABEL, 0);
    rng.shuffle(&mut labeled);
    let k = pick_count(rate, labeled.len());
    for &i in &labeled[..k] {
        let a = &mut out.annotations[i];
        let old = a.class_id.unwrap();
        let new = (old + 1 + rng.below(num_classes - 1)) % num_classes;
        a.class_id = Some(new);
        a.confidence = None;
        a.scores = None;
    }
    Ok(out)
}
