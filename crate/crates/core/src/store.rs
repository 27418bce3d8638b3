//! Embedding vectors per named space, the class registry and dataset splits.
//!
//! On disk a store is JSON Lines: one header object followed by one record per
//! line. Vectors are stored as produced, without normalization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{purpose, StreamRng};

pub const STORE_FORMAT: &str = "embstore/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Complexity {
    Simple,
    Medium,
    Complex,
}

impl Complexity {
    pub const ALL: [Complexity; 3] = [Complexity::Simple, Complexity::Medium, Complexity::Complex];
}

impl fmt::Display for Complexity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Complexity::Simple => "Simple",
            Complexity::Medium => "Medium",
            Complexity::Complex => "Complex",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Representative,
    Train,
    Validation,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Representative, Split::Train, Split::Validation];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Representative => "representative",
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown split `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: usize,
    pub name: String,
    pub complexity: Complexity,
}

/// Canonical class ordering shared by every head, bank and space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ClassEntry>", into = "Vec<ClassEntry>")]
pub struct ClassRegistry {
    classes: Vec<ClassEntry>,
}

impl ClassRegistry {
    pub fn new(classes: Vec<ClassEntry>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Registry("no classes".into()));
        }
        let mut names = BTreeSet::new();
        for (i, c) in classes.iter().enumerate() {
            if c.id != i {
                return Err(Error::Registry(format!(
                    "class ids must be contiguous from 0, found {} at position {i}",
                    c.id
                )));
            }
            if c.name.is_empty() {
                return Err(Error::Registry(format!("class {i} has an empty name")));
            }
            if !names.insert(c.name.as_str()) {
                return Err(Error::Registry(format!("duplicate class name `{}`", c.name)));
            }
        }
        Ok(Self { classes })
    }

    pub fn from_names<S: Into<String>>(names: impl IntoIterator<Item = (S, Complexity)>) -> Result<Self> {
        Self::new(
            names
                .into_iter()
                .enumerate()
                .map(|(id, (name, complexity))| ClassEntry {
                    id,
                    name: name.into(),
                    complexity,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn get(&self, id: usize) -> Option<&ClassEntry> {
        self.classes.get(id)
    }

    pub fn contains(&self, id: usize) -> bool {
        id < self.classes.len()
    }

    pub fn by_name(&self, name: &str) -> Option<&ClassEntry> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn complexity(&self, id: usize) -> Option<Complexity> {
        self.get(id).map(|c| c.complexity)
    }

    /// Hex SHA-256 of the registry's compact JSON form.
    pub fn checksum(&self) -> String {
        let json = serde_json::to_vec(&self.classes).expect("registry serializes");
        hex::encode(Sha256::digest(json))
    }
}

impl TryFrom<Vec<ClassEntry>> for ClassRegistry {
    type Error = Error;

    fn try_from(classes: Vec<ClassEntry>) -> Result<Self> {
        Self::new(classes)
    }
}

impl From<ClassRegistry> for Vec<ClassEntry> {
    fn from(r: ClassRegistry) -> Self {
        r.classes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub space: String,
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity: Option<Complexity>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Space {
    dim: usize,
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

impl Space {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    registry: ClassRegistry,
    spaces: BTreeMap<String, Space>,
    splits: BTreeMap<Split, BTreeSet<String>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    registry: ClassRegistry,
    spaces: BTreeMap<String, usize>,
    #[serde(default)]
    splits: BTreeMap<Split, Vec<String>>,
}

impl EmbeddingStore {
    pub fn new(registry: ClassRegistry) -> Self {
        Self {
            registry,
            spaces: BTreeMap::new(),
            splits: Split::ALL.iter().map(|&s| (s, BTreeSet::new())).collect(),
        }
    }

    pub fn add_space(&mut self, name: impl Into<String>, dim: usize) -> Result<()> {
        let name = name.into();
        if dim == 0 {
            return Err(Error::Config(format!("space `{name}` has zero dimension")));
        }
        match self.spaces.get(&name) {
            Some(s) if s.dim != dim => Err(Error::Config(format!(
                "space `{name}` already declared with dimension {}",
                s.dim
            ))),
            Some(_) => Ok(()),
            None => {
                self.spaces.insert(
                    name,
                    Space {
                        dim,
                        records: Vec::new(),
                        index: HashMap::new(),
                    },
                );
                Ok(())
            }
        }
    }

    pub fn push(&mut self, record: EmbeddingRecord) -> Result<()> {
        let space = self
            .spaces
            .get_mut(&record.space)
            .ok_or_else(|| Error::UnknownSpace(record.space.clone()))?;
        if record.vector.len() != space.dim {
            return Err(Error::DimensionMismatch {
                id: record.id.clone(),
                space: record.space.clone(),
                expected: space.dim,
                got: record.vector.len(),
            });
        }
        if record.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(record.id));
        }
        if let Some(c) = record.class_id {
            if !self.registry.contains(c) {
                return Err(Error::UnknownClass(format!("{c} (record `{}`)", record.id)));
            }
        }
        if space.index.contains_key(&record.id) {
            return Err(Error::DuplicateRecord(record.id));
        }
        space.index.insert(record.id.clone(), space.records.len());
        space.records.push(record);
        Ok(())
    }

    /// Replaces the split assignment. Every id must exist in some space and
    /// appear in at most one split.
    pub fn set_splits(&mut self, splits: BTreeMap<Split, BTreeSet<String>>) -> Result<()> {
        let mut seen = BTreeSet::new();
        for ids in splits.values() {
            for id in ids {
                if !self.spaces.values().any(|s| s.index.contains_key(id)) {
                    return Err(Error::Config(format!("split references unknown record `{id}`")));
                }
                if !seen.insert(id.as_str()) {
                    return Err(Error::Config(format!("record `{id}` appears in more than one split")));
                }
            }
        }
        let mut full: BTreeMap<Split, BTreeSet<String>> =
            Split::ALL.iter().map(|&s| (s, BTreeSet::new())).collect();
        full.extend(splits);
        self.splits = full;
        Ok(())
    }

    pub fn registry(&self) -> &ClassRegistry {
        &self.registry
    }

    pub fn spaces(&self) -> &BTreeMap<String, Space> {
        &self.spaces
    }

    pub fn space(&self, name: &str) -> Result<&Space> {
        self.spaces.get(name).ok_or_else(|| Error::UnknownSpace(name.to_string()))
    }

    pub fn split(&self, split: Split) -> &BTreeSet<String> {
        &self.splits[&split]
    }

    pub fn splits(&self) -> &BTreeMap<Split, BTreeSet<String>> {
        &self.splits
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.splits.iter().find(|(_, ids)| ids.contains(id)).map(|(&s, _)| s)
    }

    /// Labeled records of `space` that belong to `split`, in store order.
    pub fn labeled_in<'a>(
        &'a self,
        space: &str,
        split: Split,
    ) -> Result<impl Iterator<Item = (&'a EmbeddingRecord, usize)> + 'a> {
        let ids = &self.splits[&split];
        Ok(self
            .space(space)?
            .records
            .iter()
            .filter(move |r| ids.contains(&r.id))
            .filter_map(|r| r.class_id.map(|c| (r, c))))
    }

    pub fn num_records(&self) -> usize {
        self.spaces.values().map(|s| s.records.len()).sum()
    }

    /// Ground-truth class of a crop id, taken from whichever space labels it.
    pub fn class_of(&self, id: &str) -> Option<usize> {
        self.spaces.values().find_map(|s| s.get(id).and_then(|r| r.class_id))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();

        let header: Header = loop {
            match lines.next() {
                None => return Err(Error::NoRecords),
                Some((i, line)) => {
                    let line = line.map_err(|e| Error::io(path, e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str(&line).map_err(|e| Error::Parse {
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                }
            }
        };
        if header.format != STORE_FORMAT {
            return Err(Error::Parse {
                line: 1,
                message: format!("unsupported format `{}`", header.format),
            });
        }

        let mut store = EmbeddingStore::new(header.registry);
        for (name, dim) in header.spaces {
            store.add_space(name, dim)?;
        }
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            store.push(record)?;
        }
        if store.num_records() == 0 {
            return Err(Error::NoRecords);
        }
        store.set_splits(
            header
                .splits
                .into_iter()
                .map(|(s, ids)| (s, ids.into_iter().collect()))
                .collect(),
        )?;
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = crate::fsutil::create_file(path)?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| match e {
            Error::Json(j) if j.is_io() => Error::io(path, j.into()),
            other => other,
        })?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let header = Header {
            format: STORE_FORMAT.to_string(),
            registry: self.registry.clone(),
            spaces: self.spaces.iter().map(|(k, s)| (k.clone(), s.dim)).collect(),
            splits: self
                .splits
                .iter()
                .map(|(&s, ids)| (s, ids.iter().cloned().collect()))
                .collect(),
        };
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n").map_err(serde_json::Error::io)?;
        for space in self.spaces.values() {
            for r in &space.records {
                serde_json::to_writer(&mut *out, r)?;
                out.write_all(b"\n").map_err(serde_json::Error::io)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        buf
    }

    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    /// Reassigns splits, stratified by class, using `fractions` over
    /// representative/train/validation. Unlabeled crops are left unassigned.
    /// Every class keeps at least one representative crop.
    pub fn split_assign(&self, fractions: &BTreeMap<Split, f64>, seed: u64) -> Result<EmbeddingStore> {
        let total: f64 = fractions.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {total}, expected 1")));
        }
        if fractions.values().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("split fractions must lie in [0, 1]".into()));
        }

        let mut by_class: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); self.registry.len()];
        for space in self.spaces.values() {
            for r in &space.records {
                if let Some(c) = r.class_id {
                    by_class[c].insert(r.id.as_str());
                }
            }
        }

        let mut splits: BTreeMap<Split, BTreeSet<String>> =
            Split::ALL.iter().map(|&s| (s, BTreeSet::new())).collect();
        for (c, ids) in by_class.iter().enumerate() {
            if ids.is_empty() {
                return Err(Error::MissingClass {
                    class_id: c,
                    space: "any".into(),
                });
            }
            let mut ids: Vec<&str> = ids.iter().copied().collect();
            StreamRng::new(seed, purpose::SPLIT, c as u32).shuffle(&mut ids);
            let mut counts = largest_remainder(ids.len(), fractions);
            if counts[0] == 0 {
                // Borrow one crop for the representative split from the largest other split.
                let donor = if counts[1] >= counts[2] { 1 } else { 2 };
                counts[donor] -= 1;
                counts[0] = 1;
            }
            let mut it = ids.into_iter();
            for (split, n) in Split::ALL.iter().zip(counts) {
                let bucket = splits.get_mut(split).unwrap();
                bucket.extend(it.by_ref().take(n).map(str::to_string));
            }
        }

        let mut out = self.clone();
        out.set_splits(splits)?;
        Ok(out)
    }
}

/// Integer split sizes for `n` items, ordered as [`Split::ALL`].
fn largest_remainder(n: usize, fractions: &BTreeMap<Split, f64>) -> [usize; 3] {
    let quotas: Vec<f64> = Split::ALL
        .iter()
        .map(|s| fractions.get(s).copied().unwrap_or(0.0) * n as f64)
        .collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = q.floor() as usize;
    }
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}
