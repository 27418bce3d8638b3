//! Fixed-prototype nearest-class baseline scored by cosine similarity.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::rng::{purpose, StreamRng};
use crate::scores::ScoreVector;
use crate::store::{EmbeddingStore, Split};

pub const PROTOBANK_FORMAT: &str = "protobank/1";
pub const DEFAULT_PROTOTYPES_PER_CLASS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    space: String,
    dim: usize,
    k: usize,
    /// Unit-norm prototypes per class id; every class in `0..num_classes` is present.
    prototypes: BTreeMap<usize, Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct BankHeader {
    format: String,
    space: String,
    dim: usize,
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct PrototypeLine {
    class_id: usize,
    vector: Vec<f64>,
}

impl PrototypeBank {
    /// Picks up to `k` prototypes per class. Representative crops are used
    /// when a class has any; otherwise train crops are sampled. When more
    /// candidates than `k` exist a seeded uniform subset is taken.
    pub fn build(store: &EmbeddingStore, space: &str, k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        let dim = store.space(space)?.dim();
        let mut prototypes = BTreeMap::new();
        for class in store.registry().classes() {
            let from_split = |split| -> Result<Vec<&[f64]>> {
                Ok(store
                    .labeled_in(space, split)?
                    .filter(|&(_, c)| c == class.id)
                    .map(|(r, _)| r.vector.as_slice())
                    .collect())
            };
            let mut candidates = from_split(Split::Representative)?;
            if candidates.is_empty() {
                candidates = from_split(Split::Train)?;
            }
            if candidates.is_empty() {
                return Err(Error::MissingClass {
                    class_id: class.id,
                    space: space.to_string(),
                });
            }
            if candidates.len() > k {
                let mut idx: Vec<usize> = (0..candidates.len()).collect();
                StreamRng::new(seed, purpose::PROTOTYPES, class.id as u32).shuffle(&mut idx);
                idx.truncate(k);
                idx.sort_unstable();
                candidates = idx.into_iter().map(|i| candidates[i]).collect();
            }
            let normalized = candidates
                .into_iter()
                .map(|v| {
                    let n = norm(v);
                    if n == 0.0 {
                        return Err(Error::ZeroQuery);
                    }
                    Ok(v.iter().map(|x| x / n).collect())
                })
                .collect::<Result<Vec<Vec<f64>>>>()?;
            prototypes.insert(class.id, normalized);
        }
        Ok(Self {
            space: space.to_string(),
            dim,
            k,
            prototypes,
        })
    }

    /// Builds a bank from explicit vectors, normalizing each one.
    pub fn from_vectors(space: impl Into<String>, k: usize, per_class: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let dim = per_class
            .first()
            .and_then(|p| p.first())
            .map(Vec::len)
            .ok_or_else(|| Error::Config("empty prototype set".into()))?;
        let mut prototypes = BTreeMap::new();
        for (c, protos) in per_class.into_iter().enumerate() {
            if protos.is_empty() || protos.len() > k {
                return Err(Error::Config(format!("class {c} needs between 1 and {k} prototypes")));
            }
            let mut normalized = Vec::with_capacity(protos.len());
            for v in protos {
                if v.len() != dim {
                    return Err(Error::Shape { expected: dim, got: v.len() });
                }
                let n = norm(&v);
                if n == 0.0 {
                    return Err(Error::ZeroQuery);
                }
                normalized.push(v.iter().map(|x| x / n).collect());
            }
            prototypes.insert(c, normalized);
        }
        Ok(Self {
            space: space.into(),
            dim,
            k,
            prototypes,
        })
    }

    pub fn space(&self) -> &str {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.len()
    }

    pub fn prototypes(&self, class_id: usize) -> &[Vec<f64>] {
        self.prototypes.get(&class_id).map_or(&[], Vec::as_slice)
    }

    /// Per-class score is the best cosine similarity over that class's prototypes.
    pub fn classify(&self, query: &[f64]) -> Result<ScoreVector> {
        if query.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                got: query.len(),
            });
        }
        let n = norm(query);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroQuery);
        }
        let q: Vec<f64> = query.iter().map(|x| x / n).collect();
        Ok(self
            .prototypes
            .values()
            .map(|protos| {
                protos
                    .iter()
                    .map(|p| dot(p, &q).clamp(-1.0, 1.0))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect::<Vec<_>>()
            .into())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = crate::fsutil::create_file(path)?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        write_json_line(
            &mut out,
            &BankHeader {
                format: PROTOBANK_FORMAT.into(),
                space: self.space.clone(),
                dim: self.dim,
                k: self.k,
            },
        )
        .map_err(io)?;
        for (&class_id, protos) in &self.prototypes {
            for v in protos {
                write_json_line(
                    &mut out,
                    &PrototypeLine {
                        class_id,
                        vector: v.clone(),
                    },
                )
                .map_err(io)?;
            }
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let parse_err = |line: usize, e: serde_json::Error| Error::Parse {
            line,
            message: e.to_string(),
        };
        let (i, first) = lines.next().ok_or(Error::NoRecords)?;
        let header: BankHeader =
            serde_json::from_str(&first.map_err(|e| Error::io(path, e))?).map_err(|e| parse_err(i + 1, e))?;
        if header.format != PROTOBANK_FORMAT {
            return Err(Error::Parse {
                line: 1,
                message: format!("unsupported format `{}`", header.format),
            });
        }
        let mut per_class: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let p: PrototypeLine = serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e))?;
            if p.vector.len() != header.dim {
                return Err(Error::Shape {
                    expected: header.dim,
                    got: p.vector.len(),
                });
            }
            per_class.entry(p.class_id).or_default().push(p.vector);
        }
        if per_class.keys().copied().ne(0..per_class.len()) {
            return Err(Error::Config("prototype classes must be contiguous from 0".into()));
        }
        Ok(Self {
            space: header.space,
            dim: header.dim,
            k: header.k,
            prototypes: per_class,
        })
    }
}

fn write_json_line<T: Serialize>(out: &mut impl Write, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

/// Free-function form of [`PrototypeBank::build`].
pub fn build_prototypes(store: &EmbeddingStore, space: &str, k: usize, seed: u64) -> Result<PrototypeBank> {
    PrototypeBank::build(store, space, k, seed)
}

/// Free-function form of [`PrototypeBank::classify`].
pub fn classify_cosine(bank: &PrototypeBank, query: &[f64]) -> Result<ScoreVector> {
    bank.classify(query)
}
