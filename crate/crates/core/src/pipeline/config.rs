use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hopfield::{HeadConfig, Hyperparams};
use crate::savings::TimeModel;
use crate::store::Split;
use crate::synth::SyntheticConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Defaults to `<output>/store.jsonl`.
    pub store: Option<PathBuf>,
    /// Defaults to `<output>/heads`.
    pub heads: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub drop_rate: f64,
    pub relabel_noise: f64,
}

/// One declarative document driving every subcommand. The top-level `seed`
/// replaces the seeds of the synth, head and train sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Spaces to train and label with; all store spaces when absent.
    pub spaces: Option<Vec<String>>,
    /// When false only the first configured space labels proposals.
    pub ensemble: bool,
    pub paths: Paths,
    pub synth: SyntheticConfig,
    /// Optional re-split of the generated store.
    pub split_fractions: Option<BTreeMap<Split, f64>>,
    /// Split whose crops become proposals and ground truth.
    pub label_split: Split,
    pub head: HeadConfig,
    pub train: Hyperparams,
    pub perturb: PerturbConfig,
    pub time_model: TimeModel,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            spaces: None,
            ensemble: true,
            paths: Paths {
                output: PathBuf::from("out"),
                ..Paths::default()
            },
            synth: SyntheticConfig::default(),
            split_fractions: None,
            label_split: Split::Validation,
            head: HeadConfig::default(),
            train: Hyperparams::default(),
            perturb: PerturbConfig::default(),
            time_model: TimeModel::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("drop_rate", self.perturb.drop_rate),
            ("relabel_noise", self.perturb.relabel_noise),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        if let Some(fr) = &self.split_fractions {
            let sum: f64 = fr.values().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("split fractions sum to {sum}, expected 1")));
            }
        }
        if matches!(&self.spaces, Some(s) if s.is_empty()) {
            return Err(Error::Config("spaces must not be empty".into()));
        }
        self.train.validate()?;
        self.time_model.validate()
    }

    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        spaces: Option<Vec<String>>,
        drop_rate: Option<f64>,
        out: Option<PathBuf>,
    ) -> Result<()> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(s) = spaces {
            self.spaces = Some(s);
        }
        if let Some(d) = drop_rate {
            self.perturb.drop_rate = d;
        }
        if let Some(o) = out {
            self.paths.output = o;
        }
        self.validate()
    }

    pub fn store_path(&self) -> PathBuf {
        self.paths.store.clone().unwrap_or_else(|| self.paths.output.join("store.jsonl"))
    }

    pub fn heads_dir(&self) -> PathBuf {
        self.paths.heads.clone().unwrap_or_else(|| self.paths.output.join("heads"))
    }

    pub fn output(&self, file: &str) -> PathBuf {
        self.paths.output.join(file)
    }

    pub fn synth_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            seed: self.seed,
            ..self.head.clone()
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}
