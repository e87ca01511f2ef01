//! Experiment specification.
//!
//! Values come from three layers, later ones winning:
//!
//! 1. the profile's built-in defaults (`desk` unless chosen otherwise),
//! 2. the TOML file given with `--config`,
//! 3. command-line flags (`--profile`, `--seed`, `--hidden`, `--ablation`, `--out`).
//!
//! ```toml
//! profile = "desk"
//! hidden_sizes = [32]
//! ablations = ["UM", "MM_VLVL", "MM_VLL"]
//! blind_mode = "ones"
//!
//! [paths]
//! data = "data"
//! out = "runs/desk"
//!
//! [train]
//! epochs = 10
//! seeds = [1, 2, 3]
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, Error, Result};
use crate::lexicon::{LookupMode, Side};
use crate::model::BlindMode;
use crate::synth::SynthConfig;
use crate::trainer::{Ablation, TrainConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// The published sweep: n in {128, 256, 512}, B = 32, T = 32, 15 epochs.
    Paper,
    /// Minutes on one CPU: n = 32, B = 16, T = 16, 12 epochs.
    #[default]
    Desk,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            _ => Err(Error::Config(format!("unknown profile {s:?} (expected paper or desk)"))),
        }
    }
}

/// Where inputs live and outputs go. Unset input paths resolve inside `data`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub captions: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    /// Normalized similarity TSVs; empty means every `*.tsv` in `<data>/sim`.
    pub datasets: Vec<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data: "data".into(),
            captions: None,
            features: None,
            embeddings: None,
            datasets: Vec::new(),
            out: "runs".into(),
        }
    }
}

impl Paths {
    pub fn captions(&self) -> PathBuf {
        self.captions.clone().unwrap_or_else(|| self.data.join("captions.jsonl"))
    }

    pub fn features(&self) -> PathBuf {
        self.features.clone().unwrap_or_else(|| self.data.join("features.gfeat"))
    }

    pub fn embeddings(&self) -> PathBuf {
        self.embeddings.clone().unwrap_or_else(|| self.data.join("embeddings.txt"))
    }

    pub fn sim_dir(&self) -> PathBuf {
        self.data.join("sim")
    }

    /// Explicit datasets, or the sorted `*.tsv` files of the sim directory.
    pub fn dataset_files(&self) -> Result<Vec<PathBuf>> {
        if !self.datasets.is_empty() {
            return Ok(self.datasets.clone());
        }
        let dir = self.sim_dir();
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
            .collect();
        files.sort();
        Ok(files)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub k: usize,
    pub p: f64,
    pub beam_width: usize,
    /// Tokens to generate, prompt included; `None` uses the reference caption length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings {
            k: 10,
            p: 0.3,
            beam_width: 5,
            length: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub side: Side,
    pub lookup: LookupMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub profile: Profile,
    pub paths: Paths,
    pub hidden_sizes: Vec<usize>,
    pub ablations: Vec<Ablation>,
    pub blind_mode: BlindMode,
    pub freeze_embeddings: bool,
    /// Seed of the image-level train/valid/test split.
    pub split_seed: u64,
    pub train: TrainConfig,
    pub sampler: SamplerSettings,
    pub sim: SimSettings,
    pub synth: SynthConfig,
    pub synth_seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec::for_profile(Profile::Desk)
    }
}

/// Flag values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub hidden: Option<usize>,
    pub ablations: Vec<Ablation>,
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn for_profile(profile: Profile) -> Self {
        let (hidden_sizes, train) = match profile {
            Profile::Paper => (vec![128, 256, 512], TrainConfig::default()),
            Profile::Desk => (
                vec![32],
                TrainConfig {
                    batch_size: 16,
                    seq_len: 16,
                    epochs: 12,
                    ..TrainConfig::default()
                },
            ),
        };
        ExperimentSpec {
            profile,
            paths: Paths::default(),
            hidden_sizes,
            ablations: Ablation::ALL.to_vec(),
            blind_mode: BlindMode::Ones,
            freeze_embeddings: false,
            split_seed: 0,
            train,
            sampler: SamplerSettings::default(),
            sim: SimSettings::default(),
            synth: SynthConfig::default(),
            synth_seed: 0,
        }
    }

    /// Parses a TOML document layered over the defaults of its `profile`
    /// (or of `profile_override` when given).
    pub fn from_toml(text: &str, profile_override: Option<Profile>) -> Result<Self> {
        let file: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        let profile = match profile_override {
            Some(p) => p,
            None => match file.get("profile") {
                Some(v) => v
                    .as_str()
                    .ok_or_else(|| Error::Config("profile must be a string".into()))?
                    .parse()?,
                None => Profile::default(),
            },
        };
        let base = toml::Table::try_from(ExperimentSpec::for_profile(profile))
            .map_err(|e| Error::Config(format!("config: {e}")))?;
        let mut merged = base;
        merge(&mut merged, file);
        merged.insert("profile".into(), toml::Value::String(format!("{profile:?}").to_lowercase()));
        let spec: ExperimentSpec = merged.try_into().map_err(|e| Error::Config(format!("config: {e}")))?;
        Ok(spec)
    }

    /// Builds the spec from an optional file and the flags.
    pub fn resolve(config: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let mut spec = match config {
            Some(path) => Self::from_toml(&read_to_string(path)?, flags.profile)
                .map_err(|e| e.context(path.display().to_string()))?,
            None => Self::for_profile(flags.profile.unwrap_or_default()),
        };
        spec.apply(flags);
        spec.validate()?;
        Ok(spec)
    }

    /// `--seed` pins the trial seeds to one value and reseeds the generator;
    /// `--hidden` and `--ablation` narrow the sweep; `--out` moves outputs.
    pub fn apply(&mut self, flags: &Overrides) {
        if let Some(seed) = flags.seed {
            self.train.seeds = vec![seed];
            self.synth_seed = seed;
        }
        if let Some(h) = flags.hidden {
            self.hidden_sizes = vec![h];
        }
        if !flags.ablations.is_empty() {
            self.ablations = flags.ablations.clone();
        }
        if let Some(out) = &flags.out {
            self.paths.out = out.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.synth.validate()?;
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden_sizes must be non-empty and positive".into()));
        }
        if self.ablations.is_empty() {
            return Err(Error::Config("at least one ablation is required".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
