//! Run configuration: one TOML document drives data, training, attacks and
//! artifact output.
//!
//! ```toml
//! schema_version = 1
//! seed = 0
//! strategies = ["vanilla", "fedper", "ldp"]
//!
//! [training]
//! max_rounds = 200
//! patience = 30
//! local_epochs = 10
//! eta = 0.001
//! batch_size = 32
//! ldp_sigma2 = 0.01
//! ldp_mode = "update"        # or "per_step"
//!
//! [architecture]
//! window_len = 128
//! conv_channels = [16, 32]
//! kernel_sizes = [5, 5]
//! hidden = [64, 32]
//!
//! [data]
//! source = "synthetic"       # or "files" with path/layout
//!
//! [cv]
//! repetitions = 10
//! folds = 5
//!
//! [attack]
//! n_trees = 1000
//! max_depth = 10
//! ```
//!
//! Missing keys take the defaults of the `paper` preset.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{load_trials, synth_generate, DatasetLayout, LabeledWindow, SynthConfig, UserProfile};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{HarArchitecture, Strategy};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LdpMode {
    /// Noise on each transmitted update.
    Update,
    /// Noise on each mini-batch gradient during local training.
    PerStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub max_rounds: usize,
    pub patience: usize,
    pub local_epochs: usize,
    pub eta: f64,
    pub batch_size: usize,
    pub ldp_sigma2: f64,
    pub ldp_mode: LdpMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            max_rounds: 200,
            patience: 30,
            local_epochs: 10,
            eta: 0.001,
            batch_size: 32,
            ldp_sigma2: 0.01,
            ldp_mode: LdpMode::Update,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(Error::Config("training.max_rounds must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("training.patience must be >= 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config("training.local_epochs must be >= 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("training.eta must be > 0, got {}", self.eta)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("training.batch_size must be >= 1".into()));
        }
        if !(self.ldp_sigma2 >= 0.0 && self.ldp_sigma2.is_finite()) {
            return Err(Error::Config(format!(
                "training.ldp_sigma2 must be >= 0, got {}",
                self.ldp_sigma2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic(SynthConfig),
    Files {
        path: PathBuf,
        layout: DatasetLayout,
        window_len: usize,
        stride: usize,
    },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic(SynthConfig::default())
    }
}

impl DataConfig {
    pub fn window_len(&self) -> usize {
        match self {
            DataConfig::Synthetic(s) => s.window_len,
            DataConfig::Files { window_len, .. } => *window_len,
        }
    }

    /// Generates or reads the population described by this source.
    pub fn load(&self) -> Result<Population> {
        match self {
            DataConfig::Synthetic(s) => {
                let ds = synth_generate(s)?;
                Ok(Population {
                    windows: ds.windows(),
                    profiles: ds.profiles,
                })
            }
            DataConfig::Files {
                path,
                layout,
                window_len,
                stride,
            } => {
                let ds = load_trials(path, *layout, *window_len, *stride)?;
                if ds.skipped_trials > 0 {
                    log::warn!("{} trials shorter than one window were skipped", ds.skipped_trials);
                }
                Ok(Population {
                    profiles: ds.profiles,
                    windows: ds.windows,
                })
            }
        }
    }
}

/// Users with their windows, index-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub profiles: Vec<UserProfile>,
    pub windows: Vec<Vec<LabeledWindow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub repetitions: usize,
    pub folds: usize,
    /// Runs only the first `max_runs` (repetition, fold) pairs; 0 runs all.
    pub max_runs: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            repetitions: 10,
            folds: 5,
            max_runs: 0,
        }
    }
}

impl CvConfig {
    /// (repetition, fold) pairs to execute, in order.
    pub fn runs(&self) -> Vec<(usize, usize)> {
        let all = (0..self.repetitions).flat_map(|r| (0..self.folds).map(move |f| (r, f)));
        if self.max_runs == 0 {
            all.collect()
        } else {
            all.take(self.max_runs).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Canonicalized transmitted parameters.
    Raw,
    /// Canonicalized difference between transmitted and broadcast parameters.
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub cv_repetitions: usize,
    pub cv_folds: usize,
    pub features: FeatureMode,
    /// Local epochs for both protocol steps; defaults to `training.local_epochs`.
    pub local_epochs: Option<usize>,
    /// Additional local-epoch values swept for the accuracy-versus-epochs series.
    pub epoch_sweep: Vec<usize>,
    /// How many of the per-user 80/20 splits are run as separate protocol
    /// instances; each contributes one sample per user.
    pub protocol_splits: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            n_trees: 1000,
            max_depth: 10,
            cv_repetitions: 10,
            cv_folds: 5,
            features: FeatureMode::Raw,
            local_epochs: None,
            epoch_sweep: Vec::new(),
            protocol_splits: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DumpUpdates {
    All,
    FinalRound,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactConfig {
    pub dump_updates: DumpUpdates,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        ArtifactConfig {
            dump_updates: DumpUpdates::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub strategies: Vec<Strategy>,
    pub execution: Execution,
    pub training: TrainingConfig,
    pub architecture: HarArchitecture,
    pub data: DataConfig,
    pub cv: CvConfig,
    pub attack: AttackConfig,
    pub artifacts: ArtifactConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::paper()
    }
}

/// Everything a single federated training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    pub seed: u64,
    pub training: TrainingConfig,
    pub architecture: HarArchitecture,
    pub execution: Execution,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        self.architecture.network().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Smoke,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "smoke" => Ok(Preset::Smoke),
            _ => Err(Error::Config(format!("unknown preset {s:?} (paper, smoke)"))),
        }
    }
}

impl RunConfig {
    /// 200 rounds, patience 30, 10 local epochs, learning rate 0.001,
    /// noise variance 0.01, 1000 trees of depth 10, 10 x 5-fold CV.
    pub fn paper() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            strategies: Strategy::ALL.to_vec(),
            execution: Execution::Parallel,
            training: TrainingConfig::default(),
            architecture: HarArchitecture::default(),
            data: DataConfig::Synthetic(SynthConfig {
                window_len: 128,
                stride: 64,
                windows_per_user: 60,
                ..SynthConfig::default()
            }),
            cv: CvConfig::default(),
            attack: AttackConfig::default(),
            artifacts: ArtifactConfig {
                dump_updates: DumpUpdates::FinalRound,
            },
        }
    }

    /// A few seconds end to end.
    pub fn smoke() -> Self {
        RunConfig {
            training: TrainingConfig {
                max_rounds: 3,
                patience: 2,
                local_epochs: 2,
                eta: 0.05,
                batch_size: 8,
                ..TrainingConfig::default()
            },
            architecture: HarArchitecture {
                window_len: 16,
                conv_channels: [4, 4],
                kernel_sizes: [3, 3],
                hidden: [8, 8],
                ..HarArchitecture::default()
            },
            data: DataConfig::Synthetic(SynthConfig {
                n_users: 10,
                windows_per_user: 12,
                window_len: 16,
                stride: 16,
                ..SynthConfig::default()
            }),
            cv: CvConfig {
                repetitions: 1,
                folds: 5,
                max_runs: 1,
            },
            attack: AttackConfig {
                n_trees: 25,
                max_depth: 4,
                cv_repetitions: 2,
                cv_folds: 5,
                epoch_sweep: vec![1, 2],
                ..AttackConfig::default()
            },
            artifacts: ArtifactConfig {
                dump_updates: DumpUpdates::All,
            },
            ..RunConfig::paper()
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Paper => RunConfig::paper(),
            Preset::Smoke => RunConfig::smoke(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is always serializable")
    }

    /// SHA-256 of the canonical TOML echo.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("strategies must list at least one strategy".into()));
        }
        self.training.validate()?;
        self.architecture.network()?;
        if self.data.window_len() != self.architecture.window_len {
            return Err(Error::Config(format!(
                "data window length {} differs from architecture.window_len {}",
                self.data.window_len(),
                self.architecture.window_len
            )));
        }
        if let DataConfig::Synthetic(s) = &self.data {
            s.validate()?;
        }
        if self.cv.folds < 2 || self.cv.repetitions == 0 {
            return Err(Error::Config("cv needs folds >= 2 and repetitions >= 1".into()));
        }
        let a = &self.attack;
        if a.n_trees == 0 || a.max_depth == 0 {
            return Err(Error::Config("attack.n_trees and attack.max_depth must be >= 1".into()));
        }
        if a.cv_folds < 2 || a.cv_repetitions == 0 {
            return Err(Error::Config("attack cv needs cv_folds >= 2 and cv_repetitions >= 1".into()));
        }
        if a.protocol_splits == 0 || a.protocol_splits > self.cv.folds {
            return Err(Error::Config(format!(
                "attack.protocol_splits must be in 1..={}",
                self.cv.folds
            )));
        }
        if a.local_epochs == Some(0) || a.epoch_sweep.contains(&0) {
            return Err(Error::Config("attack local epochs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn experiment(&self, strategy: Strategy) -> ExperimentConfig {
        ExperimentConfig {
            strategy,
            seed: self.seed,
            training: self.training.clone(),
            architecture: self.architecture.clone(),
            execution: self.execution,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_preset_matches_published_setting() {
        let c = RunConfig::paper();
        assert_eq!(c.training.max_rounds, 200);
        assert_eq!(c.training.patience, 30);
        assert_eq!(c.training.local_epochs, 10);
        assert_eq!(c.training.eta, 0.001);
        assert_eq!(c.training.ldp_sigma2, 0.01);
        assert_eq!((c.attack.n_trees, c.attack.max_depth), (1000, 10));
        assert_eq!((c.cv.repetitions, c.cv.folds), (10, 5));
        c.validate().unwrap();
        RunConfig::smoke().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::smoke();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_takes_defaults() {
        let c = RunConfig::from_toml("seed = 7\nstrategies = [\"fedper\"]\n[training]\nmax_rounds = 5\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.training.max_rounds, 5);
        assert_eq!(c.training.patience, 30);
    }

    #[test]
    fn field_level_errors() {
        let e = RunConfig::from_toml("[training]\neta = -1.0\n").unwrap_err();
        assert!(e.to_string().contains("training.eta"), "{e}");
        let e = RunConfig::from_toml("[training]\nbogus = 1\n").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        assert!(RunConfig::from_toml("schema_version = 2\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::smoke();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        b.seed = 0;
        b.training.eta = 0.051;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn cv_run_limit() {
        let cv = CvConfig {
            repetitions: 2,
            folds: 3,
            max_runs: 4,
        };
        assert_eq!(cv.runs(), vec![(0, 0), (0, 1), (0, 2), (1, 0)]);
    }
}
