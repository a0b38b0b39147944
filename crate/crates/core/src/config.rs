//! The single JSON run configuration shared by every pipeline stage.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asr_proxy::{ProxyArch, ProxyTrainConfig};
use crate::baselines::{IrmPredictorConfig, NlmsConfig};
use crate::data::{DatasetPlan, PoolConfig, SpecAugmentConfig, SplitCounts, SynthSettings};
use crate::error::{AecError, Result};
use crate::eval::ExperimentMatrix;
use crate::neural::{LossSchedule, ModelConfig, TrainConfig};
use crate::room::RoomConstraints;
use crate::seed::derive_seed;
use crate::signal::{MelConfig, StftConfig};

/// SHA-256 of the canonical JSON of `value` (object keys sorted).
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("value serializes");
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixConfig {
    /// Largest probe/reference lag searched during alignment, in samples.
    pub max_lag: usize,
    /// RMS of the reverberant target after scene normalization.
    pub target_level: f64,
}

impl Default for MixConfig {
    fn default() -> Self {
        let s = SynthSettings::default();
        MixConfig {
            max_lag: s.max_lag,
            target_level: s.target_level,
        }
    }
}

/// Keyword corpus and recognizers used for proxy error and the latent loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxySection {
    pub classes: usize,
    pub per_class: usize,
    /// Recognizer whose encoder drives the latent loss.
    pub latent: ProxyArch,
    pub a: ProxyTrainConfig,
    pub b: ProxyTrainConfig,
}

impl Default for ProxySection {
    fn default() -> Self {
        ProxySection {
            classes: 10,
            per_class: 40,
            latent: ProxyArch::A,
            a: ProxyTrainConfig::default(),
            b: ProxyTrainConfig {
                layers: 2,
                ..ProxyTrainConfig::default()
            },
        }
    }
}

impl ProxySection {
    pub fn train_config(&self, arch: ProxyArch) -> &ProxyTrainConfig {
        match arch {
            ProxyArch::A => &self.a,
            ProxyArch::B => &self.b,
        }
    }
}

/// Every setting of a run. All fields are optional in the JSON document;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed from which every stage derives its own.
    pub seed: u64,
    pub stft: StftConfig,
    pub mel: MelConfig,
    pub room: RoomConstraints,
    pub mix: MixConfig,
    pub sources: PoolConfig,
    pub dataset: DatasetPlan,
    /// Input augmentation during neural training; `null` disables it.
    /// Takes precedence over `train.specaugment`.
    pub specaugment: Option<SpecAugmentConfig>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss_schedule: LossSchedule,
    /// Train the neural model with the recognizer-encoder loss.
    pub latent_loss: bool,
    /// Keep simulated-echo examples in the neural training set; when false
    /// only replayed-echo examples are used.
    pub synthetic_data: bool,
    pub proxy: ProxySection,
    pub irm: IrmPredictorConfig,
    pub nlms: NlmsConfig,
    pub eval: ExperimentMatrix,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            stft: StftConfig::default(),
            mel: MelConfig::default(),
            room: RoomConstraints::default(),
            mix: MixConfig::default(),
            sources: PoolConfig::default(),
            dataset: DatasetPlan::default(),
            specaugment: Some(SpecAugmentConfig::default()),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            loss_schedule: LossSchedule::default(),
            latent_loss: true,
            synthetic_data: true,
            proxy: ProxySection::default(),
            irm: IrmPredictorConfig::default(),
            nlms: NlmsConfig::default(),
            eval: ExperimentMatrix::default(),
        }
    }
}

impl RunConfig {
    /// Settings sized for a single laptop core: 24 mel channels, 200
    /// training and 180 test examples, and a latent-loss weight large
    /// enough to matter against the spectral loss at this scale.
    pub fn desk() -> Self {
        let d = RunConfig::default();
        RunConfig {
            mel: MelConfig {
                num_mels: 24,
                ..d.mel
            },
            model: ModelConfig {
                mel_dim: 24,
                ..d.model
            },
            dataset: DatasetPlan {
                counts: SplitCounts {
                    train: 200,
                    dev: 16,
                    test: 180,
                },
                ..d.dataset
            },
            loss_schedule: LossSchedule {
                lambda_final: 10.0,
                ramp_steps: 500,
            },
            ..d
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AecError::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AecError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            AecError::InvalidConfig(m) => AecError::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.mel.validate(self.sources.sample_rate)?;
        self.room.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.loss_schedule.validate()?;
        self.irm.validate()?;
        self.nlms.validate()?;
        self.eval.validate()?;
        if self.model.mel_dim != self.mel.num_mels {
            return Err(AecError::InvalidConfig(format!(
                "model.mel_dim ({}) must equal mel.num_mels ({})",
                self.model.mel_dim, self.mel.num_mels
            )));
        }
        if self.proxy.classes != self.sources.keyword_classes {
            return Err(AecError::InvalidConfig("proxy.classes must equal sources.keyword_classes".into()));
        }
        if self.proxy.classes < 2 || self.proxy.per_class == 0 {
            return Err(AecError::InvalidConfig("proxy corpus needs two or more classes and at least one clip per class".into()));
        }
        if !(self.mix.target_level > 0.0) {
            return Err(AecError::InvalidConfig("mix.target_level must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the whole configuration.
    pub fn hash(&self) -> String {
        hash_json(self)
    }

    pub fn synth_settings(&self) -> SynthSettings {
        SynthSettings {
            stft: self.stft,
            mel: self.mel,
            max_lag: self.mix.max_lag,
            target_level: self.mix.target_level,
            keep_waveforms: true,
        }
    }

    /// Training settings with augmentation from the top-level section and
    /// a seed derived from the base seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            specaugment: self.specaugment.clone(),
            seed: derive_seed(self.seed, "train", self.train.seed),
            ..self.train.clone()
        }
    }

    /// Seed of the keyword corpus the recognizers are trained on. Distinct
    /// from the dataset's own keyword targets.
    pub fn proxy_corpus_seed(&self) -> u64 {
        derive_seed(self.seed, "proxy-corpus", 0)
    }

    pub fn proxy_seed(&self, arch: ProxyArch) -> u64 {
        derive_seed(self.seed, "proxy", arch as u64)
    }

    pub fn irm_seed(&self) -> u64 {
        derive_seed(self.seed, "irm", 0)
    }
}
