//! Sequence-to-sequence spectral echo canceller: recurrent encoder over
//! stacked probe and reference features, frame-synchronous autoregressive
//! decoder with pre-net and convolutional post-net, composite loss and
//! training loop.

pub mod config;
pub mod loss;
pub mod model;
pub mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{lambda_at, LossSchedule, ModelConfig, SamplingSource, TrainConfig};
pub use loss::{latent_loss, spectral_loss, total_loss};
pub use model::{decoder_step, encoder_forward, infer, init_params, model_forward, postnet_forward, sampling_mask, DecoderState, FeatureStats};
pub use train::{train, train_step, LogRecord, TrainState};

use crate::autodiff::{Adam, ParamStore};
use crate::checkpoint::{self, NEURAL_MAGIC};
use crate::error::{AecError, Result};
use crate::signal::griffin_lim::DEFAULT_ITERATIONS;
use crate::signal::{align_pair, features, griffin_lim, mel_pseudo_inverse, LogMelFrames, MelConfig, StftConfig, Waveform};

pub const CHECKPOINT_KIND: &str = "neural_aec";

/// Everything stored in a model checkpoint besides the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralMeta {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub schedule: LossSchedule,
    pub stft: StftConfig,
    pub mel: MelConfig,
    pub sample_rate: u32,
    pub max_lag: usize,
    pub step: u64,
    pub latent_loss: bool,
    pub config_hash: String,
}

/// A trained model with the feature settings it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralAec {
    pub meta: NeuralMeta,
    pub params: ParamStore<f32>,
    /// Optimizer moments, present when the checkpoint can resume training.
    pub adam: Option<Adam>,
}

const ADAM_FIRST: &str = "adam.first/";
const ADAM_SECOND: &str = "adam.second/";

impl NeuralAec {
    pub fn from_state(meta: NeuralMeta, state: &TrainState) -> Self {
        NeuralAec {
            meta: NeuralMeta {
                step: state.step,
                ..meta
            },
            params: state.params.clone(),
            adam: Some(state.adam.clone()),
        }
    }

    pub fn train_state(&self) -> TrainState {
        TrainState {
            params: self.params.clone(),
            adam: self.adam.clone().unwrap_or_else(|| Adam::new(self.meta.train.adam)),
            step: self.meta.step,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors = self.params.clone();
        let mut adam_step = 0;
        if let Some(adam) = &self.adam {
            adam_step = adam.step;
            for (k, v) in adam.first.iter() {
                tensors.insert(format!("{ADAM_FIRST}{k}"), v.clone());
            }
            for (k, v) in adam.second.iter() {
                tensors.insert(format!("{ADAM_SECOND}{k}"), v.clone());
            }
        }
        checkpoint::encode(NEURAL_MAGIC, CHECKPOINT_KIND, &(&self.meta, self.adam.is_some(), adam_step), &tensors)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ((meta, has_adam, adam_step), tensors): ((NeuralMeta, bool, u64), _) =
            checkpoint::decode(bytes, NEURAL_MAGIC, CHECKPOINT_KIND)?;
        let mut params = ParamStore::new();
        let mut adam = has_adam.then(|| Adam::new(meta.train.adam));
        for (k, v) in tensors.iter() {
            if let Some(name) = k.strip_prefix(ADAM_FIRST) {
                if let Some(a) = adam.as_mut() {
                    a.first.insert(name, v.clone());
                }
            } else if let Some(name) = k.strip_prefix(ADAM_SECOND) {
                if let Some(a) = adam.as_mut() {
                    a.second.insert(name, v.clone());
                }
            } else {
                params.insert(k.clone(), v.clone());
            }
        }
        if let Some(a) = adam.as_mut() {
            a.step = adam_step;
        }
        model::check_params(&meta.model, &params).map_err(|e| AecError::CorruptCheckpoint(e.to_string()))?;
        Ok(NeuralAec { meta, params, adam })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| AecError::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| AecError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| AecError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Free-running prediction of clean features from already aligned
    /// probe and reference features. Returns `(y_pre, y_post)`.
    pub fn predict(&self, probe: &LogMelFrames, reference: &LogMelFrames) -> Result<(ndarray::Array2<f32>, ndarray::Array2<f32>)> {
        let stacked = model::stack(&probe.frames, &reference.frames)?;
        infer(&stacked, &self.params, &self.meta.model)
    }

    /// End-to-end inference: align, featurize, decode, invert the mel
    /// filterbank and recover phase with Griffin-Lim.
    pub fn erase(&self, probe: &Waveform, reference: &Waveform) -> Result<Waveform> {
        probe.check_rate(reference)?;
        let (p, r, _) = align_pair(probe, reference, self.meta.max_lag)?;
        let pf = features(&p, &self.meta.stft, &self.meta.mel)?;
        let rf = features(&r, &self.meta.stft, &self.meta.mel)?;
        let (_, y_post) = self.predict(&pf, &rf)?;
        frames_to_waveform(&y_post, &self.meta.stft, &self.meta.mel, probe.sample_rate())
    }
}

/// Mel pseudo-inverse followed by Griffin-Lim.
pub fn frames_to_waveform(frames: &ndarray::Array2<f32>, stft: &StftConfig, mel: &MelConfig, sample_rate: u32) -> Result<Waveform> {
    let lm = LogMelFrames {
        frames: frames.clone(),
        mel_config: *mel,
    };
    let mag = mel_pseudo_inverse(&lm, stft, sample_rate)?;
    Ok(griffin_lim(&mag, stft, sample_rate, DEFAULT_ITERATIONS)?.waveform)
}
