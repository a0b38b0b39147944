use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::data::SpecAugmentConfig;
use crate::error::{AecError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder_layers: usize,
    pub encoder_width: usize,
    pub decoder_width: usize,
    pub mel_dim: usize,
    pub prenet_layers: usize,
    pub prenet_width: usize,
    pub prenet_dropout: f64,
    pub postnet_layers: usize,
    pub postnet_filters: usize,
    pub postnet_kernel: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder_layers: 2,
            encoder_width: 48,
            decoder_width: 48,
            mel_dim: 80,
            prenet_layers: 2,
            prenet_width: 32,
            prenet_dropout: 0.5,
            postnet_layers: 5,
            postnet_filters: 32,
            postnet_kernel: 5,
        }
    }
}

impl ModelConfig {
    /// The full-size configuration.
    pub fn full_size() -> Self {
        ModelConfig {
            encoder_layers: 3,
            encoder_width: 512,
            decoder_width: 512,
            postnet_filters: 512,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("encoder_layers", self.encoder_layers),
            ("encoder_width", self.encoder_width),
            ("decoder_width", self.decoder_width),
            ("mel_dim", self.mel_dim),
            ("prenet_layers", self.prenet_layers),
            ("prenet_width", self.prenet_width),
            ("postnet_layers", self.postnet_layers),
            ("postnet_filters", self.postnet_filters),
            ("postnet_kernel", self.postnet_kernel),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(AecError::InvalidConfig(format!("model.{name} must be positive")));
            }
        }
        if self.postnet_kernel % 2 == 0 {
            return Err(AecError::InvalidConfig("model.postnet_kernel must be odd".into()));
        }
        if !(0.0..1.0).contains(&self.prenet_dropout) {
            return Err(AecError::InvalidConfig("model.prenet_dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSchedule {
    pub lambda_final: f64,
    pub ramp_steps: u64,
}

impl Default for LossSchedule {
    fn default() -> Self {
        LossSchedule {
            lambda_final: 0.01,
            ramp_steps: 2000,
        }
    }
}

impl LossSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_final >= 0.0 && self.lambda_final.is_finite()) {
            return Err(AecError::InvalidConfig("loss_schedule.lambda_final must be >= 0".into()));
        }
        if self.ramp_steps == 0 {
            return Err(AecError::InvalidConfig("loss_schedule.ramp_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Latent-loss weight at `step`: a linear ramp from zero that holds at
/// `lambda_final` from `ramp_steps` on.
pub fn lambda_at(step: u64, sched: &LossSchedule) -> f64 {
    if step >= sched.ramp_steps {
        sched.lambda_final
    } else {
        step as f64 / sched.ramp_steps as f64 * sched.lambda_final
    }
}

/// Where the model's own predictions for scheduled sampling come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingSource {
    /// The previous step of the same unrolled pass, with gradient.
    SamePass,
    /// A gradient-free free-running pass made before the training pass.
    FreeRunning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub max_steps: u64,
    pub seed: u64,
    pub scheduled_sampling: bool,
    pub sampling_source: SamplingSource,
    pub specaugment: Option<SpecAugmentConfig>,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub bn_momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            adam: AdamConfig::default(),
            max_steps: 2000,
            seed: 0,
            scheduled_sampling: true,
            sampling_source: SamplingSource::FreeRunning,
            specaugment: Some(SpecAugmentConfig::default()),
            grad_clip: Some(5.0),
            bn_momentum: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(AecError::InvalidConfig("train.batch_size must be positive".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(AecError::InvalidConfig("train.adam.lr must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(AecError::InvalidConfig("train.bn_momentum must be in [0, 1]".into()));
        }
        Ok(())
    }
}
