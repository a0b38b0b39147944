use serde::{Deserialize, Serialize};

use crate::error::{AecError, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Which part of an echo-cancellation scene a signal plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Target,
    Reference,
    EchoedReference,
    Residual,
    Probe,
    Erased,
    Noise,
    Unspecified,
}

/// Mono audio with a sample rate and a role tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
    role: Role,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32, role: Role) -> Result<Self> {
        if sample_rate == 0 {
            return Err(AecError::InvalidConfig("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(AecError::ShortInput { needed: 1, got: 0 });
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AecError::InvalidConfig(format!("non-finite sample at index {i}")));
        }
        Ok(Waveform {
            samples,
            sample_rate,
            role,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32, role: Role) -> Self {
        Waveform {
            samples: vec![0.0; len.max(1)],
            sample_rate,
            role,
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// Mean squared amplitude, accumulated in double precision.
    pub fn power(&self) -> f64 {
        power(&self.samples)
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }

    pub fn scaled(&self, gain: f32) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
            role: self.role,
        }
    }

    /// Copy of `[start, start + len)`, zero-padded past the end.
    pub fn segment(&self, start: usize, len: usize) -> Waveform {
        let mut out = vec![0.0; len.max(1)];
        for (i, o) in out.iter_mut().enumerate().take(len) {
            if let Some(s) = self.samples.get(start + i) {
                *o = *s;
            }
        }
        Waveform {
            samples: out,
            sample_rate: self.sample_rate,
            role: self.role,
        }
    }

    pub fn check_rate(&self, other: &Waveform) -> Result<()> {
        if self.sample_rate != other.sample_rate {
            return Err(AecError::RateMismatch(self.sample_rate, other.sample_rate));
        }
        Ok(())
    }
}

pub fn power(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / samples.len() as f64
}
