use nalgebra::DMatrix;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::stft::{Spectrogram, StftConfig};
use crate::error::{AecError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelConfig {
    pub num_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            num_mels: 80,
            f_min: 125.0,
            f_max: 7600.0,
            log_floor: 1e-5,
        }
    }
}

impl MelConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.num_mels == 0 {
            return Err(AecError::InvalidConfig("num_mels must be >= 1".into()));
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= sample_rate as f64 / 2.0) {
            return Err(AecError::InvalidConfig(format!(
                "need 0 <= f_min < f_max <= {} Hz, got {}..{}",
                sample_rate as f64 / 2.0,
                self.f_min,
                self.f_max
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(AecError::InvalidConfig("log_floor must be positive".into()));
        }
        Ok(())
    }

    /// The value every entry takes for a silent input.
    pub fn floor_value(&self) -> f32 {
        self.log_floor.ln() as f32
    }
}

/// T×M natural-log mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelFrames {
    pub frames: Array2<f32>,
    pub mel_config: MelConfig,
}

impl LogMelFrames {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn num_mels(&self) -> usize {
        self.frames.ncols()
    }

    pub fn constant(frames: usize, mel_config: MelConfig) -> Self {
        LogMelFrames {
            frames: Array2::from_elem((frames, mel_config.num_mels), mel_config.floor_value()),
            mel_config,
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    1127.0 * (1.0 + hz / 700.0).ln()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * ((mel / 1127.0).exp() - 1.0)
}

/// Center frequencies of the `num_mels` channels plus the two outer edges.
pub fn mel_edges(mel: &MelConfig) -> Vec<f64> {
    let lo = hz_to_mel(mel.f_min);
    let hi = hz_to_mel(mel.f_max);
    (0..mel.num_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (mel.num_mels + 1) as f64))
        .collect()
}

/// M×F triangular filterbank with unit peaks, evaluated at the FFT bin
/// frequencies.
pub fn mel_filterbank(mel: &MelConfig, stft: &StftConfig, sample_rate: u32) -> Array2<f32> {
    let bins = stft.num_bins();
    let edges = mel_edges(mel);
    let bin_hz = sample_rate as f64 / stft.fft_size as f64;
    let mut fb = Array2::zeros((mel.num_mels, bins));
    for m in 0..mel.num_mels {
        let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for f in 0..bins {
            let hz = f as f64 * bin_hz;
            let w = ((hz - lo) / (c - lo)).min((hi - hz) / (hi - c));
            if w > 0.0 {
                fb[[m, f]] = w as f32;
            }
        }
    }
    fb
}

pub fn log_mel(spec: &Spectrogram, mel: &MelConfig) -> Result<LogMelFrames> {
    mel.validate(spec.sample_rate)?;
    let fb = mel_filterbank(mel, &spec.config, spec.sample_rate);
    Ok(log_mel_from_magnitude(&spec.magnitude(), &fb, mel))
}

pub(crate) fn log_mel_from_magnitude(mag: &Array2<f32>, fb: &Array2<f32>, mel: &MelConfig) -> LogMelFrames {
    let energies = mag.dot(&fb.t());
    let floor = mel.log_floor as f32;
    LogMelFrames {
        frames: energies.mapv(|e| e.max(floor).ln()),
        mel_config: *mel,
    }
}

/// F×M Moore–Penrose pseudo-inverse of the filterbank.
pub fn filterbank_pinv(fb: &Array2<f32>) -> Array2<f32> {
    let (m, f) = fb.dim();
    let mat = DMatrix::from_fn(m, f, |i, j| fb[[i, j]] as f64);
    let pinv = mat
        .pseudo_inverse(1e-10)
        .expect("pseudo-inverse with positive epsilon cannot fail");
    Array2::from_shape_fn((f, m), |(i, j)| pinv[(i, j)] as f32)
}

/// Approximate T×F magnitudes whose log-mel analysis reproduces `frames`.
pub fn mel_pseudo_inverse(frames: &LogMelFrames, cfg: &StftConfig, sample_rate: u32) -> Result<Array2<f32>> {
    frames.mel_config.validate(sample_rate)?;
    let fb = mel_filterbank(&frames.mel_config, cfg, sample_rate);
    Ok(pseudo_inverse_with(frames, &filterbank_pinv(&fb)))
}

pub(crate) fn pseudo_inverse_with(frames: &LogMelFrames, pinv: &Array2<f32>) -> Array2<f32> {
    let energies = frames.frames.mapv(f32::exp);
    let mut mag = energies.dot(&pinv.t());
    mag.mapv_inplace(|v| v.max(0.0));
    mag
}

/// Mean over frames of each mel channel.
pub fn channel_means(frames: &LogMelFrames) -> Vec<f32> {
    frames
        .frames
        .mean_axis(Axis(0))
        .map(|a| a.to_vec())
        .unwrap_or_default()
}
