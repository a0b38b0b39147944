use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex32;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::waveform::{Role, Waveform};
use crate::error::{AecError, Result};

const WINDOW_SUM_FLOOR: f32 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    /// 25 ms window, 10 ms hop, 512-point FFT at 16 kHz.
    fn default() -> Self {
        StftConfig {
            window_len: 400,
            hop: 160,
            fft_size: 512,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.window_len == 0 || self.fft_size == 0 {
            return Err(AecError::InvalidConfig("stft sizes must be positive".into()));
        }
        if !(self.hop <= self.window_len && self.window_len <= self.fft_size) {
            return Err(AecError::InvalidConfig(format!(
                "need hop <= window_len <= fft_size, got {} / {} / {}",
                self.hop, self.window_len, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count for a signal of `len` samples, or zero if it is shorter than a window.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            1 + (len - self.window_len) / self.hop
        }
    }

    /// Samples covered by `frames` frames.
    pub fn signal_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.window_len
        }
    }

    pub fn window(&self) -> Vec<f32> {
        let n = self.window_len;
        match self.window {
            WindowKind::Rectangular => vec![1.0; n],
            // periodic Hann
            WindowKind::Hann => (0..n)
                .map(|i| {
                    let phase = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    (0.5 - 0.5 * phase.cos()) as f32
                })
                .collect(),
        }
    }
}

/// Complex T×F short-time spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: Array2<Complex32>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.frames.ncols()
    }

    pub fn magnitude(&self) -> Array2<f32> {
        self.frames.mapv(|c| c.norm())
    }

    pub fn zeros(frames: usize, config: StftConfig, sample_rate: u32) -> Self {
        Spectrogram {
            frames: Array2::zeros((frames, config.num_bins())),
            config,
            sample_rate,
        }
    }
}

/// Reusable FFT plans and window for one configuration.
pub struct StftPlan {
    config: StftConfig,
    window: Vec<f32>,
    forward: Arc<dyn Fft<f32>>,
    inverse: Arc<dyn Fft<f32>>,
}

impl StftPlan {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        Ok(StftPlan {
            config,
            window: config.window(),
            forward: planner.plan_fft_forward(config.fft_size),
            inverse: planner.plan_fft_inverse(config.fft_size),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn window(&self) -> &[f32] {
        &self.window
    }

    pub fn forward(&self, samples: &[f32], sample_rate: u32) -> Result<Spectrogram> {
        let cfg = &self.config;
        if samples.len() < cfg.window_len {
            return Err(AecError::ShortInput {
                needed: cfg.window_len,
                got: samples.len(),
            });
        }
        let frames = cfg.num_frames(samples.len());
        let bins = cfg.num_bins();
        let mut out = Array2::zeros((frames, bins));
        let mut buf = vec![Complex32::new(0.0, 0.0); cfg.fft_size];
        let mut scratch = vec![Complex32::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for t in 0..frames {
            let start = t * cfg.hop;
            buf.iter_mut().for_each(|c| *c = Complex32::new(0.0, 0.0));
            for (i, (s, w)) in samples[start..start + cfg.window_len]
                .iter()
                .zip(&self.window)
                .enumerate()
            {
                buf[i] = Complex32::new(s * w, 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            for (f, c) in buf[..bins].iter().enumerate() {
                out[[t, f]] = *c;
            }
        }
        Ok(Spectrogram {
            frames: out,
            config: *cfg,
            sample_rate,
        })
    }

    /// Weighted overlap-add inverse: synthesis window equals the analysis
    /// window and the result is divided by the summed squared window.
    pub fn inverse(&self, spec: &Spectrogram) -> Result<Vec<f32>> {
        let cfg = &self.config;
        if spec.config != *cfg {
            return Err(AecError::ShapeMismatch("spectrogram config differs from plan".into()));
        }
        let bins = cfg.num_bins();
        if spec.num_bins() != bins {
            return Err(AecError::ShapeMismatch(format!(
                "expected {bins} bins, got {}",
                spec.num_bins()
            )));
        }
        let frames = spec.num_frames();
        let len = cfg.signal_len(frames).max(1);
        let mut out = vec![0.0f32; len];
        let mut norm = vec![0.0f32; len];
        let n = cfg.fft_size;
        let mut buf = vec![Complex32::new(0.0, 0.0); n];
        let mut scratch = vec![Complex32::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let scale = 1.0 / n as f32;
        for t in 0..frames {
            for f in 0..n {
                buf[f] = if f < bins {
                    spec.frames[[t, f]]
                } else {
                    spec.frames[[t, n - f]].conj()
                };
            }
            // DC and Nyquist must be real for a real-valued frame.
            buf[0].im = 0.0;
            if n % 2 == 0 {
                buf[n / 2].im = 0.0;
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * cfg.hop;
            for i in 0..cfg.window_len {
                let w = self.window[i];
                out[start + i] += buf[i].re * scale * w;
                norm[start + i] += w * w;
            }
        }
        for (o, s) in out.iter_mut().zip(&norm) {
            *o /= s.max(WINDOW_SUM_FLOOR);
        }
        Ok(out)
    }
}

pub fn stft(wave: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    StftPlan::new(*cfg)?.forward(wave.samples(), wave.sample_rate())
}

pub fn istft(spec: &Spectrogram) -> Result<Waveform> {
    let samples = StftPlan::new(spec.config)?.inverse(spec)?;
    Waveform::new(samples, spec.sample_rate, Role::Unspecified)
}
