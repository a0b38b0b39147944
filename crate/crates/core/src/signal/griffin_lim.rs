use ndarray::Array2;
use num_complex::Complex32;

use super::stft::{Spectrogram, StftConfig, StftPlan};
use super::waveform::{Role, Waveform};
use crate::error::{AecError, Result};

pub const DEFAULT_ITERATIONS: usize = 60;
/// Extrapolation weight of the accelerated update; zero gives the classic
/// iteration.
pub const DEFAULT_MOMENTUM: f32 = 0.9;

#[derive(Debug, Clone)]
pub struct GriffinLimOutput {
    pub waveform: Waveform,
    /// Spectral convergence after each iteration.
    pub convergence: Vec<f64>,
}

/// Phase recovery by alternating projections, starting from zero phase,
/// with the default momentum.
pub fn griffin_lim(
    magnitude: &Array2<f32>,
    cfg: &StftConfig,
    sample_rate: u32,
    iters: usize,
) -> Result<GriffinLimOutput> {
    griffin_lim_with_momentum(magnitude, cfg, sample_rate, iters, DEFAULT_MOMENTUM)
}

/// Accelerated alternating projections: each magnitude-projected estimate
/// is extrapolated by `momentum` times its change from the previous one.
pub fn griffin_lim_with_momentum(
    magnitude: &Array2<f32>,
    cfg: &StftConfig,
    sample_rate: u32,
    iters: usize,
    momentum: f32,
) -> Result<GriffinLimOutput> {
    if !(0.0..1.0).contains(&momentum) {
        return Err(AecError::InvalidConfig(format!("momentum {momentum} outside [0, 1)")));
    }
    if iters == 0 {
        return Err(AecError::InvalidConfig("griffin-lim needs at least one iteration".into()));
    }
    if magnitude.ncols() != cfg.num_bins() {
        return Err(AecError::ShapeMismatch(format!(
            "magnitude has {} bins, config expects {}",
            magnitude.ncols(),
            cfg.num_bins()
        )));
    }
    if let Some(v) = magnitude.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(AecError::InvalidConfig(format!("magnitude entry {v} is not a finite non-negative value")));
    }
    let plan = StftPlan::new(*cfg)?;
    let frames = magnitude.nrows();
    let target_norm = frobenius(magnitude.iter().map(|&m| m as f64));
    if target_norm == 0.0 {
        return Ok(GriffinLimOutput {
            waveform: Waveform::zeros(cfg.signal_len(frames), sample_rate, Role::Erased),
            convergence: vec![0.0; iters],
        });
    }

    let mut spec = Spectrogram {
        frames: magnitude.mapv(|m| Complex32::new(m, 0.0)),
        config: *cfg,
        sample_rate,
    };
    let mut convergence = Vec::with_capacity(iters);
    let mut samples = Vec::new();
    let mut previous: Option<Array2<Complex32>> = None;
    for i in 0..iters {
        samples = plan.inverse(&spec)?;
        let rebuilt = plan.forward(&samples, sample_rate)?;
        let err = frobenius(
            rebuilt
                .frames
                .iter()
                .zip(magnitude.iter())
                .map(|(c, &m)| c.norm() as f64 - m as f64),
        );
        convergence.push(err / target_norm);
        if i + 1 < iters {
            let projected = ndarray::Zip::from(&rebuilt.frames).and(magnitude).map_collect(|c, &m| {
                let n = c.norm();
                if n > 0.0 {
                    c * (m / n)
                } else {
                    Complex32::new(m, 0.0)
                }
            });
            spec.frames = match &previous {
                Some(prev) if momentum > 0.0 => ndarray::Zip::from(&projected)
                    .and(prev)
                    .map_collect(|c, p| c + (c - p) * momentum),
                _ => projected.clone(),
            };
            previous = Some(projected);
        }
    }
    Ok(GriffinLimOutput {
        waveform: Waveform::new(samples, sample_rate, Role::Erased)?,
        convergence,
    })
}

fn frobenius(values: impl Iterator<Item = f64>) -> f64 {
    values.map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::stft::{istft, stft};

    #[test]
    fn zero_magnitude_gives_silence() {
        let cfg = StftConfig::default();
        let out = griffin_lim(&Array2::zeros((10, 257)), &cfg, 16000, 5).unwrap();
        assert!(out.waveform.samples().iter().all(|s| *s == 0.0));
        assert_eq!(out.convergence, vec![0.0; 5]);
    }

    #[test]
    fn one_iteration_is_zero_phase_inverse() {
        let cfg = StftConfig::default();
        let x: Vec<f32> = (0..4000).map(|i| ((i * 7919) % 101) as f32 / 101.0 - 0.5).collect();
        let mag = stft(&Waveform::new(x, 16000, Role::Probe).unwrap(), &cfg)
            .unwrap()
            .magnitude();
        let out = griffin_lim(&mag, &cfg, 16000, 1).unwrap();
        let zero_phase = Spectrogram {
            frames: mag.mapv(|m| Complex32::new(m, 0.0)),
            config: cfg,
            sample_rate: 16000,
        };
        let direct = istft(&zero_phase).unwrap();
        assert_eq!(out.waveform.samples(), direct.samples());
    }

    #[test]
    fn rejects_bad_shapes() {
        let cfg = StftConfig::default();
        assert!(griffin_lim(&Array2::zeros((3, 100)), &cfg, 16000, 2).is_err());
        assert!(griffin_lim(&Array2::zeros((3, 257)), &cfg, 16000, 0).is_err());
    }
}
