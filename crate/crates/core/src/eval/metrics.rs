use ndarray::Array2;

use crate::error::{AecError, Result};
use crate::signal::{stft, LogMelFrames, StftConfig, Waveform};

pub const SDR_CAP_DB: f64 = 100.0;
pub const ERLE_CAP_DB: f64 = 100.0;
const LSD_MAG_FLOOR: f64 = 1e-10;

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(AecError::ShapeMismatch(format!("{a} vs {b} samples")));
    }
    Ok(())
}

/// Signal-to-distortion ratio in dB after fitting the best scalar gain of
/// `estimate` to `reference`. Capped at [`SDR_CAP_DB`].
pub fn sdr(estimate: &Waveform, reference: &Waveform) -> Result<f64> {
    check_len(estimate.len(), reference.len())?;
    sdr_samples(estimate.samples(), reference.samples())
}

pub fn sdr_samples(estimate: &[f32], reference: &[f32]) -> Result<f64> {
    check_len(estimate.len(), reference.len())?;
    let ss: f64 = reference.iter().map(|v| (*v as f64).powi(2)).sum();
    if ss <= 0.0 {
        return Err(AecError::NoSignal);
    }
    let ee: f64 = estimate.iter().map(|v| (*v as f64).powi(2)).sum();
    let se: f64 = reference.iter().zip(estimate).map(|(s, e)| *s as f64 * *e as f64).sum();
    let g = if ee > 0.0 { se / ee } else { 0.0 };
    let err: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(s, e)| (*s as f64 - g * *e as f64).powi(2))
        .sum();
    if err <= ss * 10f64.powf(-SDR_CAP_DB / 10.0) {
        return Ok(SDR_CAP_DB);
    }
    Ok(10.0 * (ss / err).log10())
}

fn lsd_db(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(AecError::ShapeMismatch(format!("{:?} vs {:?} frames", a.dim(), b.dim())));
    }
    if a.nrows() == 0 {
        return Err(AecError::ShapeMismatch("no frames".into()));
    }
    let per_frame = a.rows().into_iter().zip(b.rows()).map(|(x, y)| {
        let ms = x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / x.len() as f64;
        ms.sqrt()
    });
    Ok(per_frame.sum::<f64>() / a.nrows() as f64)
}

/// Log-spectral distance in dB between STFT magnitudes.
pub fn lsd(estimate: &Waveform, target: &Waveform, cfg: &StftConfig) -> Result<f64> {
    estimate.check_rate(target)?;
    let to_db = |w: &Waveform| -> Result<Array2<f64>> {
        Ok(stft(w, cfg)?.magnitude().mapv(|m| 20.0 * (m as f64).max(LSD_MAG_FLOOR).log10()))
    };
    lsd_db(&to_db(estimate)?, &to_db(target)?)
}

/// Log-spectral distance in dB between log-mel feature matrices.
pub fn lsd_frames(estimate: &LogMelFrames, target: &LogMelFrames) -> Result<f64> {
    let k = 20.0 / std::f64::consts::LN_10;
    lsd_db(&estimate.frames.mapv(|v| k * v as f64), &target.frames.mapv(|v| k * v as f64))
}

/// Echo return loss enhancement in dB over the samples where
/// `echo_only` is set. Capped at [`ERLE_CAP_DB`].
pub fn erle(probe: &Waveform, erased: &Waveform, echo_only: &[bool]) -> Result<f64> {
    check_len(probe.len(), erased.len())?;
    check_len(probe.len(), echo_only.len())?;
    let (mut pp, mut pe, mut n) = (0.0f64, 0.0f64, 0usize);
    for ((p, e), &m) in probe.samples().iter().zip(erased.samples()).zip(echo_only) {
        if m {
            pp += (*p as f64).powi(2);
            pe += (*e as f64).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(AecError::Undefined("no echo-only samples".into()));
    }
    if pp <= 0.0 {
        return Err(AecError::Undefined("probe is silent over the echo-only region".into()));
    }
    if pe <= pp * 10f64.powf(-ERLE_CAP_DB / 10.0) {
        return Ok(ERLE_CAP_DB);
    }
    Ok(10.0 * (pp / pe).log10())
}

/// Per-sample flags for blocks of `block` samples where the target's power
/// is more than `threshold_db` below its loudest block.
pub fn echo_only_mask(target: &Waveform, block: usize, threshold_db: f64) -> Vec<bool> {
    let s = target.samples();
    let block = block.max(1);
    let powers: Vec<f64> = s
        .chunks(block)
        .map(|c| c.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / c.len() as f64)
        .collect();
    let peak = powers.iter().cloned().fold(0.0, f64::max);
    let limit = peak * 10f64.powf(-threshold_db / 10.0);
    let mut out = Vec::with_capacity(s.len());
    for (c, p) in s.chunks(block).zip(&powers) {
        out.extend(std::iter::repeat_n(peak == 0.0 || *p < limit, c.len()));
    }
    out
}
