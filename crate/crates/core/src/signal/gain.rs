use super::waveform::Waveform;
use crate::error::{AecError, Result};

const SILENCE_POWER: f64 = 1e-16;

/// Gain `g` such that `signal` sits `snr_db` above `g · interference`.
pub fn gain_for_snr(signal: &Waveform, interference: &Waveform, snr_db: f64) -> Result<f64> {
    let ps = signal.power();
    let pi = interference.power();
    if ps <= SILENCE_POWER || pi <= SILENCE_POWER {
        return Err(AecError::NoSignal);
    }
    Ok((ps / (pi * 10f64.powf(snr_db / 10.0))).sqrt())
}

pub fn snr_db(signal: &[f32], interference: &[f32]) -> f64 {
    use super::waveform::power;
    10.0 * (power(signal) / power(interference)).log10()
}
