use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::waveform::Waveform;
use crate::error::{AecError, Result};

const SILENCE_RMS: f64 = 1e-6;

/// Global integer lag maximizing the cross-correlation of `probe` with
/// `reference` over `[-max_lag, max_lag]`. A positive lag means the reference
/// has to be delayed by that many samples to line up with the probe.
pub fn xcorr_align(probe: &Waveform, reference: &Waveform, max_lag: usize) -> Result<i64> {
    probe.check_rate(reference)?;
    if probe.rms() <= SILENCE_RMS || reference.rms() <= SILENCE_RMS {
        return Err(AecError::NoSignal);
    }
    let min_len = probe.len().min(reference.len());
    if max_lag >= min_len {
        return Err(AecError::BadLag { max_lag, min_len });
    }
    let corr = cross_correlation(probe.samples(), reference.samples(), max_lag);
    let mut best = (0i64, f64::NEG_INFINITY);
    // scan from lag 0 outwards so ties prefer the smallest shift
    for lag in std::iter::once(0i64).chain((1..=max_lag as i64).flat_map(|l| [l, -l])) {
        let v = corr[(lag + max_lag as i64) as usize];
        if v > best.1 {
            best = (lag, v);
        }
    }
    Ok(best.0)
}

/// `c[lag + max_lag] = Σ_n probe[n] · reference[n - lag]`, computed by FFT.
pub fn cross_correlation(probe: &[f32], reference: &[f32], max_lag: usize) -> Vec<f64> {
    let n = (probe.len() + reference.len()).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd: Arc<dyn Fft<f64>> = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex64> = probe.iter().map(|&x| Complex64::new(x as f64, 0.0)).collect();
    a.resize(n, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = reference.iter().map(|&x| Complex64::new(x as f64, 0.0)).collect();
    b.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y.conj();
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    (-(max_lag as i64)..=max_lag as i64)
        .map(|lag| a[lag.rem_euclid(n as i64) as usize].re * scale)
        .collect()
}

/// Trims `probe` and `reference` to their overlap once the reference is
/// shifted by `lag`. Returns `(probe_start, reference_start, len)`.
pub fn overlap_after_shift(probe_len: usize, reference_len: usize, lag: i64) -> (usize, usize, usize) {
    let (p0, r0) = if lag >= 0 {
        (lag as usize, 0)
    } else {
        (0, (-lag) as usize)
    };
    let len = probe_len.saturating_sub(p0).min(reference_len.saturating_sub(r0));
    (p0, r0, len)
}

/// Aligns `reference` to `probe` and trims both to their overlap.
/// Returns the aligned probe, the aligned reference and the lag.
pub fn align_pair(probe: &Waveform, reference: &Waveform, max_lag: usize) -> Result<(Waveform, Waveform, i64)> {
    let lag = xcorr_align(probe, reference, max_lag)?;
    let (p0, r0, len) = overlap_after_shift(probe.len(), reference.len(), lag);
    Ok((probe.segment(p0, len), reference.segment(r0, len), lag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::waveform::Role;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect()
    }

    fn w(s: Vec<f32>) -> Waveform {
        Waveform::new(s, 16000, Role::Unspecified).unwrap()
    }

    fn brute_force(probe: &[f32], reference: &[f32], max_lag: usize) -> Vec<f64> {
        (-(max_lag as i64)..=max_lag as i64)
            .map(|lag| {
                let mut acc = 0.0;
                for (n, p) in probe.iter().enumerate() {
                    let j = n as i64 - lag;
                    if j >= 0 && (j as usize) < reference.len() {
                        acc += *p as f64 * reference[j as usize] as f64;
                    }
                }
                acc
            })
            .collect()
    }

    #[test]
    fn identical_signals_align_at_zero() {
        let x = noise(4000, 3);
        assert_eq!(xcorr_align(&w(x.clone()), &w(x), 500).unwrap(), 0);
    }

    #[test]
    fn recovers_constructed_delay() {
        let reference = noise(8000, 4);
        let mut probe = vec![0.0; 1234];
        probe.extend_from_slice(&reference);
        probe.truncate(8000);
        assert_eq!(xcorr_align(&w(probe), &w(reference), 2000).unwrap(), 1234);
    }

    #[test]
    fn fft_correlation_matches_brute_force() {
        let a = noise(700, 5);
        let b = noise(500, 6);
        let fast = cross_correlation(&a, &b, 100);
        let slow = brute_force(&a, &b, 100);
        for (f, s) in fast.iter().zip(&slow) {
            assert!((f - s).abs() < 1e-9 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn errors() {
        let x = noise(1000, 7);
        assert!(matches!(
            xcorr_align(&w(x.clone()), &w(vec![0.0; 1000]), 10),
            Err(AecError::NoSignal)
        ));
        assert!(matches!(
            xcorr_align(&w(x.clone()), &w(x.clone()), 1000),
            Err(AecError::BadLag { .. })
        ));
        let other = Waveform::new(x.clone(), 8000, Role::Reference).unwrap();
        assert!(matches!(
            xcorr_align(&w(x), &other, 10),
            Err(AecError::RateMismatch(..))
        ));
    }

    #[test]
    fn overlap_bookkeeping() {
        assert_eq!(overlap_after_shift(100, 100, 10), (10, 0, 90));
        assert_eq!(overlap_after_shift(100, 100, -10), (0, 10, 90));
        assert_eq!(overlap_after_shift(100, 50, 0), (0, 0, 50));
    }
}
