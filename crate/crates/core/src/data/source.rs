//! Synthetic source audio: speech-like babble for targets and references,
//! and colored background noise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::signal::{Role, Waveform};

const MAX_HARMONIC_HZ: f64 = 5000.0;

/// A formant: center frequency (Hz) and bandwidth (Hz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Formant {
    pub center: f64,
    pub bandwidth: f64,
}

fn formant_gain(formants: &[Formant], hz: f64) -> f64 {
    formants
        .iter()
        .map(|f| (-0.5 * ((hz - f.center) / f.bandwidth).powi(2)).exp())
        .sum::<f64>()
        + 0.02
}

/// Voiced harmonic source shaped by formants that glide between
/// `start` and `end` over `len` samples.
pub fn voiced_segment(
    len: usize,
    sample_rate: u32,
    f0: f64,
    start: &[Formant],
    end: &[Formant],
    rng: &mut ChaCha8Rng,
) -> Vec<f32> {
    let fs = sample_rate as f64;
    let harmonics = ((MAX_HARMONIC_HZ.min(fs / 2.0 - 200.0)) / f0).floor().max(1.0) as usize;
    let mut phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let vibrato_rate = rng.random_range(3.0..6.0);
    let vibrato_depth = rng.random_range(0.005..0.02);
    let drift = rng.random_range(-0.15..0.15);
    let mut out = vec![0.0f32; len];
    let mut formants = start.to_vec();
    let mut gains = vec![0.0; harmonics];
    for (n, o) in out.iter_mut().enumerate() {
        let frac = n as f64 / len.max(1) as f64;
        let t = n as f64 / fs;
        let pitch = f0 * (1.0 + drift * frac) * (1.0 + vibrato_depth * (std::f64::consts::TAU * vibrato_rate * t).sin());
        if n % 64 == 0 {
            for (k, f) in formants.iter_mut().enumerate() {
                f.center = start[k].center + (end[k].center - start[k].center) * frac;
                f.bandwidth = start[k].bandwidth + (end[k].bandwidth - start[k].bandwidth) * frac;
            }
            for (k, g) in gains.iter_mut().enumerate() {
                let hz = pitch * (k + 1) as f64;
                // decay of the glottal source spectrum
                *g = formant_gain(&formants, hz) / (1.0 + 0.1 * k as f64);
            }
        }
        let mut acc = 0.0;
        for (k, ph) in phases.iter_mut().enumerate() {
            let hz = pitch * (k + 1) as f64;
            if hz >= fs / 2.0 {
                break;
            }
            *ph += std::f64::consts::TAU * hz / fs;
            acc += ph.sin() * gains[k];
        }
        *o = acc as f32;
    }
    out
}

fn random_formants(rng: &mut ChaCha8Rng, count: usize) -> Vec<Formant> {
    let bands = [(250.0, 900.0), (800.0, 2300.0), (2000.0, 3200.0), (3000.0, 4000.0), (3800.0, 4800.0)];
    (0..count)
        .map(|k| Formant {
            center: rng.random_range(bands[k].0..bands[k].1),
            bandwidth: rng.random_range(60.0..200.0),
        })
        .collect()
}

/// Speech-like babble: formant-shaped harmonic syllables, amplitude
/// modulated at a 2–8 Hz syllable rate, with closures between syllables
/// and longer pauses.
pub fn speech_like(seconds: f64, sample_rate: u32, rng: &mut ChaCha8Rng) -> Waveform {
    let len = (seconds * sample_rate as f64).round() as usize;
    let f0 = rng.random_range(90.0..250.0);
    let rate = rng.random_range(2.0..8.0);
    let syllable_len = (sample_rate as f64 / rate) as usize;
    let mut out = vec![0.0f32; len];
    let mut pos = 0;
    let count = rng.random_range(3..=5);
    let mut formants = random_formants(rng, count);
    let mut paused = false;
    while pos < len {
        let seg = (syllable_len as f64 * rng.random_range(0.7..1.3)) as usize;
        let seg = seg.max(64).min(len - pos);
        if seg < 64 {
            break;
        }
        if !paused && rng.random_bool(0.4) {
            paused = true;
            pos += seg;
            continue;
        }
        paused = false;
        let next = random_formants(rng, count);
        let pitch = f0 * rng.random_range(0.85..1.15);
        let voiced = voiced_segment(seg, sample_rate, pitch, &formants, &next, rng);
        let level = 10f64.powf(rng.random_range(-6.0..6.0) / 20.0) as f32;
        for (i, v) in voiced.iter().enumerate() {
            let env = (std::f64::consts::PI * i as f64 / seg as f64).sin().powf(1.5) as f32;
            out[pos + i] += v * env * level;
        }
        formants = next;
        pos += seg + (rng.random_range(0.05..0.15) * sample_rate as f64) as usize;
    }
    normalize_rms(&mut out, 0.05);
    Waveform::new(out, sample_rate, Role::Unspecified).expect("finite synthesis")
}

/// Background noise: white noise through a random one-pole tilt plus a slow
/// level wobble.
pub fn colored_noise(seconds: f64, sample_rate: u32, rng: &mut ChaCha8Rng) -> Waveform {
    let len = (seconds * sample_rate as f64).round() as usize;
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let pole = rng.random_range(0.0..0.95);
    let wobble_hz = rng.random_range(0.2..2.0);
    let mut state = 0.0f64;
    let mut out: Vec<f32> = (0..len)
        .map(|n| {
            state = pole * state + (1.0 - pole) * normal.sample(rng);
            let wob = 1.0 + 0.3 * (std::f64::consts::TAU * wobble_hz * n as f64 / sample_rate as f64).sin();
            (state * wob) as f32
        })
        .collect();
    normalize_rms(&mut out, 0.05);
    Waveform::new(out, sample_rate, Role::Noise).expect("finite noise")
}

pub fn normalize_rms(samples: &mut [f32], target: f64) {
    let rms = crate::signal::waveform::power(samples).sqrt();
    if rms > 0.0 {
        let g = (target / rms) as f32;
        samples.iter_mut().for_each(|s| *s *= g);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn generators_are_deterministic_and_finite() {
        let a = speech_like(1.0, 16000, &mut ChaCha8Rng::seed_from_u64(3));
        let b = speech_like(1.0, 16000, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert_eq!(a.len(), 16000);
        assert!((a.rms() - 0.05).abs() < 1e-4);
        let n = colored_noise(0.5, 16000, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(n.len(), 8000);
        assert!(n.samples().iter().all(|s| s.is_finite()));
    }
}
