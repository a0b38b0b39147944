use serde::{Deserialize, Serialize};

use super::config::{distance, Point, RoomConfig};
use super::convolve::fft_convolve;
use crate::error::{AecError, Result};
use crate::signal::{Role, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    TargetPath,
    LoudspeakerPath,
}

/// Room impulse response from one source to the microphone.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f32>,
    pub sample_rate: u32,
    pub source_kind: SourceKind,
}

impl Rir {
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|&t| (t as f64).powi(2)).sum()
    }

    pub fn nonzero_taps(&self) -> Vec<(usize, f32)> {
        self.taps
            .iter()
            .enumerate()
            .filter(|(_, t)| **t != 0.0)
            .map(|(i, t)| (i, *t))
            .collect()
    }

    pub fn as_waveform(&self) -> Waveform {
        Waveform::new(self.taps.clone(), self.sample_rate, Role::Unspecified)
            .expect("rir taps are finite and non-empty")
    }
}

/// One mirrored source: position and how many walls it bounced off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: Point,
    pub reflections: usize,
}

/// Every image of `source` with at most `max_order` wall reflections.
pub fn image_sources(dimensions: &Point, source: &Point, max_order: usize) -> Vec<ImageSource> {
    let n = max_order as i64;
    // per-axis candidates: (coordinate, reflections)
    let axis = |a: usize| -> Vec<(f64, usize)> {
        let mut v = Vec::new();
        for cell in -n..=n {
            for mirrored in 0..=1i64 {
                let refl = ((cell - mirrored).abs() + cell.abs()) as usize;
                if refl <= max_order {
                    let coord = (1 - 2 * mirrored) as f64 * source[a] + 2.0 * cell as f64 * dimensions[a];
                    v.push((coord, refl));
                }
            }
        }
        v
    };
    let (xs, ys, zs) = (axis(0), axis(1), axis(2));
    let mut out = Vec::new();
    for &(x, rx) in &xs {
        for &(y, ry) in &ys {
            if rx + ry > max_order {
                continue;
            }
            for &(z, rz) in &zs {
                let r = rx + ry + rz;
                if r <= max_order {
                    out.push(ImageSource {
                        position: [x, y, z],
                        reflections: r,
                    });
                }
            }
        }
    }
    out
}

const TAIL_FLOOR_DB: f64 = -60.0;

/// Image-source impulse response with frequency-flat wall absorption and
/// nearest-sample delays. The tail is cut once the energy remaining after a
/// tap falls 60 dB below the peak tap's energy.
pub fn compute_rir(room: &RoomConfig, source: SourceKind, sample_rate: u32) -> Result<Rir> {
    room.validate()?;
    let src = match source {
        SourceKind::TargetPath => room.target_position,
        SourceKind::LoudspeakerPath => room.loudspeaker_position,
    };
    let reflect = 1.0 - room.absorption;
    let images = image_sources(&room.dimensions, &src, room.max_image_order);
    let fs = sample_rate as f64;
    let mut contributions = Vec::with_capacity(images.len());
    let mut max_delay = 0usize;
    for img in &images {
        let amp = if img.reflections == 0 {
            1.0
        } else {
            reflect.powi(img.reflections as i32)
        };
        if amp == 0.0 {
            continue;
        }
        let d = distance(&img.position, &room.mic_position);
        let delay = (d / room.speed_of_sound * fs).round() as usize;
        max_delay = max_delay.max(delay);
        contributions.push((delay, amp / d));
    }
    let mut taps = vec![0.0f64; max_delay + 1];
    for (delay, a) in contributions {
        taps[delay] += a;
    }
    let peak = taps.iter().fold(0.0f64, |m, t| m.max(t * t));
    if peak == 0.0 {
        return Err(AecError::InvalidConfig("room produced an empty impulse response".into()));
    }
    let floor = peak * 10f64.powf(TAIL_FLOOR_DB / 10.0);
    let mut tail = 0.0;
    let mut keep = taps.len();
    for i in (0..taps.len()).rev() {
        tail += taps[i] * taps[i];
        if tail >= floor {
            keep = i + 1;
            break;
        }
    }
    taps.truncate(keep);
    Ok(Rir {
        taps: taps.into_iter().map(|t| t as f32).collect(),
        sample_rate,
        source_kind: source,
    })
}

/// Full linear convolution; output length is `len(wave) + len(rir) - 1`.
pub fn apply_rir(wave: &Waveform, rir: &Rir) -> Result<Waveform> {
    if wave.sample_rate() != rir.sample_rate {
        return Err(AecError::RateMismatch(wave.sample_rate(), rir.sample_rate));
    }
    Waveform::new(fft_convolve(wave.samples(), &rir.taps), wave.sample_rate(), wave.role())
}
