use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{AecError, Result};
use crate::room::convolve::fft_convolve;
use crate::room::{apply_rir, compute_rir, RoomConfig, SourceKind};
use crate::signal::align::overlap_after_shift;
use crate::signal::{features, gain_for_snr, xcorr_align, LogMelFrames, MelConfig, Role, StftConfig, Waveform};

/// Target-to-noise and target-to-echo ratios of one example, in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixSpec {
    pub tnr_db: f64,
    pub terr_db: f64,
}

pub const TRAIN_TNR_RANGE: (f64, f64) = (0.0, 20.0);
pub const TRAIN_TERR_RANGE: (f64, f64) = (-20.0, 0.0);
pub const EVAL_TERR_LEVELS: [f64; 3] = [0.0, -5.0, -10.0];

/// Memoryless loudspeaker saturation `tanh(h·x)/h`; the identity at `h = 0`.
pub fn loudspeaker_distort(wave: &Waveform, hardness: f64) -> Waveform {
    if hardness <= 0.0 {
        return wave.clone();
    }
    let h = hardness as f32;
    let samples = wave.samples().iter().map(|&x| (h * x).tanh() / h).collect();
    Waveform::new(samples, wave.sample_rate(), wave.role()).expect("tanh keeps samples finite")
}

/// Everything that shapes the echo path besides the room.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EchoPath {
    pub hardness: f64,
    /// Extra loudspeaker coloration applied before the room, if any.
    pub device_response: Option<Vec<f32>>,
    /// Room for the loudspeaker path when it differs from the talker's room.
    pub speaker_room: Option<RoomConfig>,
}

/// Settings shared by every synthesized example.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub stft: StftConfig,
    pub mel: MelConfig,
    pub max_lag: usize,
    /// RMS of the reverberant target after scene normalization.
    pub target_level: f64,
    pub keep_waveforms: bool,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            stft: StftConfig::default(),
            mel: MelConfig::default(),
            max_lag: 800,
            target_level: 0.03,
            keep_waveforms: true,
        }
    }
}

/// Names under which the stems of an example are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stem {
    Probe,
    Reference,
    /// Direct-path (non-reverberant, noise-free) target.
    Target,
    ReverberantTarget,
    Noise,
    EchoedReference,
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub room_id: String,
    pub lag: i64,
    pub target_delay: usize,
}

/// Features (and optionally stems) of one training or evaluation utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceExample {
    pub id: String,
    pub probe_feats: LogMelFrames,
    pub reference_feats: LogMelFrames,
    pub target_feats: LogMelFrames,
    pub waveforms: BTreeMap<Stem, Waveform>,
    pub mix: MixSpec,
    pub provenance: Provenance,
    pub label: Option<usize>,
}

impl UtteranceExample {
    pub fn num_frames(&self) -> usize {
        self.probe_feats.num_frames()
    }

    pub fn stem(&self, stem: Stem) -> Result<&Waveform> {
        self.waveforms
            .get(&stem)
            .ok_or_else(|| AecError::MissingStems(self.id.clone()))
    }
}

fn fit_len(wave: &Waveform, len: usize) -> Waveform {
    wave.segment(0, len)
}

fn loop_to_len(wave: &Waveform, len: usize) -> Waveform {
    let s = wave.samples();
    let samples = (0..len).map(|i| s[i % s.len()]).collect();
    Waveform::new(samples, wave.sample_rate(), wave.role()).expect("finite")
}

fn add(a: &Waveform, b: &Waveform, role: Role) -> Waveform {
    let s = a.samples().iter().zip(b.samples()).map(|(x, y)| x + y).collect();
    Waveform::new(s, a.sample_rate(), role).expect("finite sum")
}

/// Builds one echoic example.
///
/// The echo is the distorted reference played through the loudspeaker path
/// of `room`; the target goes through the talker path. Noise and echo gains
/// are set against the reverberant target at the microphone. The probe is
/// aligned to the undistorted reference by cross-correlation and every stem
/// is trimmed to the overlap.
#[allow(clippy::too_many_arguments)]
pub fn synth_example(
    id: &str,
    target: &Waveform,
    reference: &Waveform,
    noise: &Waveform,
    room: &RoomConfig,
    mix: &MixSpec,
    echo_path: &EchoPath,
    seed: u64,
    settings: &SynthSettings,
) -> Result<UtteranceExample> {
    target.check_rate(reference)?;
    target.check_rate(noise)?;
    let fs = target.sample_rate();
    let len = target.len();
    if len < settings.stft.window_len + 2 * settings.max_lag {
        return Err(AecError::ShortInput {
            needed: settings.stft.window_len + 2 * settings.max_lag,
            got: len,
        });
    }
    let target_rir = compute_rir(room, SourceKind::TargetPath, fs)?;
    let speaker_rir = compute_rir(echo_path.speaker_room.as_ref().unwrap_or(room), SourceKind::LoudspeakerPath, fs)?;
    let target_delay = target_rir.taps.iter().position(|t| *t != 0.0).unwrap_or(0);

    let mut played = loudspeaker_distort(&fit_len(reference, len), echo_path.hardness);
    if let Some(device) = &echo_path.device_response {
        let colored = fft_convolve(played.samples(), device);
        played = Waveform::new(colored, fs, Role::Reference)?;
    }
    let echoed = fit_len(&apply_rir(&played, &speaker_rir)?, len);
    let reverberant = fit_len(&apply_rir(target, &target_rir)?, len);
    let direct_gain = target_rir.taps[target_delay];
    let mut direct = vec![0.0f32; len];
    for (i, s) in target.samples().iter().enumerate() {
        if i + target_delay < len {
            direct[i + target_delay] = s * direct_gain;
        }
    }
    let noise = loop_to_len(noise, len);

    let scene = (settings.target_level / reverberant.rms().max(1e-12)) as f32;
    let reverberant = reverberant.scaled(scene).with_role(Role::Target);
    let direct = Waveform::new(direct, fs, Role::Target)?.scaled(scene);
    let noise_gain = gain_for_snr(&reverberant, &noise, mix.tnr_db)? as f32;
    let echo_gain = gain_for_snr(&reverberant, &echoed, mix.terr_db)? as f32;
    let noise = noise.scaled(noise_gain).with_role(Role::Noise);
    let echoed = echoed.scaled(echo_gain).with_role(Role::EchoedReference);
    let residual = add(&reverberant, &noise, Role::Residual);
    let probe = add(&residual, &echoed, Role::Probe);

    let reference = fit_len(reference, len).with_role(Role::Reference);
    let lag = xcorr_align(&probe, &reference, settings.max_lag)?;
    let (p0, r0, aligned) = overlap_after_shift(probe.len(), reference.len(), lag);
    let mic = |w: &Waveform| w.segment(p0, aligned);

    let stems: BTreeMap<Stem, Waveform> = [
        (Stem::Probe, mic(&probe)),
        (Stem::Reference, reference.segment(r0, aligned)),
        (Stem::Target, mic(&direct)),
        (Stem::ReverberantTarget, mic(&reverberant)),
        (Stem::Noise, mic(&noise)),
        (Stem::EchoedReference, mic(&echoed)),
        (Stem::Residual, mic(&residual)),
    ]
    .into_iter()
    .collect();

    let feats = |s: Stem| features(&stems[&s], &settings.stft, &settings.mel);
    Ok(UtteranceExample {
        id: id.to_string(),
        probe_feats: feats(Stem::Probe)?,
        reference_feats: feats(Stem::Reference)?,
        target_feats: feats(Stem::Target)?,
        waveforms: if settings.keep_waveforms { stems } else { BTreeMap::new() },
        mix: *mix,
        provenance: Provenance {
            seed,
            room_id: String::new(),
            lag,
            target_delay,
        },
        label: None,
    })
}
