//! Deterministic DSP primitives shared by every other module.

pub mod align;
pub mod gain;
pub mod griffin_lim;
pub mod mel;
pub mod stft;
pub mod wav;
pub mod waveform;

pub use align::{align_pair, xcorr_align};
pub use gain::gain_for_snr;
pub use griffin_lim::{griffin_lim, griffin_lim_with_momentum, GriffinLimOutput};
pub use mel::{log_mel, mel_pseudo_inverse, LogMelFrames, MelConfig};
pub use stft::{istft, stft, Spectrogram, StftConfig, StftPlan, WindowKind};
pub use waveform::{Role, Waveform};

/// Log-mel features of a waveform in one call.
pub fn features(wave: &Waveform, stft_cfg: &StftConfig, mel: &MelConfig) -> crate::Result<LogMelFrames> {
    log_mel(&stft(wave, stft_cfg)?, mel)
}
