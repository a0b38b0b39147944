//! Comparison systems: subband NLMS echo cancellation and ideal-ratio-mask
//! erasure with an oracle or a learned mask.

pub mod irm;
pub mod nlms;
pub mod predictor;

pub use irm::{apply_mask_erase, ideal_ratio_mask, oracle_mask, IrmConfig};
pub use nlms::{nlms_filter, subband_nlms_erase, NlmsConfig};
pub use predictor::{all_ones_mse, context_features, irm_target, mask_mse, train_irm_predictor, IrmMeta, IrmPredictor, IrmPredictorConfig};

use crate::error::Result;
use crate::signal::{Spectrogram, StftPlan};

/// Whole hops of zero padding covering at least one window.
pub(crate) fn pad_frames(plan: &StftPlan) -> usize {
    let c = plan.config();
    c.window_len.div_ceil(c.hop)
}

/// Analysis of `samples` (fitted to `len`) with [`pad_frames`] hops of
/// zeros on each side, so every original sample is synthesized under full
/// window overlap. Frame `t` of the unpadded analysis is frame
/// `t + pad_frames` here.
pub(crate) fn padded_forward(plan: &StftPlan, samples: &[f32], len: usize, sample_rate: u32) -> Result<Spectrogram> {
    let pad = pad_frames(plan) * plan.config().hop;
    let mut v = vec![0.0f32; pad];
    v.extend(nlms::fit(samples, len));
    v.resize(len + 2 * pad + plan.config().hop, 0.0);
    plan.forward(&v, sample_rate)
}

/// Inverse of [`padded_forward`], cropped back to `len` samples.
pub(crate) fn padded_inverse(plan: &StftPlan, spec: &Spectrogram, len: usize) -> Result<Vec<f32>> {
    let pad = pad_frames(plan) * plan.config().hop;
    let out = plan.inverse(spec)?;
    Ok(nlms::fit(out.get(pad..).unwrap_or(&[]), len))
}
