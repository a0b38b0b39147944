use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::rng_for;
use crate::signal::LogMelFrames;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Probe,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecAugmentConfig {
    pub num_freq_masks: usize,
    pub max_total_freq_bins: usize,
    pub num_time_masks: usize,
    pub max_total_time_fraction: f64,
    pub channels: BTreeSet<Channel>,
}

impl Default for SpecAugmentConfig {
    /// Up to 27 bins over 2 frequency masks and up to 5 % of frames over 10
    /// time masks, on the reference channel.
    fn default() -> Self {
        SpecAugmentConfig {
            num_freq_masks: 2,
            max_total_freq_bins: 27,
            num_time_masks: 10,
            max_total_time_fraction: 0.05,
            channels: [Channel::Reference].into_iter().collect(),
        }
    }
}

impl SpecAugmentConfig {
    pub fn disabled() -> Self {
        SpecAugmentConfig {
            num_freq_masks: 0,
            max_total_freq_bins: 0,
            num_time_masks: 0,
            max_total_time_fraction: 0.0,
            channels: BTreeSet::new(),
        }
    }

    /// Frame budget for a sequence of `frames` frames.
    pub fn time_budget(&self, frames: usize) -> usize {
        (self.max_total_time_fraction * frames as f64 + 1e-9).floor() as usize
    }
}

/// One contiguous masked span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub width: usize,
}

/// Splits a total drawn uniformly from `0..=budget` into `count` widths at
/// uniformly drawn cut points.
fn draw_widths<R: Rng>(rng: &mut R, count: usize, budget: usize) -> Vec<usize> {
    if count == 0 {
        return Vec::new();
    }
    let total = rng.random_range(0..=budget);
    let mut cuts: Vec<usize> = (0..count - 1).map(|_| rng.random_range(0..=total)).collect();
    cuts.sort_unstable();
    let mut widths = Vec::with_capacity(count);
    let mut prev = 0;
    for c in cuts {
        widths.push(c - prev);
        prev = c;
    }
    widths.push(total - prev);
    widths
}

fn place<R: Rng>(rng: &mut R, widths: Vec<usize>, extent: usize) -> Vec<Span> {
    widths
        .into_iter()
        .map(|w| {
            let w = w.min(extent);
            Span {
                start: rng.random_range(0..=extent - w),
                width: w,
            }
        })
        .collect()
}

/// Frequency and time spans for one draw.
pub fn draw_masks(cfg: &SpecAugmentConfig, frames: usize, bins: usize, seed: u64) -> (Vec<Span>, Vec<Span>) {
    let mut rng = rng_for(seed, "specaugment", 0);
    let freq_widths = draw_widths(&mut rng, cfg.num_freq_masks, cfg.max_total_freq_bins.min(bins));
    let freq = place(&mut rng, freq_widths, bins);
    let time_widths = draw_widths(&mut rng, cfg.num_time_masks, cfg.time_budget(frames));
    let time = place(&mut rng, time_widths, frames);
    (freq, time)
}

/// Masks time and frequency spans of `feats` with the log-floor value.
pub fn spec_augment(feats: &LogMelFrames, cfg: &SpecAugmentConfig, seed: u64) -> LogMelFrames {
    let (frames, bins) = feats.frames.dim();
    let (freq, time) = draw_masks(cfg, frames, bins, seed);
    let value = feats.mel_config.floor_value();
    let mut out = feats.clone();
    for s in &freq {
        out.frames.slice_mut(ndarray::s![.., s.start..s.start + s.width]).fill(value);
    }
    for s in &time {
        out.frames.slice_mut(ndarray::s![s.start..s.start + s.width, ..]).fill(value);
    }
    out
}

/// Applies SpecAugment to whichever of the two input channels `cfg` lists,
/// with independent draws per channel.
pub fn augment_inputs(
    probe: &LogMelFrames,
    reference: &LogMelFrames,
    cfg: &SpecAugmentConfig,
    seed: u64,
) -> (LogMelFrames, LogMelFrames) {
    let p = if cfg.channels.contains(&Channel::Probe) {
        spec_augment(probe, cfg, crate::seed::derive_seed(seed, "probe", 0))
    } else {
        probe.clone()
    };
    let r = if cfg.channels.contains(&Channel::Reference) {
        spec_augment(reference, cfg, crate::seed::derive_seed(seed, "reference", 0))
    } else {
        reference.clone()
    };
    (p, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::MelConfig;
    use ndarray::Array2;

    fn feats(t: usize) -> LogMelFrames {
        LogMelFrames {
            frames: Array2::from_shape_fn((t, 80), |(i, j)| (i * 80 + j) as f32 * 1e-3),
            mel_config: MelConfig::default(),
        }
    }

    #[test]
    fn zero_budget_is_identity() {
        let f = feats(50);
        let cfg = SpecAugmentConfig {
            max_total_freq_bins: 0,
            max_total_time_fraction: 0.0,
            ..SpecAugmentConfig::default()
        };
        assert_eq!(spec_augment(&f, &cfg, 9), f);
    }

    #[test]
    fn widths_sum_within_budget() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        for _ in 0..1000 {
            let w = draw_widths(&mut rng, 2, 27);
            assert_eq!(w.len(), 2);
            assert!(w.iter().sum::<usize>() <= 27);
        }
    }

    #[test]
    fn reference_only_leaves_probe_alone() {
        let p = feats(40);
        let r = feats(40);
        let (p2, _) = augment_inputs(&p, &r, &SpecAugmentConfig::default(), 5);
        assert_eq!(p2, p);
    }

    #[test]
    fn time_budget_is_five_percent_rounded_down() {
        let cfg = SpecAugmentConfig::default();
        assert_eq!(cfg.time_budget(98), 4);
        assert_eq!(cfg.time_budget(100), 5);
        assert_eq!(cfg.time_budget(10), 0);
    }
}
