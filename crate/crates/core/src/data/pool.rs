use serde::{Deserialize, Serialize};

use super::dataset::SourcePool;
use super::source::{colored_noise, speech_like};
use crate::asr_proxy::make_keyword_corpus;
use crate::error::{AecError, Result};
use crate::seed::rng_for;

/// Sizes of the generated source pool: labeled keyword targets, speech-like
/// playback references and colored background noises.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    pub keyword_classes: usize,
    pub keywords_per_class: usize,
    pub references: usize,
    pub reference_secs: f64,
    pub noises: usize,
    pub noise_secs: f64,
    pub sample_rate: u32,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            keyword_classes: 10,
            keywords_per_class: 40,
            references: 40,
            reference_secs: 3.0,
            noises: 40,
            noise_secs: 2.0,
            sample_rate: 16_000,
        }
    }
}

impl SourcePool {
    /// Generates a pool deterministically from `seed`.
    pub fn generate(cfg: &PoolConfig, seed: u64) -> Result<Self> {
        if cfg.keyword_classes == 0 || cfg.keywords_per_class == 0 || cfg.references == 0 || cfg.noises == 0 {
            return Err(AecError::InvalidConfig("source pool sizes must be positive".into()));
        }
        let kw = make_keyword_corpus(seed, cfg.keyword_classes, cfg.keywords_per_class, cfg.sample_rate);
        let targets = kw.waves.into_iter().zip(kw.labels.into_iter().map(Some)).collect();
        let references = (0..cfg.references)
            .map(|i| speech_like(cfg.reference_secs, cfg.sample_rate, &mut rng_for(seed, "pool-reference", i as u64)))
            .collect();
        let noises = (0..cfg.noises)
            .map(|i| colored_noise(cfg.noise_secs, cfg.sample_rate, &mut rng_for(seed, "pool-noise", i as u64)))
            .collect();
        Ok(SourcePool {
            targets,
            references,
            noises,
        })
    }
}
