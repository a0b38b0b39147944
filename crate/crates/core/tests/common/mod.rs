#![allow(dead_code)]

use std::path::Path;

use aec_core::asr_proxy::{make_keyword_corpus, train_proxy, ProxyArch, ProxyRecognizer, ProxyTrainConfig};
use aec_core::baselines::{train_irm_predictor, IrmPredictorConfig};
use aec_core::data::{synthesize, DatasetPlan, ExampleRecord, PoolConfig, SourcePool, Split, SplitCounts, SynthSettings, UtteranceExample};
use aec_core::eval::{Artifacts, ProxySpec};
use aec_core::neural::{train, LossSchedule, ModelConfig, NeuralAec, NeuralMeta, TrainConfig};
use aec_core::room::RoomConstraints;
use aec_core::seed::rng_for;
use aec_core::signal::{MelConfig, Role, StftConfig, Waveform};
use rand::Rng;

pub const RATE: u32 = 16_000;

pub fn noise(len: usize, seed: u64) -> Vec<f32> {
    let mut rng = rng_for(seed, "test-noise", 0);
    (0..len).map(|_| rng.random_range(-0.5f32..0.5)).collect()
}

pub fn wave(samples: Vec<f32>, role: Role) -> Waveform {
    Waveform::new(samples, RATE, role).unwrap()
}

pub fn mel(num_mels: usize) -> MelConfig {
    MelConfig {
        num_mels,
        ..MelConfig::default()
    }
}

pub fn small_pool(seed: u64) -> SourcePool {
    let cfg = PoolConfig {
        keyword_classes: 3,
        keywords_per_class: 4,
        references: 6,
        reference_secs: 2.0,
        noises: 6,
        noise_secs: 1.5,
        sample_rate: RATE,
    };
    SourcePool::generate(&cfg, seed).unwrap()
}

pub fn small_set(seed: u64, counts: SplitCounts, num_mels: usize, keep_waveforms: bool) -> Vec<(ExampleRecord, UtteranceExample)> {
    let settings = SynthSettings {
        mel: mel(num_mels),
        keep_waveforms,
        ..SynthSettings::default()
    };
    let plan = DatasetPlan {
        counts,
        ..DatasetPlan::default()
    };
    synthesize(&small_pool(seed), &plan, &RoomConstraints::default(), &settings, seed).unwrap()
}

pub fn split_of(set: &[(ExampleRecord, UtteranceExample)], split: Split) -> Vec<UtteranceExample> {
    set.iter().filter(|(r, _)| r.split == split).map(|(_, e)| e.clone()).collect()
}

pub fn tiny_model(mel_dim: usize) -> ModelConfig {
    ModelConfig {
        encoder_layers: 1,
        encoder_width: 6,
        decoder_width: 6,
        mel_dim,
        prenet_layers: 1,
        prenet_width: 5,
        prenet_dropout: 0.5,
        postnet_layers: 2,
        postnet_filters: 4,
        postnet_kernel: 3,
    }
}

/// A quickly trained recognizer over a small keyword corpus.
pub fn tiny_proxy(arch: ProxyArch, num_mels: usize, steps: usize) -> ProxyRecognizer {
    let corpus = make_keyword_corpus(17, 3, 6, RATE);
    let stft = StftConfig::default();
    let mel = mel(num_mels);
    let feats = corpus.features(&stft, &mel).unwrap();
    let cfg = ProxyTrainConfig {
        layers: 2,
        width: 6,
        kernel: 3,
        steps,
        batch_size: 4,
        ..ProxyTrainConfig::default()
    };
    train_proxy(&feats, &corpus.labels, 3, arch, &cfg, &stft, &mel, 5).unwrap()
}

pub fn neural_meta(model: ModelConfig, train: TrainConfig, schedule: LossSchedule, mel: MelConfig, latent: bool) -> NeuralMeta {
    NeuralMeta {
        model,
        train,
        schedule,
        stft: StftConfig::default(),
        mel,
        sample_rate: RATE,
        max_lag: 800,
        step: 0,
        latent_loss: latent,
        config_hash: String::new(),
    }
}

/// Trains every checkpoint the standard experiment needs, briefly, and
/// writes them under `dir`.
pub fn write_artifacts(dir: &Path, train_set: &[UtteranceExample], num_mels: usize, steps: u64) -> Artifacts {
    let model = tiny_model(num_mels);
    let mel = mel(num_mels);
    let sched = LossSchedule { lambda_final: 1.0, ramp_steps: steps / 2 };
    let proxy_a = tiny_proxy(ProxyArch::A, num_mels, 20);
    let proxy_b = tiny_proxy(ProxyArch::B, num_mels, 20);
    let mut art = Artifacts::default();
    for (name, p) in [("a", &proxy_a), ("b", &proxy_b)] {
        let path = dir.join(format!("proxy_{name}.ckpt"));
        p.save(&path).unwrap();
        art.proxies.push(ProxySpec { name: name.into(), checkpoint: path });
    }
    let base = TrainConfig { batch_size: 4, max_steps: steps, seed: 3, ..TrainConfig::default() };
    let variants = [
        ("neural_full", base.clone(), Some(&proxy_a)),
        ("neural_no_latent", base.clone(), None),
        ("neural_no_specaugment", TrainConfig { specaugment: None, ..base.clone() }, None),
        ("neural_no_synthetic", TrainConfig { specaugment: None, seed: 4, ..base.clone() }, None),
    ];
    let mut paths = Vec::new();
    for (name, tc, proxy) in variants {
        let (state, _) = train(train_set, &model, &tc, &sched, proxy, None, |_, _| {}).unwrap();
        let path = dir.join(format!("{name}.ckpt"));
        NeuralAec::from_state(neural_meta(model, tc, sched, mel, proxy.is_some()), &state).save(&path).unwrap();
        paths.push(path);
    }
    art.neural_full = Some(paths[0].clone());
    art.neural_no_latent = Some(paths[1].clone());
    art.neural_no_specaugment = Some(paths[2].clone());
    art.neural_no_synthetic = Some(paths[3].clone());
    let irm = IrmPredictorConfig { hidden: 16, steps: 50, ..IrmPredictorConfig::default() };
    let pred = train_irm_predictor(train_set, &irm, &StftConfig::default(), 800, 1, "").unwrap();
    let path = dir.join("irm.ckpt");
    pred.save(&path).unwrap();
    art.irm_predictor = Some(path);
    art
}
