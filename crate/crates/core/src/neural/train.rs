use std::time::Instant;

use ndarray::{s, Array2};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::config::{lambda_at, LossSchedule, ModelConfig, SamplingSource, TrainConfig};
use super::loss::{latent_loss_tape, spectral_loss_tape};
use super::model::{forward_tape, init_params, is_trainable, sampling_mask, FeatureStats, Mode};
use crate::asr_proxy::{time_major, ProxyRecognizer};
use crate::autodiff::{Adam, ParamStore, Tape};
use crate::data::specaug::augment_inputs;
use crate::data::UtteranceExample;
use crate::error::{AecError, Result};
use crate::seed::{derive_seed, rng_for};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub spectral: f64,
    pub latent: f64,
    pub lambda: f64,
    pub total: f64,
    pub wall_ms: u64,
}

/// Everything needed to continue training: parameters, optimizer moments
/// and the number of completed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ParamStore<f32>,
    pub adam: Adam,
    pub step: u64,
}

impl TrainState {
    pub fn fresh(examples: &[UtteranceExample], model: &ModelConfig, train: &TrainConfig) -> Self {
        let stats = FeatureStats::from_examples(examples);
        TrainState {
            params: init_params(model, &stats, train.seed),
            adam: Adam::new(train.adam),
            step: 0,
        }
    }
}

/// Item indices of the batch for `step`.
pub fn batch_indices(seed: u64, step: u64, n: usize, batch: usize) -> Vec<usize> {
    let mut rng = rng_for(seed, "batch", step);
    let mut idx = sample(&mut rng, n, batch.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

/// Time-major model inputs and targets for a batch, after per-item
/// augmentation and cropping to the shortest item. Also returns the
/// sampling masks.
pub(crate) fn assemble_batch(
    examples: &[UtteranceExample],
    idx: &[usize],
    cfg: &TrainConfig,
    step: u64,
) -> (Array2<f32>, Array2<f32>, Vec<Vec<bool>>) {
    let t = idx.iter().map(|&i| examples[i].num_frames()).min().unwrap();
    let mut inputs = Vec::with_capacity(idx.len());
    let mut targets = Vec::with_capacity(idx.len());
    let mut masks = Vec::with_capacity(idx.len());
    for (j, &i) in idx.iter().enumerate() {
        let ex = &examples[i];
        let item = step * cfg.batch_size as u64 + j as u64;
        let (p, r) = match &cfg.specaugment {
            Some(sa) => {
                let (p, r) = augment_inputs(&ex.probe_feats, &ex.reference_feats, sa, derive_seed(cfg.seed, "specaug", item));
                (p.frames, r.frames)
            }
            None => (ex.probe_feats.frames.clone(), ex.reference_feats.frames.clone()),
        };
        let p = p.slice(s![..t, ..]);
        let r = r.slice(s![..t, ..]);
        inputs.push(ndarray::concatenate(ndarray::Axis(1), &[p, r]).expect("equal frames"));
        targets.push(ex.target_feats.frames.slice(s![..t, ..]).to_owned());
        masks.push(if cfg.scheduled_sampling {
            sampling_mask(derive_seed(cfg.seed, "scheduled-sampling", item), t)
        } else {
            vec![false; t]
        });
    }
    let inputs: Vec<&Array2<f32>> = inputs.iter().collect();
    let targets: Vec<&Array2<f32>> = targets.iter().collect();
    (time_major(&inputs), time_major(&targets), masks)
}

fn clip(grads: &mut ParamStore<f32>, max_norm: f64) {
    let norm = grads
        .iter()
        .map(|(_, g)| g.iter().map(|v| (*v as f64).powi(2)).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = (max_norm / norm) as f32;
        for (_, g) in grads.iter_mut() {
            g.mapv_inplace(|v| v * s);
        }
    }
}

/// Runs one optimization step on `state`.
pub fn train_step(
    state: &mut TrainState,
    examples: &[UtteranceExample],
    model: &ModelConfig,
    train: &TrainConfig,
    sched: &LossSchedule,
    proxy: Option<&ProxyRecognizer>,
) -> Result<LogRecord> {
    let start = Instant::now();
    let step = state.step;
    let idx = batch_indices(train.seed, step, examples.len(), train.batch_size);
    let (inputs, targets, masks) = assemble_batch(examples, &idx, train, step);
    let batch = idx.len();
    let lambda = if proxy.is_some() { lambda_at(step, sched) } else { 0.0 };

    let mode = Mode::Train {
        dropout_seed: derive_seed(train.seed, "dropout", step),
    };
    let substitutes = match (train.scheduled_sampling, train.sampling_source) {
        (true, SamplingSource::FreeRunning) => {
            let mut tape = Tape::<f32>::new();
            let p = state.params.bind(&mut tape, |_| false);
            let x = tape.constant(inputs.clone());
            let free = vec![vec![true; inputs.nrows() / batch]; batch];
            let fwd = forward_tape(&mut tape, model, &p, x, None, &free, batch, mode, None);
            Some(tape.value(fwd.y_pre).clone())
        }
        _ => None,
    };

    let mut tape = Tape::<f32>::new();
    let p = state.params.bind(&mut tape, is_trainable);
    let x = tape.constant(inputs);
    let fwd = forward_tape(
        &mut tape,
        model,
        &p,
        x,
        Some(&targets),
        &masks,
        batch,
        mode,
        substitutes.as_ref(),
    );
    let target = tape.constant(targets);
    let spectral = spectral_loss_tape(&mut tape, fwd.y_pre, fwd.y_post, target);
    let (loss, latent) = match proxy {
        Some(enc) => {
            let latent = latent_loss_tape(&mut tape, enc, fwd.y_post, target, batch);
            let weighted = tape.scale(latent, lambda as f32);
            (tape.add(spectral, weighted), Some(latent))
        }
        None => (spectral, None),
    };
    let spectral_v = tape.scalar(spectral) as f64;
    let latent_v = latent.map(|l| tape.scalar(l) as f64).unwrap_or(0.0);
    let total_v = tape.scalar(loss) as f64;
    if !total_v.is_finite() {
        return Err(AecError::Diverged { step });
    }
    let grads = tape.backward(loss);
    let mut g = state.params.collect_grads(&p, &grads);
    let names: Vec<String> = g.names().filter(|n| !is_trainable(n)).cloned().collect();
    let mut trainable = ParamStore::new();
    for (k, v) in g.iter_mut() {
        if !names.contains(k) {
            trainable.insert(k.clone(), std::mem::take(v));
        }
    }
    if let Some(c) = train.grad_clip {
        clip(&mut trainable, c);
    }
    state.adam.update(&mut state.params, &trainable);
    for (l, (mean, var)) in fwd.bn_stats.iter().enumerate() {
        let mom = train.bn_momentum as f32;
        let rm = state.params.get_mut(&format!("postnet.{l}.bn.mean")).expect("bn mean");
        ndarray::Zip::from(rm).and(mean).for_each(|r, &m| *r = (1.0 - mom) * *r + mom * m);
        let rv = state.params.get_mut(&format!("postnet.{l}.bn.var")).expect("bn var");
        ndarray::Zip::from(rv).and(var).for_each(|r, &v| *r = (1.0 - mom) * *r + mom * v);
    }
    if !state.params.all_finite() {
        return Err(AecError::Diverged { step });
    }
    state.step += 1;
    Ok(LogRecord {
        step,
        spectral: spectral_v,
        latent: latent_v,
        lambda,
        total: total_v,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Trains until `train.max_steps` steps have completed, continuing from
/// `state`. `on_step` sees each log record as it is produced.
pub fn train(
    examples: &[UtteranceExample],
    model: &ModelConfig,
    train: &TrainConfig,
    sched: &LossSchedule,
    proxy: Option<&ProxyRecognizer>,
    state: Option<TrainState>,
    mut on_step: impl FnMut(&LogRecord, &TrainState),
) -> Result<(TrainState, Vec<LogRecord>)> {
    if examples.is_empty() {
        return Err(AecError::InvalidConfig("training set is empty".into()));
    }
    model.validate()?;
    train.validate()?;
    sched.validate()?;
    if examples[0].probe_feats.num_mels() != model.mel_dim {
        return Err(AecError::InvalidConfig(format!(
            "model.mel_dim is {} but features have {} channels",
            model.mel_dim,
            examples[0].probe_feats.num_mels()
        )));
    }
    if let Some(p) = proxy {
        if p.meta.mel.num_mels != model.mel_dim {
            return Err(AecError::InvalidConfig("proxy recognizer uses a different mel size".into()));
        }
    }
    let mut state = state.unwrap_or_else(|| TrainState::fresh(examples, model, train));
    let mut log = Vec::new();
    while state.step < train.max_steps {
        let rec = train_step(&mut state, examples, model, train, sched, proxy)?;
        on_step(&rec, &state);
        log.push(rec);
    }
    Ok((state, log))
}
