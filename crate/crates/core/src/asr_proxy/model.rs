use std::path::Path;

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::layers::{conv_time, dense, init_dense, init_lstm, lstm_stack, split_frames, LstmVars};
use crate::autodiff::{Adam, AdamConfig, ParamStore, Real, Tape, Var};
use crate::checkpoint::{self, PROXY_MAGIC};
use crate::error::{AecError, Result};
use crate::seed::rng_for;
use crate::signal::{MelConfig, StftConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProxyArch {
    /// Stacked temporal convolutions.
    A,
    /// Stacked unidirectional LSTMs.
    B,
}

impl ProxyArch {
    pub fn name(self) -> &'static str {
        match self {
            ProxyArch::A => "proxy-a",
            ProxyArch::B => "proxy-b",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyTrainConfig {
    pub layers: usize,
    pub width: usize,
    pub kernel: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Uniform waveform gain range in dB applied per training example.
    pub gain_db: (f64, f64),
    pub held_out_fraction: f64,
}

impl Default for ProxyTrainConfig {
    fn default() -> Self {
        ProxyTrainConfig {
            layers: 3,
            width: 32,
            kernel: 5,
            steps: 600,
            batch_size: 16,
            adam: AdamConfig {
                lr: 3e-3,
                ..AdamConfig::default()
            },
            gain_db: (-20.0, 6.0),
            held_out_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyMeta {
    pub arch: ProxyArch,
    pub num_classes: usize,
    pub train: ProxyTrainConfig,
    pub stft: StftConfig,
    pub mel: MelConfig,
    pub seed: u64,
    pub held_out_accuracy: f64,
    pub frozen: bool,
}

/// A small keyword classifier whose encoder doubles as the frozen feature
/// extractor for the latent loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyRecognizer {
    pub meta: ProxyMeta,
    pub params: ParamStore<f32>,
}

const KIND: &str = "proxy_recognizer";

fn init_params(arch: ProxyArch, cfg: &ProxyTrainConfig, mel: usize, k: usize, seed: u64) -> ParamStore<f32> {
    let mut rng = rng_for(seed, "proxy-init", arch as u64);
    let mut p = ParamStore::new();
    let mut input = mel;
    for l in 0..cfg.layers {
        match arch {
            ProxyArch::A => init_dense(&mut p, &mut rng, &format!("enc.{l}"), cfg.kernel * input, cfg.width),
            ProxyArch::B => init_lstm(&mut p, &mut rng, &format!("enc.{l}"), input, cfg.width),
        }
        input = cfg.width;
    }
    init_dense(&mut p, &mut rng, "head", cfg.width, k);
    p.insert("norm.shift", Array2::zeros((1, mel)));
    p.insert("norm.scale", Array2::ones((1, mel)));
    p
}

fn is_trainable(name: &str) -> bool {
    !name.starts_with("norm.")
}

/// Encoder over time-major (T·B)×M features: same T out, width H.
fn encode_bound<F: Real>(tape: &mut Tape<F>, arch: ProxyArch, layers: usize, width: usize, kernel: usize, p: &crate::autodiff::Bound, x: Var, batch: usize) -> Var {
    let x = tape.add_row(x, p.var("norm.shift"));
    let mut h = tape.mul_row(x, p.var("norm.scale"));
    match arch {
        ProxyArch::A => {
            for l in 0..layers {
                let y = conv_time(tape, h, batch, kernel, p.var(&format!("enc.{l}.w")), p.var(&format!("enc.{l}.b")));
                h = tape.tanh(y);
            }
            h
        }
        ProxyArch::B => {
            let frames = split_frames(tape, h, batch);
            let vars: Vec<LstmVars> = (0..layers).map(|l| LstmVars::bind(p, &format!("enc.{l}"), width)).collect();
            let out = lstm_stack(tape, &vars, &frames, batch);
            tape.concat_rows(&out)
        }
    }
}

fn logits_bound<F: Real>(tape: &mut Tape<F>, p: &crate::autodiff::Bound, latents: Var, batch: usize) -> Var {
    let pooled = tape.mean_pool_time(latents, batch);
    dense(tape, pooled, p.var("head.w"), p.var("head.b"))
}

/// Stacks equal-length T×M matrices into a time-major (T·B)×M matrix.
pub fn time_major(items: &[&Array2<f32>]) -> Array2<f32> {
    let (t, m) = items[0].dim();
    let b = items.len();
    let mut out = Array2::zeros((t * b, m));
    for (j, it) in items.iter().enumerate() {
        for r in 0..t {
            out.row_mut(r * b + j).assign(&it.row(r));
        }
    }
    out
}

/// Inverse of [`time_major`].
pub fn batch_major(x: &Array2<f32>, batch: usize) -> Vec<Array2<f32>> {
    let t = x.nrows() / batch;
    (0..batch)
        .map(|j| {
            let mut out = Array2::zeros((t, x.ncols()));
            for r in 0..t {
                out.row_mut(r).assign(&x.row(r * batch + j));
            }
            out
        })
        .collect()
}

fn gain_shift(feats: &Array2<f32>, gain_db: f64, floor: f32) -> Array2<f32> {
    let shift = (gain_db / 20.0 * std::f64::consts::LN_10) as f32;
    feats.mapv(|v| if v <= floor { floor } else { (v + shift).max(floor) })
}

impl ProxyRecognizer {
    pub fn arch(&self) -> ProxyArch {
        self.meta.arch
    }

    pub fn latent_width(&self) -> usize {
        self.meta.train.width
    }

    /// Encodes time-major features on `tape` with every proxy tensor bound
    /// as a constant, so no gradient reaches the proxy.
    pub fn encode<F: Real>(&self, tape: &mut Tape<F>, x: Var, batch: usize) -> Var {
        let p = self.params.cast::<F>().bind(tape, |_| false);
        let t = &self.meta.train;
        encode_bound(tape, self.meta.arch, t.layers, t.width, t.kernel, &p, x, batch)
    }

    /// Encoder latents (T×H) for one feature matrix.
    pub fn latents(&self, feats: &Array2<f32>) -> Array2<f32> {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(feats.clone());
        let z = self.encode(&mut tape, x, 1);
        tape.value(z).clone()
    }

    /// Class scores for one feature matrix.
    pub fn logits(&self, feats: &Array2<f32>) -> Vec<f32> {
        let mut tape = Tape::<f32>::new();
        let p = self.params.bind(&mut tape, |_| false);
        let x = tape.constant(feats.clone());
        let t = &self.meta.train;
        let z = encode_bound(&mut tape, self.meta.arch, t.layers, t.width, t.kernel, &p, x, 1);
        let l = logits_bound(&mut tape, &p, z, 1);
        tape.value(l).row(0).to_vec()
    }

    pub fn predict(&self, feats: &Array2<f32>) -> usize {
        let l = self.logits(feats);
        (0..l.len()).max_by(|&a, &b| l[a].total_cmp(&l[b]).then(b.cmp(&a))).unwrap()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, PROXY_MAGIC, KIND, &self.meta, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, params) = checkpoint::load(path, PROXY_MAGIC, KIND)?;
        Ok(ProxyRecognizer { meta, params })
    }
}

/// 1 − accuracy of `recognizer` on labeled feature matrices.
pub fn proxy_error_rate(feats: &[Array2<f32>], labels: &[usize], recognizer: &ProxyRecognizer) -> f64 {
    if feats.is_empty() {
        return 0.0;
    }
    let correct = feats
        .iter()
        .zip(labels)
        .filter(|(f, &l)| recognizer.predict(f) == l)
        .count();
    1.0 - correct as f64 / feats.len() as f64
}

/// Trains a proxy recognizer with cross-entropy on the first part of each
/// class and reports accuracy on the held-out rest. The returned model is
/// frozen.
#[allow(clippy::too_many_arguments)]
pub fn train_proxy(
    feats: &[Array2<f32>],
    labels: &[usize],
    num_classes: usize,
    arch: ProxyArch,
    cfg: &ProxyTrainConfig,
    stft: &StftConfig,
    mel: &MelConfig,
    seed: u64,
) -> Result<ProxyRecognizer> {
    if feats.len() != labels.len() || feats.is_empty() {
        return Err(AecError::ShapeMismatch("features and labels differ in count".into()));
    }
    let mut per_class = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(AecError::InvalidConfig(format!("label {l} out of range")));
        }
        per_class[l].push(i);
    }
    let (mut train_idx, mut held_idx) = (Vec::new(), Vec::new());
    for idx in &per_class {
        let held = ((idx.len() as f64) * cfg.held_out_fraction).round() as usize;
        let cut = idx.len() - held.min(idx.len().saturating_sub(1));
        train_idx.extend_from_slice(&idx[..cut]);
        held_idx.extend_from_slice(&idx[cut..]);
    }
    let m = feats[0].ncols();
    let mut params = init_params(arch, cfg, m, num_classes, seed);
    // standardize with training-set statistics
    let mut sum = ndarray::Array1::<f64>::zeros(m);
    let mut sq = ndarray::Array1::<f64>::zeros(m);
    let mut n = 0.0;
    for &i in &train_idx {
        for row in feats[i].rows() {
            let r = row.mapv(|v| v as f64);
            sq += &r.mapv(|v| v * v);
            sum += &r;
            n += 1.0;
        }
    }
    let mean = &sum / n;
    let std = (&sq / n - &mean.mapv(|v| v * v)).mapv(|v| v.max(1e-6).sqrt());
    params.insert("norm.shift", mean.mapv(|v| -v as f32).insert_axis(Axis(0)));
    params.insert("norm.scale", std.mapv(|v| (1.0 / v) as f32).insert_axis(Axis(0)));

    let floor = mel.floor_value();
    let mut adam = Adam::new(cfg.adam);
    let t_min = feats.iter().map(|f| f.nrows()).min().unwrap();
    for step in 0..cfg.steps {
        let mut rng = rng_for(seed, "proxy-batch", step as u64);
        let mut idx = train_idx.clone();
        idx.shuffle(&mut rng);
        idx.truncate(cfg.batch_size.min(idx.len()));
        let batch: Vec<Array2<f32>> = idx
            .iter()
            .map(|&i| {
                let g = rng.random_range(cfg.gain_db.0..=cfg.gain_db.1);
                gain_shift(&feats[i].slice(s![..t_min, ..]).to_owned(), g, floor)
            })
            .collect();
        let refs: Vec<&Array2<f32>> = batch.iter().collect();
        let x_val = time_major(&refs);
        let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let mut tape = Tape::<f32>::new();
        let p = params.bind(&mut tape, is_trainable);
        let x = tape.constant(x_val);
        let z = encode_bound(&mut tape, arch, cfg.layers, cfg.width, cfg.kernel, &p, x, idx.len());
        let logits = logits_bound(&mut tape, &p, z, idx.len());
        let loss = tape.softmax_cross_entropy(logits, &batch_labels);
        if !tape.scalar(loss).is_finite() {
            return Err(AecError::Diverged { step: step as u64 });
        }
        let grads = tape.backward(loss);
        let g = params.collect_grads(&p, &grads);
        let g = filter_trainable(g);
        adam.update(&mut params, &g);
    }
    let mut rec = ProxyRecognizer {
        meta: ProxyMeta {
            arch,
            num_classes,
            train: cfg.clone(),
            stft: *stft,
            mel: *mel,
            seed,
            held_out_accuracy: 0.0,
            frozen: true,
        },
        params,
    };
    let held_feats: Vec<Array2<f32>> = held_idx.iter().map(|&i| feats[i].clone()).collect();
    let held_labels: Vec<usize> = held_idx.iter().map(|&i| labels[i]).collect();
    rec.meta.held_out_accuracy = 1.0 - proxy_error_rate(&held_feats, &held_labels, &rec);
    Ok(rec)
}

fn filter_trainable(g: ParamStore<f32>) -> ParamStore<f32> {
    let mut out = ParamStore::new();
    for (k, v) in g.iter() {
        if is_trainable(k) {
            out.insert(k.clone(), v.clone());
        }
    }
    out
}
