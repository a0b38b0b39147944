use ndarray::{concatenate, Array2, Array3, Axis};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::autodiff::layers::{conv_time, dense, init_dense, init_lstm, lstm_step, LstmState, LstmVars};
use crate::autodiff::{Bound, ParamStore, Real, Tape, Var};
use crate::data::UtteranceExample;
use crate::error::{AecError, Result};
use crate::seed::rng_for;
use crate::signal::MelConfig;

const BN_EPS: f64 = 1e-5;

/// Per-channel feature statistics used to standardize model inputs and to
/// scale its outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub input_mean: Vec<f32>,
    pub input_std: Vec<f32>,
    pub output_mean: Vec<f32>,
    pub output_std: Vec<f32>,
    /// Smallest value a log-mel entry can take.
    pub floor: f32,
}

impl FeatureStats {
    pub fn identity(mel_dim: usize) -> Self {
        FeatureStats {
            input_mean: vec![0.0; 2 * mel_dim],
            input_std: vec![1.0; 2 * mel_dim],
            output_mean: vec![0.0; mel_dim],
            output_std: vec![1.0; mel_dim],
            floor: MelConfig::default().floor_value(),
        }
    }

    /// Means and standard deviations over every frame of `examples`:
    /// probe and reference channels for the input, target for the output.
    pub fn from_examples(examples: &[UtteranceExample]) -> Self {
        let m = examples[0].probe_feats.num_mels();
        let stats = |mats: &mut dyn Iterator<Item = &Array2<f32>>| {
            let mut sum = vec![0.0f64; m];
            let mut sq = vec![0.0f64; m];
            let mut n = 0.0;
            for a in mats {
                for row in a.rows() {
                    for (j, &v) in row.iter().enumerate() {
                        sum[j] += v as f64;
                        sq[j] += (v as f64).powi(2);
                    }
                    n += 1.0;
                }
            }
            let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
            let std: Vec<f32> = sq
                .iter()
                .zip(&mean)
                .map(|(q, mu)| (q / n - mu * mu).max(1e-4).sqrt() as f32)
                .collect();
            (mean.iter().map(|&v| v as f32).collect::<Vec<f32>>(), std)
        };
        let (pm, ps) = stats(&mut examples.iter().map(|e| &e.probe_feats.frames));
        let (rm, rs) = stats(&mut examples.iter().map(|e| &e.reference_feats.frames));
        let (tm, ts) = stats(&mut examples.iter().map(|e| &e.target_feats.frames));
        FeatureStats {
            input_mean: [pm, rm].concat(),
            input_std: [ps, rs].concat(),
            output_mean: tm,
            output_std: ts,
            floor: examples[0].target_feats.mel_config.floor_value(),
        }
    }
}

fn row(v: impl IntoIterator<Item = f32>) -> Array2<f32> {
    let v: Vec<f32> = v.into_iter().collect();
    Array2::from_shape_vec((1, v.len()), v).expect("row vector")
}

/// Fresh parameters. The last post-net layer starts at zero so the initial
/// post-net is the identity.
pub fn init_params(cfg: &ModelConfig, stats: &FeatureStats, seed: u64) -> ParamStore<f32> {
    let mut rng = rng_for(seed, "model-init", 0);
    let mut p = ParamStore::new();
    let m = cfg.mel_dim;
    let mut input = 2 * m;
    for l in 0..cfg.encoder_layers {
        init_lstm(&mut p, &mut rng, &format!("enc.{l}"), input, cfg.encoder_width);
        input = cfg.encoder_width;
    }
    let mut input = m;
    for l in 0..cfg.prenet_layers {
        init_dense(&mut p, &mut rng, &format!("prenet.{l}"), input, cfg.prenet_width);
        input = cfg.prenet_width;
    }
    init_lstm(&mut p, &mut rng, "dec.lstm", cfg.prenet_width + cfg.encoder_width, cfg.decoder_width);
    init_dense(&mut p, &mut rng, "dec.proj", cfg.decoder_width + cfg.encoder_width, m);
    let mut input = m;
    for l in 0..cfg.postnet_layers {
        let last = l + 1 == cfg.postnet_layers;
        let out = if last { m } else { cfg.postnet_filters };
        init_dense(&mut p, &mut rng, &format!("postnet.{l}"), cfg.postnet_kernel * input, out);
        if last {
            p.insert(format!("postnet.{l}.w"), Array2::zeros((cfg.postnet_kernel * input, out)));
        } else {
            p.insert(format!("postnet.{l}.bn.gamma"), Array2::ones((1, out)));
            p.insert(format!("postnet.{l}.bn.beta"), Array2::zeros((1, out)));
            p.insert(format!("postnet.{l}.bn.mean"), Array2::zeros((1, out)));
            p.insert(format!("postnet.{l}.bn.var"), Array2::ones((1, out)));
        }
        input = out;
    }
    p.insert("norm.in_shift", row(stats.input_mean.iter().map(|v| -v)));
    p.insert("norm.in_scale", row(stats.input_std.iter().map(|v| 1.0 / v)));
    p.insert("norm.out_mean", row(stats.output_mean.iter().copied()));
    p.insert("norm.out_std", row(stats.output_std.iter().copied()));
    p.insert("norm.floor", Array2::from_elem((1, m), stats.floor));
    p
}

/// Whether the optimizer updates a tensor. Normalization constants and
/// batch-norm running statistics are not trained.
pub fn is_trainable(name: &str) -> bool {
    !(name.starts_with("norm.") || name.ends_with(".bn.mean") || name.ends_with(".bn.var"))
}

/// Checks that `params` has every tensor `cfg` needs with the right shape.
pub fn check_params(cfg: &ModelConfig, params: &ParamStore<f32>) -> Result<()> {
    let expected = init_params(cfg, &FeatureStats::identity(cfg.mel_dim), 0);
    for (name, t) in expected.iter() {
        match params.get(name) {
            Some(p) if p.dim() == t.dim() => {}
            Some(p) => {
                return Err(AecError::ShapeMismatch(format!(
                    "{name}: expected {:?}, found {:?}",
                    t.dim(),
                    p.dim()
                )))
            }
            None => return Err(AecError::ShapeMismatch(format!("missing tensor {name}"))),
        }
    }
    if !params.all_finite() {
        return Err(AecError::ShapeMismatch("non-finite parameter".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Dropout on, batch statistics in the post-net.
    Train { dropout_seed: u64 },
    /// Dropout off, running statistics in the post-net.
    Inference,
}

/// Encoder over time-major (T·B)×2M raw features; returns one B×H node per
/// frame from the top layer.
pub fn encoder_tape<F: Real>(tape: &mut Tape<F>, cfg: &ModelConfig, p: &Bound, x: Var, batch: usize) -> Vec<Var> {
    let x = tape.add_row(x, p.var("norm.in_shift"));
    let x = tape.mul_row(x, p.var("norm.in_scale"));
    let frames = tape.value(x).nrows() / batch;
    let mut seq: Vec<Var> = (0..frames).map(|t| tape.slice_rows(x, t * batch, (t + 1) * batch)).collect();
    for l in 0..cfg.encoder_layers {
        let layer = LstmVars::bind(p, &format!("enc.{l}"), cfg.encoder_width);
        let mut state = LstmState::zeros(tape, batch, cfg.encoder_width);
        seq = seq
            .iter()
            .map(|&x| {
                state = lstm_step(tape, &layer, x, state);
                state.h
            })
            .collect();
    }
    seq
}

/// Standardizes a raw output-space frame.
fn to_internal<F: Real>(tape: &mut Tape<F>, p: &Bound, frame: Var) -> Var {
    let mean = tape.value(p.var("norm.out_mean")).mapv(|v| -v);
    let inv = tape
        .value(p.var("norm.out_std"))
        .mapv(|v| if v > F::zero() { F::one() / v } else { F::zero() });
    let shift = tape.constant(mean);
    let inv = tape.constant(inv);
    let x = tape.add_row(frame, shift);
    tape.mul_row(x, inv)
}

fn to_output<F: Real>(tape: &mut Tape<F>, p: &Bound, z: Var) -> Var {
    let y = tape.mul_row(z, p.var("norm.out_std"));
    tape.add_row(y, p.var("norm.out_mean"))
}

/// One decoder step on the tape: pre-net of the previous raw frame,
/// concatenated with the encoder frame, through the recurrence and the
/// projection. Returns the standardized prediction and the new state.
#[allow(clippy::too_many_arguments)]
pub fn decoder_step_tape<F: Real>(
    tape: &mut Tape<F>,
    cfg: &ModelConfig,
    p: &Bound,
    prev: Var,
    enc_t: Var,
    state: LstmState,
    dropout: Option<&mut rand_chacha::ChaCha8Rng>,
) -> (Var, LstmState) {
    // frames fed back from the model may undershoot the log floor, which no
    // real frame does
    let neg_floor = tape.value(p.var("norm.floor")).mapv(|v| -v);
    let neg_floor = tape.constant(neg_floor);
    let above = tape.add_row(prev, neg_floor);
    let above = tape.relu(above);
    let prev = tape.add_row(above, p.var("norm.floor"));
    let mut h = to_internal(tape, p, prev);
    let mut dropout = dropout;
    for l in 0..cfg.prenet_layers {
        let y = dense(tape, h, p.var(&format!("prenet.{l}.w")), p.var(&format!("prenet.{l}.b")));
        h = tape.relu(y);
        if let Some(rng) = dropout.as_deref_mut() {
            let keep = 1.0 - cfg.prenet_dropout;
            let scale = F::from_f64c(1.0 / keep);
            let (r, c) = tape.value(h).dim();
            let mask = Array2::from_shape_fn((r, c), |_| if rng.random_bool(keep) { scale } else { F::zero() });
            let mask = tape.constant(mask);
            h = tape.mul(h, mask);
        }
    }
    let x = tape.concat_cols(&[h, enc_t]);
    let layer = LstmVars::bind(p, "dec.lstm", cfg.decoder_width);
    let state = lstm_step(tape, &layer, x, state);
    let hz = tape.concat_cols(&[state.h, enc_t]);
    let z = dense(tape, hz, p.var("dec.proj.w"), p.var("dec.proj.b"));
    (z, state)
}

/// Post-net residual over standardized time-major (T·B)×M frames. Returns
/// the residual and, in training mode, each layer's batch mean and
/// variance.
pub fn postnet_tape<F: Real>(
    tape: &mut Tape<F>,
    cfg: &ModelConfig,
    p: &Bound,
    x: Var,
    batch: usize,
    mode: Mode,
) -> (Var, Vec<(Array2<F>, Array2<F>)>) {
    let mut h = x;
    let mut stats = Vec::new();
    for l in 0..cfg.postnet_layers {
        let y = conv_time(tape, h, batch, cfg.postnet_kernel, p.var(&format!("postnet.{l}.w")), p.var(&format!("postnet.{l}.b")));
        if l + 1 == cfg.postnet_layers {
            h = y;
            break;
        }
        let normed = match mode {
            Mode::Train { .. } => {
                let (n, mean, var) = tape.normalize_columns(y, F::from_f64c(BN_EPS));
                stats.push((mean, var));
                n
            }
            Mode::Inference => {
                let mean = tape.value(p.var(&format!("postnet.{l}.bn.mean"))).mapv(|v| -v);
                let inv = tape
                    .value(p.var(&format!("postnet.{l}.bn.var")))
                    .mapv(|v| F::one() / (v + F::from_f64c(BN_EPS)).sqrt());
                let mean = tape.constant(mean);
                let inv = tape.constant(inv);
                let c = tape.add_row(y, mean);
                tape.mul_row(c, inv)
            }
        };
        let g = tape.mul_row(normed, p.var(&format!("postnet.{l}.bn.gamma")));
        let g = tape.add_row(g, p.var(&format!("postnet.{l}.bn.beta")));
        h = tape.tanh(g);
    }
    (h, stats)
}

/// Outputs of a batched forward pass, all time-major (T·B)×M in raw
/// log-mel units.
#[derive(Debug, Clone)]
pub struct Forward<F> {
    pub y_pre: Var,
    pub y_post: Var,
    pub bn_stats: Vec<(Array2<F>, Array2<F>)>,
}

/// Batched forward pass.
///
/// `inputs` is time-major (T·B)×2M (probe then reference channels).
/// `targets` is time-major (T·B)×M and is required when any mask entry is
/// false. `masks[b][t]` true means frame `t` of item `b` is decoded from
/// the model's own previous prediction; false means from the ground truth.
/// With `substitutes`, the "own prediction" is taken from that fixed
/// time-major matrix instead of from this pass.
#[allow(clippy::too_many_arguments)]
pub fn forward_tape<F: Real>(
    tape: &mut Tape<F>,
    cfg: &ModelConfig,
    p: &Bound,
    inputs: Var,
    targets: Option<&Array2<F>>,
    masks: &[Vec<bool>],
    batch: usize,
    mode: Mode,
    substitutes: Option<&Array2<F>>,
) -> Forward<F> {
    let enc = encoder_tape(tape, cfg, p, inputs, batch);
    let m = cfg.mel_dim;
    let mut state = LstmState::zeros(tape, batch, cfg.decoder_width);
    let mut rng = match mode {
        Mode::Train { dropout_seed } => Some(rng_for(dropout_seed, "dropout", 0)),
        Mode::Inference => None,
    };
    let mut prev = tape.constant(Array2::zeros((batch, m)));
    let mut outs = Vec::with_capacity(enc.len());
    for (t, &enc_t) in enc.iter().enumerate() {
        let (z, s) = decoder_step_tape(tape, cfg, p, prev, enc_t, state, rng.as_mut());
        state = s;
        let y = to_output(tape, p, z);
        outs.push(z);
        if t + 1 == enc.len() {
            break;
        }
        let free: Vec<bool> = (0..batch).map(|b| masks[b][t + 1]).collect();
        let y = match substitutes {
            Some(sub) => tape.constant(sub.slice(ndarray::s![t * batch..(t + 1) * batch, ..]).to_owned()),
            None => y,
        };
        prev = if free.iter().all(|&f| f) {
            y
        } else {
            let targets = targets.expect("teacher forcing needs targets");
            let gt = targets.slice(ndarray::s![t * batch..(t + 1) * batch, ..]);
            let keep = Array2::from_shape_fn((batch, m), |(b, _)| if free[b] { F::one() } else { F::zero() });
            let gt_part = Array2::from_shape_fn((batch, m), |(b, j)| if free[b] { F::zero() } else { gt[[b, j]] });
            let keep = tape.constant(keep);
            let gt_part = tape.constant(gt_part);
            let own = tape.mul(y, keep);
            tape.add(own, gt_part)
        };
    }
    let z_pre = tape.concat_rows(&outs);
    let (residual, bn_stats) = postnet_tape(tape, cfg, p, z_pre, batch, mode);
    let z_post = tape.add(z_pre, residual);
    let y_pre = to_output(tape, p, z_pre);
    let y_post = to_output(tape, p, z_post);
    Forward { y_pre, y_post, bn_stats }
}

/// Stacks probe and reference features of equal shape into T×M×2.
pub fn stack(probe: &Array2<f32>, reference: &Array2<f32>) -> Result<Array3<f32>> {
    if probe.dim() != reference.dim() {
        return Err(AecError::ShapeMismatch(format!(
            "probe {:?} vs reference {:?}",
            probe.dim(),
            reference.dim()
        )));
    }
    Ok(ndarray::stack(Axis(2), &[probe.view(), reference.view()]).expect("equal shapes"))
}

fn stacked_to_rows(stacked: &Array3<f32>) -> Array2<f32> {
    let (t, m, c) = stacked.dim();
    let mut out = Array2::zeros((t, m * c));
    for ch in 0..c {
        out.slice_mut(ndarray::s![.., ch * m..(ch + 1) * m])
            .assign(&stacked.index_axis(Axis(2), ch));
    }
    out
}

/// Encoder outputs (T×H) for a stacked T×M×2 input.
pub fn encoder_forward(stacked: &Array3<f32>, params: &ParamStore<f32>, cfg: &ModelConfig) -> Result<Array2<f32>> {
    let (t, m, c) = stacked.dim();
    if m != cfg.mel_dim || c != 2 || t == 0 {
        return Err(AecError::ShapeMismatch(format!(
            "expected T×{}×2 input, got {t}×{m}×{c}",
            cfg.mel_dim
        )));
    }
    let mut tape = Tape::<f32>::new();
    let p = params.bind(&mut tape, |_| false);
    let x = tape.constant(stacked_to_rows(stacked));
    let seq = encoder_tape(&mut tape, cfg, &p, x, 1);
    let rows: Vec<_> = seq.iter().map(|v| tape.value(*v).view()).collect();
    Ok(concatenate(Axis(0), &rows).expect("equal widths"))
}

/// Serializable decoder recurrence state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderState {
    pub h: Vec<f32>,
    pub c: Vec<f32>,
}

impl DecoderState {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        DecoderState {
            h: vec![0.0; cfg.decoder_width],
            c: vec![0.0; cfg.decoder_width],
        }
    }
}

/// One inference-mode decoder step. `prev_frame` is the previous raw
/// output frame (the zero vector before the first step); the returned
/// frame is the pre-post-net prediction in raw units.
pub fn decoder_step(
    prev_frame: &[f32],
    enc_t: &[f32],
    state: &DecoderState,
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
) -> (Vec<f32>, DecoderState) {
    let mut tape = Tape::<f32>::new();
    let p = params.bind(&mut tape, |_| false);
    let prev = tape.constant(row(prev_frame.iter().copied()));
    let enc = tape.constant(row(enc_t.iter().copied()));
    let st = LstmState {
        h: tape.constant(row(state.h.iter().copied())),
        c: tape.constant(row(state.c.iter().copied())),
    };
    let (z, st) = decoder_step_tape(&mut tape, cfg, &p, prev, enc, st, None);
    let y = to_output(&mut tape, &p, z);
    (
        tape.value(y).iter().copied().collect(),
        DecoderState {
            h: tape.value(st.h).iter().copied().collect(),
            c: tape.value(st.c).iter().copied().collect(),
        },
    )
}

/// Post-net residual (inference mode) for T×M raw pre-post-net frames.
pub fn postnet_forward(pre_frames: &Array2<f32>, params: &ParamStore<f32>, cfg: &ModelConfig) -> Array2<f32> {
    let mut tape = Tape::<f32>::new();
    let p = params.bind(&mut tape, |_| false);
    let x = tape.constant(pre_frames.clone());
    let z = to_internal(&mut tape, &p, x);
    let (r, _) = postnet_tape(&mut tape, cfg, &p, z, 1, Mode::Inference);
    let y = tape.mul_row(r, p.var("norm.out_std"));
    tape.value(y).clone()
}

/// Inference-mode forward of one example with an explicit sampling mask.
pub fn model_forward(
    example: &UtteranceExample,
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
    sampling_mask: &[bool],
) -> Result<(Array2<f32>, Array2<f32>)> {
    let t = example.num_frames();
    if sampling_mask.len() != t {
        return Err(AecError::ShapeMismatch(format!(
            "sampling mask has {} entries for {t} frames",
            sampling_mask.len()
        )));
    }
    let stacked = stack(&example.probe_feats.frames, &example.reference_feats.frames)?;
    run_single(&stacked, Some(&example.target_feats.frames), sampling_mask, params, cfg)
}

fn run_single(
    stacked: &Array3<f32>,
    target: Option<&Array2<f32>>,
    mask: &[bool],
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
) -> Result<(Array2<f32>, Array2<f32>)> {
    let (t, m, _) = stacked.dim();
    if m != cfg.mel_dim {
        return Err(AecError::ShapeMismatch(format!("model expects {} mel channels, got {m}", cfg.mel_dim)));
    }
    if t == 0 {
        return Err(AecError::ShapeMismatch("no frames".into()));
    }
    let mut tape = Tape::<f32>::new();
    let p = params.bind(&mut tape, |_| false);
    let x = tape.constant(stacked_to_rows(stacked));
    let f = forward_tape(&mut tape, cfg, &p, x, target, &[mask.to_vec()], 1, Mode::Inference, None);
    Ok((tape.value(f.y_pre).clone(), tape.value(f.y_post).clone()))
}

/// Free-running inference: every decoder input is the model's own
/// previous prediction.
pub fn infer(stacked: &Array3<f32>, params: &ParamStore<f32>, cfg: &ModelConfig) -> Result<(Array2<f32>, Array2<f32>)> {
    let t = stacked.dim().0;
    run_single(stacked, None, &vec![true; t], params, cfg)
}

/// Exactly `floor(t / 2)` true entries at uniformly chosen positions.
pub fn sampling_mask(seed: u64, t: usize) -> Vec<bool> {
    let mut rng = rng_for(seed, "sampling-mask", t as u64);
    let mut mask = vec![false; t];
    for i in sample(&mut rng, t, t / 2) {
        mask[i] = true;
    }
    mask
}
