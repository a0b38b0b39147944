use std::path::Path;

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::irm::{apply_mask_erase, oracle_mask, IrmConfig};
use crate::autodiff::layers::{dense, init_dense};
use crate::autodiff::{Adam, AdamConfig, Bound, ParamStore, Tape, Var};
use crate::checkpoint::{self, NEURAL_MAGIC};
use crate::data::{Stem, UtteranceExample};
use crate::error::{AecError, Result};
use crate::seed::rng_for;
use crate::signal::{align_pair, features, MelConfig, StftConfig, Waveform};

pub const CHECKPOINT_KIND: &str = "irm_predictor";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrmPredictorConfig {
    /// Frames of context on each side of the predicted frame.
    pub context: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub steps: u64,
    pub batch_frames: usize,
    pub adam: AdamConfig,
    pub irm: IrmConfig,
}

impl Default for IrmPredictorConfig {
    fn default() -> Self {
        IrmPredictorConfig {
            context: 2,
            hidden: 128,
            hidden_layers: 2,
            steps: 1500,
            batch_frames: 256,
            adam: AdamConfig::default(),
            irm: IrmConfig::default(),
        }
    }
}

impl IrmPredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.hidden_layers == 0 || self.batch_frames == 0 {
            return Err(AecError::InvalidConfig("mask predictor sizes must be positive".into()));
        }
        self.irm.validate()
    }

    fn input_dim(&self, mel: usize) -> usize {
        (2 * self.context + 1) * 2 * mel
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrmMeta {
    pub config: IrmPredictorConfig,
    pub stft: StftConfig,
    pub mel: MelConfig,
    pub max_lag: usize,
    pub seed: u64,
    pub train_mse: f64,
    pub config_hash: String,
}

/// Per-frame feed-forward regressor from probe and reference log-mel
/// context to a per-bin mask.
#[derive(Debug, Clone, PartialEq)]
pub struct IrmPredictor {
    pub meta: IrmMeta,
    pub params: ParamStore<f32>,
}

/// Stacks probe and reference frames with ±`context` neighbours, repeating
/// edge frames. Returns T×((2c+1)·2M).
pub fn context_features(probe: &Array2<f32>, reference: &Array2<f32>, context: usize) -> Result<Array2<f32>> {
    if probe.dim() != reference.dim() {
        return Err(AecError::ShapeMismatch(format!(
            "probe {:?} vs reference {:?}",
            probe.dim(),
            reference.dim()
        )));
    }
    let (t, m) = probe.dim();
    let width = 2 * context + 1;
    let mut out = Array2::zeros((t, width * 2 * m));
    for i in 0..t {
        for k in 0..width {
            let j = (i + k).saturating_sub(context).min(t.saturating_sub(1));
            let base = k * 2 * m;
            out.slice_mut(s![i, base..base + m]).assign(&probe.row(j));
            out.slice_mut(s![i, base + m..base + 2 * m]).assign(&reference.row(j));
        }
    }
    Ok(out)
}

/// Oracle mask of an example, from its residual and echoed-reference stems.
pub fn irm_target(example: &UtteranceExample, stft: &StftConfig, irm: &IrmConfig) -> Result<Array2<f32>> {
    let residual = example.stem(Stem::Residual)?;
    let echo = example.stem(Stem::EchoedReference)?;
    let mask = oracle_mask(residual, echo, stft, irm)?;
    if mask.nrows() != example.num_frames() {
        return Err(AecError::ShapeMismatch(format!(
            "{}: {} mask frames vs {} feature frames",
            example.id,
            mask.nrows(),
            example.num_frames()
        )));
    }
    Ok(mask)
}

pub fn mask_mse(pred: &Array2<f32>, target: &Array2<f32>) -> f64 {
    pred.iter().zip(target).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>() / target.len().max(1) as f64
}

fn forward(tape: &mut Tape<f32>, p: &Bound, layers: usize, x: Var) -> Var {
    let x = tape.add_row(x, p.var("norm.shift"));
    let mut h = tape.mul_row(x, p.var("norm.scale"));
    for l in 0..layers {
        let y = dense(tape, h, p.var(&format!("hidden.{l}.w")), p.var(&format!("hidden.{l}.b")));
        h = tape.tanh(y);
    }
    let y = dense(tape, h, p.var("out.w"), p.var("out.b"));
    tape.sigmoid(y)
}

fn is_trainable(name: &str) -> bool {
    !name.starts_with("norm.")
}

/// Fits a mask predictor to the oracle masks of `examples`.
pub fn train_irm_predictor(
    examples: &[UtteranceExample],
    cfg: &IrmPredictorConfig,
    stft: &StftConfig,
    max_lag: usize,
    seed: u64,
    config_hash: &str,
) -> Result<IrmPredictor> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(AecError::InvalidConfig("training set is empty".into()));
    }
    let mut xs = Vec::with_capacity(examples.len());
    let mut ys = Vec::with_capacity(examples.len());
    for ex in examples {
        ys.push(irm_target(ex, stft, &cfg.irm)?);
        xs.push(context_features(&ex.probe_feats.frames, &ex.reference_feats.frames, cfg.context)?);
    }
    let x_all = ndarray::concatenate(Axis(0), &xs.iter().map(|a| a.view()).collect::<Vec<_>>()).expect("equal widths");
    let y_all = ndarray::concatenate(Axis(0), &ys.iter().map(|a| a.view()).collect::<Vec<_>>()).expect("equal bins");
    let mel = examples[0].probe_feats.mel_config;
    let (n, d) = x_all.dim();
    let bins = y_all.ncols();

    let mut params = ParamStore::new();
    let mut rng = rng_for(seed, "irm-init", 0);
    let mut input = d;
    for l in 0..cfg.hidden_layers {
        init_dense(&mut params, &mut rng, &format!("hidden.{l}"), input, cfg.hidden);
        input = cfg.hidden;
    }
    init_dense(&mut params, &mut rng, "out", input, bins);
    let mean = x_all.mean_axis(Axis(0)).expect("non-empty");
    let std = x_all.std_axis(Axis(0), 0.0).mapv(|v| v.max(1e-3));
    params.insert("norm.shift", mean.mapv(|v| -v).insert_axis(Axis(0)));
    params.insert("norm.scale", std.mapv(|v| 1.0 / v).insert_axis(Axis(0)));

    let mut adam = Adam::new(cfg.adam);
    let batch = cfg.batch_frames.min(n);
    for step in 0..cfg.steps {
        let mut rng = rng_for(seed, "irm-batch", step);
        let idx = rand::seq::index::sample(&mut rng, n, batch).into_vec();
        let xb = x_all.select(Axis(0), &idx);
        let yb = y_all.select(Axis(0), &idx);
        let mut tape = Tape::<f32>::new();
        let p = params.bind(&mut tape, is_trainable);
        let x = tape.constant(xb);
        let y = forward(&mut tape, &p, cfg.hidden_layers, x);
        let target = tape.constant(yb);
        let d = tape.sub(y, target);
        let sq = tape.square(d);
        let loss = tape.mean(sq);
        if !tape.scalar(loss).is_finite() {
            return Err(AecError::Diverged { step });
        }
        let grads = tape.backward(loss);
        let mut g = params.collect_grads(&p, &grads);
        g.retain(is_trainable);
        adam.update(&mut params, &g);
    }
    let mut model = IrmPredictor {
        meta: IrmMeta {
            config: *cfg,
            stft: *stft,
            mel,
            max_lag,
            seed,
            train_mse: 0.0,
            config_hash: config_hash.to_string(),
        },
        params,
    };
    model.meta.train_mse = mask_mse(&model.predict_frames(&x_all), &y_all);
    Ok(model)
}

impl IrmPredictor {
    fn predict_frames(&self, x: &Array2<f32>) -> Array2<f32> {
        let mut tape = Tape::<f32>::new();
        let p = self.params.bind(&mut tape, |_| false);
        let xv = tape.constant(x.clone());
        let y = forward(&mut tape, &p, self.meta.config.hidden_layers, xv);
        tape.value(y).clone()
    }

    /// T×F mask for aligned probe and reference features.
    pub fn predict_mask(&self, probe: &Array2<f32>, reference: &Array2<f32>) -> Result<Array2<f32>> {
        let expected = self.meta.config.input_dim(self.meta.mel.num_mels);
        let x = context_features(probe, reference, self.meta.config.context)?;
        if x.ncols() != expected {
            return Err(AecError::ShapeMismatch(format!("features give {} inputs, model expects {expected}", x.ncols())));
        }
        Ok(self.predict_frames(&x))
    }

    /// Mean squared error against the oracle masks of `examples`.
    pub fn mse(&self, examples: &[UtteranceExample]) -> Result<f64> {
        let (mut sum, mut n) = (0.0, 0.0);
        for ex in examples {
            let target = irm_target(ex, &self.meta.stft, &self.meta.config.irm)?;
            let pred = self.predict_mask(&ex.probe_feats.frames, &ex.reference_feats.frames)?;
            sum += mask_mse(&pred, &target) * target.len() as f64;
            n += target.len() as f64;
        }
        Ok(sum / n.max(1.0))
    }

    /// Aligns, predicts a mask and applies it to the aligned probe.
    pub fn erase(&self, probe: &Waveform, reference: &Waveform) -> Result<Waveform> {
        probe.check_rate(reference)?;
        let (p, r, _) = align_pair(probe, reference, self.meta.max_lag)?;
        let pf = features(&p, &self.meta.stft, &self.meta.mel)?;
        let rf = features(&r, &self.meta.stft, &self.meta.mel)?;
        let mask = self.predict_mask(&pf.frames, &rf.frames)?;
        apply_mask_erase(&p, &mask, &self.meta.stft)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, NEURAL_MAGIC, CHECKPOINT_KIND, &self.meta, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, params) = checkpoint::load(path, NEURAL_MAGIC, CHECKPOINT_KIND)?;
        Ok(IrmPredictor { meta, params })
    }
}

/// MSE of the all-ones mask against the oracle masks of `examples`.
pub fn all_ones_mse(examples: &[UtteranceExample], stft: &StftConfig, irm: &IrmConfig) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0.0);
    for ex in examples {
        let target = irm_target(ex, stft, irm)?;
        sum += target.iter().map(|v| (1.0 - *v as f64).powi(2)).sum::<f64>();
        n += target.len() as f64;
    }
    Ok(sum / n.max(1.0))
}
