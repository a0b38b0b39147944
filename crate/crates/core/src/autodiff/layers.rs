//! Building blocks shared by the AEC model, the proxy recognizers and the
//! mask predictor.

use ndarray::Array2;
use rand::Rng;

use super::params::{glorot, Bound, ParamStore};
use super::tape::{Real, Tape, Var};

/// `x · W + b`.
pub fn dense<F: Real>(tape: &mut Tape<F>, x: Var, w: Var, b: Var) -> Var {
    let y = tape.matmul(x, w);
    tape.add_row(y, b)
}

pub fn init_dense<R: Rng>(store: &mut ParamStore<f32>, rng: &mut R, name: &str, fan_in: usize, fan_out: usize) {
    store.insert(format!("{name}.w"), glorot(rng, fan_in, fan_out));
    store.insert(format!("{name}.b"), Array2::zeros((1, fan_out)));
}

/// Weights of one LSTM layer: a single (in+H)×4H matrix with gate order
/// input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w: Var,
    pub b: Var,
    pub hidden: usize,
}

impl LstmVars {
    pub fn bind(bound: &Bound, name: &str, hidden: usize) -> Self {
        LstmVars {
            w: bound.var(&format!("{name}.w")),
            b: bound.var(&format!("{name}.b")),
            hidden,
        }
    }
}

pub fn init_lstm<R: Rng>(store: &mut ParamStore<f32>, rng: &mut R, name: &str, input: usize, hidden: usize) {
    store.insert(format!("{name}.w"), glorot(rng, input + hidden, 4 * hidden));
    let mut b = Array2::zeros((1, 4 * hidden));
    // forget-gate bias of one keeps early gradients flowing through time
    for j in hidden..2 * hidden {
        b[[0, j]] = 1.0;
    }
    store.insert(format!("{name}.b"), b);
}

/// Recurrent state of one LSTM layer.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros<F: Real>(tape: &mut Tape<F>, batch: usize, hidden: usize) -> Self {
        LstmState {
            h: tape.constant(Array2::zeros((batch, hidden))),
            c: tape.constant(Array2::zeros((batch, hidden))),
        }
    }
}

pub fn lstm_step<F: Real>(tape: &mut Tape<F>, layer: &LstmVars, x: Var, state: LstmState) -> LstmState {
    let h = layer.hidden;
    let xh = tape.concat_cols(&[x, state.h]);
    let z = dense(tape, xh, layer.w, layer.b);
    let i = tape.slice_cols(z, 0, h);
    let i = tape.sigmoid(i);
    let f = tape.slice_cols(z, h, 2 * h);
    let f = tape.sigmoid(f);
    let g = tape.slice_cols(z, 2 * h, 3 * h);
    let g = tape.tanh(g);
    let o = tape.slice_cols(z, 3 * h, 4 * h);
    let o = tape.sigmoid(o);
    let keep = tape.mul(f, state.c);
    let write = tape.mul(i, g);
    let c = tape.add(keep, write);
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc);
    LstmState { h, c }
}

/// Runs a stack of unidirectional LSTM layers over per-frame inputs.
pub fn lstm_stack<F: Real>(tape: &mut Tape<F>, layers: &[LstmVars], frames: &[Var], batch: usize) -> Vec<Var> {
    let mut seq = frames.to_vec();
    for layer in layers {
        let mut state = LstmState::zeros(tape, batch, layer.hidden);
        let mut out = Vec::with_capacity(seq.len());
        for &x in &seq {
            state = lstm_step(tape, layer, x, state);
            out.push(state.h);
        }
        seq = out;
    }
    seq
}

/// Same-padded temporal convolution over a time-major (T·B)×C matrix.
/// Kernel weights are stored as (K·C)×O.
pub fn conv_time<F: Real>(tape: &mut Tape<F>, x: Var, batch: usize, kernel: usize, w: Var, b: Var) -> Var {
    let win = tape.time_windows(x, batch, kernel);
    dense(tape, win, w, b)
}

/// Splits a time-major (T·B)×C matrix into T per-frame B×C nodes.
pub fn split_frames<F: Real>(tape: &mut Tape<F>, x: Var, batch: usize) -> Vec<Var> {
    let frames = tape.value(x).nrows() / batch;
    (0..frames).map(|t| tape.slice_rows(x, t * batch, (t + 1) * batch)).collect()
}
