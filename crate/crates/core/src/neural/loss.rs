use ndarray::Array2;

use crate::asr_proxy::ProxyRecognizer;
use crate::autodiff::{Real, Tape, Var};
use crate::error::{AecError, Result};

/// Mean L1 plus mean squared error, before and after the post-net.
pub fn spectral_loss_tape<F: Real>(tape: &mut Tape<F>, y_pre: Var, y_post: Var, target: Var) -> Var {
    let mut terms = Vec::with_capacity(4);
    for y in [y_pre, y_post] {
        let d = tape.sub(y, target);
        let a = tape.abs(d);
        terms.push(tape.mean(a));
        let s = tape.square(d);
        terms.push(tape.mean(s));
    }
    let ab = tape.add(terms[0], terms[1]);
    let cd = tape.add(terms[2], terms[3]);
    tape.add(ab, cd)
}

pub fn spectral_loss(y_pre: &Array2<f32>, y_post: &Array2<f32>, target: &Array2<f32>) -> Result<f64> {
    if y_pre.dim() != target.dim() || y_post.dim() != target.dim() {
        return Err(AecError::ShapeMismatch(format!(
            "predictions {:?}/{:?} vs target {:?}",
            y_pre.dim(),
            y_post.dim(),
            target.dim()
        )));
    }
    let n = target.len() as f64;
    let mut total = 0.0;
    for y in [y_pre, y_post] {
        let (mut l1, mut l2) = (0.0, 0.0);
        for (a, b) in y.iter().zip(target) {
            let d = (*a - *b) as f64;
            l1 += d.abs();
            l2 += d * d;
        }
        total += l1 / n + l2 / n;
    }
    Ok(total)
}

/// Mean squared difference between the frozen encoder's latents of the
/// prediction and of the target. Gradients reach `y_post` only.
pub fn latent_loss_tape<F: Real>(tape: &mut Tape<F>, encoder: &ProxyRecognizer, y_post: Var, target: Var, batch: usize) -> Var {
    let a = encoder.encode(tape, y_post, batch);
    let b = encoder.encode(tape, target, batch);
    let d = tape.sub(a, b);
    let s = tape.square(d);
    tape.mean(s)
}

pub fn latent_loss(y_post: &Array2<f32>, target: &Array2<f32>, encoder: &ProxyRecognizer) -> Result<f64> {
    let a = encoder.latents(y_post);
    let b = encoder.latents(target);
    if a.nrows() != b.nrows() {
        return Err(AecError::LatentMismatch(a.nrows(), b.nrows()));
    }
    Ok(a.iter().zip(&b).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>() / a.len().max(1) as f64)
}

pub fn total_loss(spectral: f64, latent: f64, lambda: f64) -> f64 {
    spectral + lambda * latent
}
