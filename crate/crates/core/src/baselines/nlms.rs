use ndarray::Array2;
use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{AecError, Result};
use crate::signal::{Role, Spectrogram, StftConfig, StftPlan, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NlmsConfig {
    pub taps_per_band: usize,
    pub step_size: f64,
    /// Added to the tap-vector energy, as a fraction of the reference's
    /// mean tap-vector energy.
    pub regularization: f64,
    pub stft: StftConfig,
}

impl Default for NlmsConfig {
    fn default() -> Self {
        NlmsConfig {
            taps_per_band: 8,
            step_size: 0.5,
            regularization: 0.03,
            stft: StftConfig::default(),
        }
    }
}

impl NlmsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps_per_band == 0 {
            return Err(AecError::InvalidConfig("taps_per_band must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size < 2.0) {
            return Err(AecError::InvalidConfig(format!("step size {} outside (0, 2)", self.step_size)));
        }
        if !(self.regularization >= 0.0) {
            return Err(AecError::InvalidConfig("regularization must be non-negative".into()));
        }
        self.stft.validate()
    }
}

/// Per-band NLMS over frame-lagged reference coefficients of the same band.
///
/// Returns the error spectrogram and the final filters (F×taps).
pub fn nlms_filter(probe: &Spectrogram, reference: &Spectrogram, cfg: &NlmsConfig) -> Result<(Spectrogram, Array2<Complex32>)> {
    cfg.validate()?;
    if probe.sample_rate != reference.sample_rate {
        return Err(AecError::RateMismatch(probe.sample_rate, reference.sample_rate));
    }
    if probe.num_bins() != reference.num_bins() {
        return Err(AecError::ShapeMismatch(format!(
            "probe has {} bins, reference {}",
            probe.num_bins(),
            reference.num_bins()
        )));
    }
    let (frames, bins) = (probe.num_frames(), probe.num_bins());
    let taps = cfg.taps_per_band;
    let zero = Complex64::new(0.0, 0.0);
    let mut w = Array2::from_elem((bins, taps), zero);
    let mut err = Array2::from_elem((frames, bins), Complex32::new(0.0, 0.0));
    let x_at = |t: isize, f: usize| -> Complex64 {
        if t < 0 || t as usize >= reference.num_frames() {
            zero
        } else {
            let c = reference.frames[[t as usize, f]];
            Complex64::new(c.re as f64, c.im as f64)
        }
    };
    let mean_bin_power = reference.frames.iter().map(|c| c.norm_sqr() as f64).sum::<f64>() / reference.frames.len().max(1) as f64;
    let eps = cfg.regularization * taps as f64 * mean_bin_power;
    let mut x = vec![zero; taps];
    for f in 0..bins {
        for t in 0..frames {
            for (l, xl) in x.iter_mut().enumerate() {
                *xl = x_at(t as isize - l as isize, f);
            }
            let mut y_hat = zero;
            let mut energy = 0.0;
            for l in 0..taps {
                y_hat += w[[f, l]] * x[l];
                energy += x[l].norm_sqr();
            }
            let d = probe.frames[[t, f]];
            let e = Complex64::new(d.re as f64, d.im as f64) - y_hat;
            err[[t, f]] = Complex32::new(e.re as f32, e.im as f32);
            if energy > 0.0 {
                let g = cfg.step_size / (energy + eps);
                for l in 0..taps {
                    w[[f, l]] += x[l].conj() * e * g;
                }
            }
        }
    }
    let filters = w.mapv(|c| Complex32::new(c.re as f32, c.im as f32));
    Ok((
        Spectrogram {
            frames: err,
            config: probe.config,
            sample_rate: probe.sample_rate,
        },
        filters,
    ))
}

/// Subband adaptive echo cancellation of an aligned probe/reference pair.
/// The output has the probe's length.
pub fn subband_nlms_erase(probe: &Waveform, reference: &Waveform, cfg: &NlmsConfig) -> Result<Waveform> {
    probe.check_rate(reference)?;
    let plan = StftPlan::new(cfg.stft)?;
    let p = super::padded_forward(&plan, probe.samples(), probe.len(), probe.sample_rate())?;
    let r = super::padded_forward(&plan, reference.samples(), probe.len(), reference.sample_rate())?;
    let (e, _) = nlms_filter(&p, &r, cfg)?;
    let out = super::padded_inverse(&plan, &e, probe.len())?;
    Waveform::new(out, probe.sample_rate(), Role::Erased)
}

pub(crate) fn fit(samples: &[f32], len: usize) -> Vec<f32> {
    let mut v: Vec<f32> = samples.iter().take(len).copied().collect();
    v.resize(len, 0.0);
    v
}
