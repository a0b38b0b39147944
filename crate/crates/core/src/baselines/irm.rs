use ndarray::{Array2, Zip};
use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{AecError, Result};
use crate::signal::{Role, Spectrogram, StftConfig, StftPlan, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrmConfig {
    pub exponent: f64,
    pub floor: f64,
}

impl Default for IrmConfig {
    fn default() -> Self {
        IrmConfig {
            exponent: 0.5,
            floor: 1e-8,
        }
    }
}

impl IrmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.exponent > 0.0) {
            return Err(AecError::InvalidConfig("mask exponent must be positive".into()));
        }
        if !(self.floor >= 0.0) {
            return Err(AecError::InvalidConfig("mask floor must be non-negative".into()));
        }
        Ok(())
    }
}

/// `(|R|² / (|R|² + |E|² + floor))^β` per bin.
pub fn ideal_ratio_mask(residual: &Spectrogram, echo: &Spectrogram, cfg: &IrmConfig) -> Result<Array2<f32>> {
    cfg.validate()?;
    if residual.frames.dim() != echo.frames.dim() {
        return Err(AecError::ShapeMismatch(format!(
            "residual {:?} vs echo {:?}",
            residual.frames.dim(),
            echo.frames.dim()
        )));
    }
    let mut mask = Array2::zeros(residual.frames.dim());
    Zip::from(&mut mask)
        .and(&residual.frames)
        .and(&echo.frames)
        .for_each(|m, r, e| {
            let pr = r.norm_sqr() as f64;
            let pe = e.norm_sqr() as f64;
            *m = (pr / (pr + pe + cfg.floor)).powf(cfg.exponent) as f32;
        });
    Ok(mask)
}

/// Scales the probe's STFT magnitudes by `mask`, keeps its phase and
/// resynthesizes. The output has the probe's length.
pub fn apply_mask_erase(probe: &Waveform, mask: &Array2<f32>, cfg: &StftConfig) -> Result<Waveform> {
    let plan = StftPlan::new(*cfg)?;
    let frames = cfg.num_frames(probe.len());
    if frames != mask.nrows() || cfg.num_bins() != mask.ncols() {
        return Err(AecError::ShapeMismatch(format!(
            "mask {:?} vs probe spectrogram {:?}",
            mask.dim(),
            (frames, cfg.num_bins())
        )));
    }
    if frames == 0 {
        return Err(AecError::ShortInput {
            needed: cfg.window_len,
            got: probe.len(),
        });
    }
    let mut spec = super::padded_forward(&plan, probe.samples(), probe.len(), probe.sample_rate())?;
    let off = super::pad_frames(&plan);
    for (t, mut row) in spec.frames.rows_mut().into_iter().enumerate() {
        let m = mask.row(t.saturating_sub(off).min(frames - 1));
        Zip::from(&mut row).and(&m).for_each(|c, &g| *c *= Complex32::new(g, 0.0));
    }
    let out = super::padded_inverse(&plan, &spec, probe.len())?;
    Waveform::new(out, probe.sample_rate(), Role::Erased)
}

/// Oracle mask for a probe from its residual and echoed-reference stems.
pub fn oracle_mask(residual: &Waveform, echo: &Waveform, stft: &StftConfig, cfg: &IrmConfig) -> Result<Array2<f32>> {
    residual.check_rate(echo)?;
    let plan = StftPlan::new(*stft)?;
    let r = plan.forward(residual.samples(), residual.sample_rate())?;
    let e = plan.forward(echo.samples(), echo.sample_rate())?;
    ideal_ratio_mask(&r, &e, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(v: Complex32) -> Spectrogram {
        let mut s = Spectrogram::zeros(3, StftConfig::default(), 16000);
        s.frames.fill(v);
        s
    }

    #[test]
    fn limits_and_equal_power() {
        let cfg = IrmConfig::default();
        let one = spec(Complex32::new(1.0, 0.0));
        let zero = spec(Complex32::new(0.0, 0.0));
        let m = ideal_ratio_mask(&one, &zero, &cfg).unwrap();
        assert!(m.iter().all(|&v| (v - 1.0).abs() < 1e-6));
        let m = ideal_ratio_mask(&zero, &one, &cfg).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));
        let rot = spec(Complex32::new(0.0, 1.0));
        let m = ideal_ratio_mask(&one, &rot, &cfg).unwrap();
        assert_abs_diff_eq!(m[[1, 7]], 0.5f32.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn shape_mismatch() {
        let a = Spectrogram::zeros(3, StftConfig::default(), 16000);
        let b = Spectrogram::zeros(4, StftConfig::default(), 16000);
        assert!(matches!(ideal_ratio_mask(&a, &b, &IrmConfig::default()), Err(AecError::ShapeMismatch(_))));
    }
}
