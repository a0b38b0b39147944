use std::path::Path;

use hound::{SampleFormat, WavSpec};

use super::waveform::{Role, Waveform};
use crate::error::{AecError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Reads a mono PCM-16 or float-32 WAV file. When `expected_rate` is given,
/// any other rate is an error.
pub fn read_wav(path: &Path, expected_rate: Option<u32>, role: Role) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path).map_err(|e| hound_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AecError::format(path, format!("expected mono, found {} channels", spec.channels)));
    }
    if let Some(rate) = expected_rate {
        if rate != spec.sample_rate {
            return Err(AecError::RateMismatch(spec.sample_rate, rate));
        }
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| hound_error(path, e))?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| hound_error(path, e))?,
        (fmt, bits) => {
            return Err(AecError::format(
                path,
                format!("unsupported sample format {fmt:?} with {bits} bits"),
            ))
        }
    };
    Waveform::new(samples, spec.sample_rate, role).map_err(|e| AecError::format(path, e.to_string()))
}

pub fn write_wav(path: &Path, wave: &Waveform, encoding: WavEncoding) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate(),
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => SampleFormat::Int,
            WavEncoding::Float32 => SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| hound_error(path, e))?;
    for &s in wave.samples() {
        match encoding {
            WavEncoding::Pcm16 => {
                let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(v)
            }
            WavEncoding::Float32 => writer.write_sample(s),
        }
        .map_err(|e| hound_error(path, e))?;
    }
    writer.finalize().map_err(|e| hound_error(path, e))
}

fn hound_error(path: &Path, err: hound::Error) -> AecError {
    match err {
        hound::Error::IoError(e) => AecError::io(path, e),
        other => AecError::format(path, other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let w = Waveform::new(vec![0.25, -0.5, 1e-3], 16000, Role::Probe).unwrap();
        write_wav(&path, &w, WavEncoding::Float32).unwrap();
        let back = read_wav(&path, Some(16000), Role::Probe).unwrap();
        assert_eq!(back.samples(), w.samples());
    }

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let w = Waveform::new(vec![0.25, -0.5, 0.1234], 8000, Role::Probe).unwrap();
        write_wav(&path, &w, WavEncoding::Pcm16).unwrap();
        let back = read_wav(&path, None, Role::Probe).unwrap();
        for (a, b) in back.samples().iter().zip(w.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
        assert!(matches!(
            read_wav(&path, Some(16000), Role::Probe),
            Err(AecError::RateMismatch(8000, 16000))
        ));
    }

    #[test]
    fn missing_file_is_io_error_with_path() {
        let err = read_wav(Path::new("/nonexistent/x.wav"), None, Role::Probe).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.wav"));
    }
}
