use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::data::source::{normalize_rms, voiced_segment, Formant};
use crate::error::Result;
use crate::seed::rng_for;
use crate::signal::{features, MelConfig, Role, StftConfig, Waveform};

pub const DEFAULT_CLASSES: usize = 10;
pub const CLIP_SECONDS: f64 = 1.0;
const TEMPLATE_SEED: u64 = 0x6b77_5f74_656d_706c;

/// Acoustic recipe of one keyword class: a sequence of syllables, each a
/// formant glide, and a pitch contour.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordTemplate {
    pub syllables: Vec<(Vec<Formant>, Vec<Formant>)>,
    pub pitch_slope: f64,
}

/// Class templates. They depend only on `k` and the class index, so every
/// corpus with the same `k` shares them regardless of seed.
pub fn templates(k: usize) -> Vec<KeywordTemplate> {
    let mut rng = ChaCha8Rng::seed_from_u64(TEMPLATE_SEED);
    let bands = [(250.0, 900.0), (850.0, 2400.0), (2200.0, 3600.0)];
    let draw = |rng: &mut ChaCha8Rng| -> Vec<Formant> {
        bands
            .iter()
            .map(|&(lo, hi)| Formant {
                center: rng.random_range(lo..hi),
                bandwidth: rng.random_range(80.0..160.0),
            })
            .collect()
    };
    (0..k)
        .map(|class| {
            let syllables = 1 + class % 3;
            KeywordTemplate {
                syllables: (0..syllables).map(|_| (draw(&mut rng), draw(&mut rng))).collect(),
                pitch_slope: rng.random_range(-0.3..0.3),
            }
        })
        .collect()
}

fn jitter(formants: &[Formant], rng: &mut ChaCha8Rng) -> Vec<Formant> {
    formants
        .iter()
        .map(|f| Formant {
            center: f.center * rng.random_range(0.95..1.05),
            bandwidth: f.bandwidth,
        })
        .collect()
}

/// Renders one clip of `CLIP_SECONDS`: a 0.4–0.8 s token at a random
/// offset inside silence.
pub fn render_keyword(template: &KeywordTemplate, sample_rate: u32, rng: &mut ChaCha8Rng) -> Waveform {
    let clip = (CLIP_SECONDS * sample_rate as f64).round() as usize;
    let token = (rng.random_range(0.4..0.8) * sample_rate as f64) as usize;
    let offset = rng.random_range(0..=clip - token);
    let f0 = rng.random_range(90.0..250.0);
    let mut samples = vec![0.0f32; clip];
    let n = template.syllables.len();
    let syl = token / n;
    for (s, (start, end)) in template.syllables.iter().enumerate() {
        let frac = s as f64 / n as f64;
        let pitch = f0 * (1.0 + template.pitch_slope * frac);
        let voiced = voiced_segment(syl, sample_rate, pitch, &jitter(start, rng), &jitter(end, rng), rng);
        let base = offset + s * syl;
        for (i, v) in voiced.iter().enumerate() {
            let env = (std::f64::consts::PI * i as f64 / syl as f64).sin().powf(0.6) as f32;
            samples[base + i] += v * env;
        }
    }
    normalize_rms(&mut samples, 0.05);
    Waveform::new(samples, sample_rate, Role::Target).expect("finite synthesis")
}

/// Labeled keyword clips.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordCorpus {
    pub num_classes: usize,
    pub waves: Vec<Waveform>,
    pub labels: Vec<usize>,
    pub seed: u64,
}

/// `per_class` clips of each of `k` classes, class-interleaved. Clip `i`
/// draws from its own seed derived from `seed`, so corpora built from
/// different seeds never share an utterance.
pub fn make_keyword_corpus(seed: u64, k: usize, per_class: usize, sample_rate: u32) -> KeywordCorpus {
    assert!(k >= 2, "a keyword corpus needs at least two classes");
    let temps = templates(k);
    let mut waves = Vec::with_capacity(k * per_class);
    let mut labels = Vec::with_capacity(k * per_class);
    for i in 0..per_class {
        for (class, t) in temps.iter().enumerate() {
            let mut rng = rng_for(seed, "keyword", (i * k + class) as u64);
            waves.push(render_keyword(t, sample_rate, &mut rng));
            labels.push(class);
        }
    }
    KeywordCorpus {
        num_classes: k,
        waves,
        labels,
        seed,
    }
}

impl KeywordCorpus {
    pub fn len(&self) -> usize {
        self.waves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waves.is_empty()
    }

    /// SHA-256 over labels and sample bits.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (w, l) in self.waves.iter().zip(&self.labels) {
            h.update((*l as u64).to_le_bytes());
            for s in w.samples() {
                h.update(s.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn features(&self, stft: &StftConfig, mel: &MelConfig) -> Result<Vec<Array2<f32>>> {
        self.waves.iter().map(|w| Ok(features(w, stft, mel)?.frames)).collect()
    }
}

/// Mean log-mel spectrum over active frames (within 40 dB of the loudest
/// frame), with its overall level removed.
pub fn spectral_shape(f: &Array2<f32>) -> ndarray::Array1<f32> {
    let energy: Vec<f32> = f.rows().into_iter().map(|r| r.mean().unwrap_or(0.0)).collect();
    let peak = energy.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let threshold = peak - 40.0 / 20.0 * std::f32::consts::LN_10;
    let mut acc = ndarray::Array1::<f32>::zeros(f.ncols());
    let mut n = 0.0;
    for (row, e) in f.rows().into_iter().zip(&energy) {
        if *e >= threshold {
            acc += &row;
            n += 1.0;
        }
    }
    acc /= n;
    let level = acc.mean().unwrap_or(0.0);
    acc - level
}

/// Classifies by the nearest class-mean of time-averaged features. A
/// sanity oracle for class separability.
pub fn nearest_mean_accuracy(train: &[Array2<f32>], train_labels: &[usize], test: &[Array2<f32>], test_labels: &[usize], k: usize) -> f64 {
    let summary = |f: &Array2<f32>| spectral_shape(f);
    let m = train[0].ncols();
    let mut means = vec![ndarray::Array1::<f32>::zeros(m); k];
    let mut counts = vec![0usize; k];
    for (f, &l) in train.iter().zip(train_labels) {
        means[l] += &summary(f);
        counts[l] += 1;
    }
    for (mean, &c) in means.iter_mut().zip(&counts) {
        *mean /= c.max(1) as f32;
    }
    let correct = test
        .iter()
        .zip(test_labels)
        .filter(|(f, &l)| {
            let s = summary(f);
            let best = (0..k)
                .min_by(|&a, &b| {
                    let da = (&s - &means[a]).mapv(|v| v * v).sum();
                    let db = (&s - &means[b]).mapv(|v| v * v).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            best == l
        })
        .count();
    correct as f64 / test.len().max(1) as f64
}
