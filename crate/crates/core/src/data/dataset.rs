use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::features::{read_shard, stack_channels, write_shard};
use super::synth::{synth_example, EchoPath, MixSpec, Stem, SynthSettings, UtteranceExample, EVAL_TERR_LEVELS, TRAIN_TERR_RANGE, TRAIN_TNR_RANGE};
use crate::error::{AecError, Result};
use crate::room::{sample_room_config, RoomConfig, RoomConstraints};
use crate::seed::{derive_seed, rng_for};
use crate::signal::wav::{read_wav, write_wav, WavEncoding};
use crate::signal::{LogMelFrames, MelConfig, Role, StftConfig, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn is_eval(self) -> bool {
        self != Split::Train
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// How the echo of an example was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoStyle {
    /// Loudspeaker path simulated in the example's own room.
    Simulated,
    /// Loudspeaker path taken from a fixed playback device in a fixed room,
    /// standing in for echoes recorded on real hardware.
    Replayed,
}

/// Source audio, optionally labeled (keyword targets carry class labels).
#[derive(Debug, Clone, Default)]
pub struct SourcePool {
    pub targets: Vec<(Waveform, Option<usize>)>,
    pub references: Vec<Waveform>,
    pub noises: Vec<Waveform>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        SplitCounts {
            train: 64,
            dev: 16,
            test: 16,
        }
    }
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }
}

/// Fractions of each source list given to each split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            dev: 0.15,
            test: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetPlan {
    pub counts: SplitCounts,
    pub ratios: SplitRatios,
    /// Share of training examples with replayed echo.
    pub train_replayed_fraction: f64,
    pub eval_echo: EchoStyle,
    pub train_devices: usize,
    pub eval_devices: usize,
    pub simulated_hardness: (f64, f64),
    pub replayed_hardness: (f64, f64),
}

impl Default for DatasetPlan {
    fn default() -> Self {
        DatasetPlan {
            counts: SplitCounts::default(),
            ratios: SplitRatios::default(),
            train_replayed_fraction: 0.5,
            eval_echo: EchoStyle::Replayed,
            train_devices: 4,
            eval_devices: 3,
            simulated_hardness: (0.0, 1.0),
            replayed_hardness: (1.5, 3.0),
        }
    }
}

/// A fixed playback device: loudspeaker coloration, saturation and the
/// room it sits in.
#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub response: Vec<f32>,
    pub hardness: f64,
    pub room: RoomConfig,
}

/// Device `id` for a dataset seed. Training and evaluation use disjoint id
/// ranges so evaluation devices are never seen in training.
pub fn device(seed: u64, id: u64, plan: &DatasetPlan, constraints: &RoomConstraints) -> Result<Device> {
    let mut rng = rng_for(seed, "device", id);
    let taps = 48;
    let decay: f64 = rng.random_range(0.80..0.93);
    let f = rng.random_range(0.05..0.4) * std::f64::consts::PI;
    let mut response: Vec<f32> = (0..taps)
        .map(|n| {
            let n = n as f64;
            let ring = decay.powf(n) * (f * n).cos();
            (if n == 0.0 { 1.0 } else { 0.6 * ring + rng.random_range(-0.05..0.05) }) as f32
        })
        .collect();
    let norm = response.iter().map(|v| v * v).sum::<f32>().sqrt();
    response.iter_mut().for_each(|v| *v /= norm);
    let hardness = rng.random_range(plan.replayed_hardness.0..=plan.replayed_hardness.1);
    let room = sample_room_config(derive_seed(seed, "device-room", id), constraints)?;
    Ok(Device { response, hardness, room })
}

const EVAL_DEVICE_BASE: u64 = 1_000;

/// Per-example bookkeeping written to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleRecord {
    pub id: String,
    pub split: Split,
    pub paths: BTreeMap<String, String>,
    pub terr_db: f64,
    pub tnr_db: f64,
    pub room_id: String,
    pub seeds: BTreeMap<String, u64>,
    pub echo_style: EchoStyle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    pub lag: i64,
    pub frames: usize,
}

/// Dataset-wide settings stored beside the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub stft: StftConfig,
    pub mel: MelConfig,
    pub sample_rate: u32,
    pub seed: u64,
    pub plan: DatasetPlan,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: DatasetHeader,
    pub records: Vec<ExampleRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const HEADER_FILE: &str = "dataset.json";

impl DatasetManifest {
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    /// SHA-256 of the JSON-lines manifest text.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for r in &self.records {
            if !ids.insert(&r.id) {
                return Err(AecError::InvalidConfig(format!("duplicate example id {}", r.id)));
            }
            if r.split.is_eval() && !EVAL_TERR_LEVELS.contains(&r.terr_db) {
                return Err(AecError::InvalidConfig(format!(
                    "evaluation example {} has TERR {} dB",
                    r.id, r.terr_db
                )));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ExampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

/// One planned example before synthesis.
#[derive(Debug, Clone)]
struct Job {
    id: String,
    split: Split,
    target: usize,
    reference: usize,
    noise: usize,
    ref_offset: usize,
    mix: MixSpec,
    room_seed: u64,
    echo_style: EchoStyle,
    device: Option<u64>,
    seed: u64,
    hardness: f64,
}

fn partition(n: usize, ratios: &SplitRatios, rng: &mut ChaCha8Rng) -> BTreeMap<Split, Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let total = ratios.train + ratios.dev + ratios.test;
    let mut dev = ((ratios.dev / total) * n as f64).round().max(1.0) as usize;
    let mut test = ((ratios.test / total) * n as f64).round().max(1.0) as usize;
    while dev + test > n.saturating_sub(1) && (dev > 1 || test > 1) {
        if dev >= test {
            dev -= 1
        } else {
            test -= 1
        }
    }
    let train = n - dev - test;
    let mut out = BTreeMap::new();
    out.insert(Split::Train, idx[..train].to_vec());
    out.insert(Split::Dev, idx[train..train + dev].to_vec());
    out.insert(Split::Test, idx[train + dev..].to_vec());
    out
}

fn plan_jobs(sources: &SourcePool, plan: &DatasetPlan, seed: u64) -> Result<Vec<Job>> {
    for (role, n) in [
        ("target", sources.targets.len()),
        ("reference", sources.references.len()),
        ("noise", sources.noises.len()),
    ] {
        if n < 3 {
            return Err(AecError::InvalidConfig(format!(
                "need at least 3 {role} sources to keep splits disjoint, got {n}"
            )));
        }
    }
    let mut rng = rng_for(seed, "partition", 0);
    let targets = partition(sources.targets.len(), &plan.ratios, &mut rng);
    let refs = partition(sources.references.len(), &plan.ratios, &mut rng);
    let noises = partition(sources.noises.len(), &plan.ratios, &mut rng);
    let mut jobs = Vec::new();
    for split in Split::ALL {
        for i in 0..plan.counts.get(split) {
            let mut rng = rng_for(seed, split.name(), i as u64);
            let target = targets[&split][i % targets[&split].len()];
            let reference = *refs[&split].choose(&mut rng).expect("non-empty partition");
            let noise = *noises[&split].choose(&mut rng).expect("non-empty partition");
            let tnr = rng.random_range(TRAIN_TNR_RANGE.0..TRAIN_TNR_RANGE.1);
            let terr = if split.is_eval() {
                EVAL_TERR_LEVELS[i % EVAL_TERR_LEVELS.len()]
            } else {
                rng.random_range(TRAIN_TERR_RANGE.0..TRAIN_TERR_RANGE.1)
            };
            let echo_style = match split {
                Split::Train if rng.random_bool(plan.train_replayed_fraction.clamp(0.0, 1.0)) => EchoStyle::Replayed,
                Split::Train => EchoStyle::Simulated,
                _ => plan.eval_echo,
            };
            let device = (echo_style == EchoStyle::Replayed).then(|| match split {
                Split::Train => rng.random_range(0..plan.train_devices.max(1) as u64),
                _ => EVAL_DEVICE_BASE + rng.random_range(0..plan.eval_devices.max(1) as u64),
            });
            let ref_len = sources.references[reference].len();
            let tgt_len = sources.targets[target].0.len();
            let ref_offset = if ref_len > tgt_len {
                rng.random_range(0..=ref_len - tgt_len)
            } else {
                0
            };
            let hardness = rng.random_range(plan.simulated_hardness.0..=plan.simulated_hardness.1);
            jobs.push(Job {
                id: format!("{}-{:05}", split.name(), i),
                split,
                target,
                reference,
                noise,
                ref_offset,
                mix: MixSpec {
                    tnr_db: tnr,
                    terr_db: terr,
                },
                room_seed: derive_seed(seed, "room", jobs.len() as u64),
                echo_style,
                device,
                seed: derive_seed(seed, "example", jobs.len() as u64),
                hardness,
            });
        }
    }
    Ok(jobs)
}

/// Synthesizes every planned example in memory.
pub fn synthesize(
    sources: &SourcePool,
    plan: &DatasetPlan,
    constraints: &RoomConstraints,
    settings: &SynthSettings,
    seed: u64,
) -> Result<Vec<(ExampleRecord, UtteranceExample)>> {
    let jobs = plan_jobs(sources, plan, seed)?;
    let mut devices: BTreeMap<u64, Device> = BTreeMap::new();
    let mut out = Vec::with_capacity(jobs.len());
    for job in jobs {
        let room = sample_room_config(job.room_seed, constraints)?;
        let echo_path = match job.device {
            Some(id) => {
                if !devices.contains_key(&id) {
                    devices.insert(id, device(seed, id, plan, constraints)?);
                }
                let d = &devices[&id];
                EchoPath {
                    hardness: d.hardness,
                    device_response: Some(d.response.clone()),
                    speaker_room: Some(d.room.clone()),
                }
            }
            None => EchoPath {
                hardness: job.hardness,
                device_response: None,
                speaker_room: None,
            },
        };
        let (target, label) = &sources.targets[job.target];
        let reference = sources.references[job.reference].segment(job.ref_offset, target.len());
        let mut ex = synth_example(
            &job.id,
            target,
            &reference,
            &sources.noises[job.noise],
            &room,
            &job.mix,
            &echo_path,
            job.seed,
            settings,
        )?;
        let room_id = format!("room-{:016x}", job.room_seed);
        ex.provenance.room_id = room_id.clone();
        ex.label = *label;
        let mut seeds = BTreeMap::new();
        seeds.insert("example".to_string(), job.seed);
        seeds.insert("room".to_string(), job.room_seed);
        seeds.insert("target_source".to_string(), job.target as u64);
        seeds.insert("reference_source".to_string(), job.reference as u64);
        seeds.insert("noise_source".to_string(), job.noise as u64);
        if let Some(d) = job.device {
            seeds.insert("device".to_string(), d);
        }
        let record = ExampleRecord {
            id: job.id.clone(),
            split: job.split,
            paths: BTreeMap::new(),
            terr_db: job.mix.terr_db,
            tnr_db: job.mix.tnr_db,
            room_id,
            seeds,
            echo_style: job.echo_style,
            label: *label,
            lag: ex.provenance.lag,
            frames: ex.num_frames(),
        };
        out.push((record, ex));
    }
    Ok(out)
}

const STEM_FILES: [(Stem, &str); 7] = [
    (Stem::Probe, "probe"),
    (Stem::Reference, "ref"),
    (Stem::Target, "target"),
    (Stem::ReverberantTarget, "reverberant_target"),
    (Stem::Noise, "noise"),
    (Stem::EchoedReference, "echo"),
    (Stem::Residual, "residual"),
];

/// Synthesizes a dataset and writes stems, feature shards and the manifest
/// under `out_dir`.
pub fn build_dataset(
    sources: &SourcePool,
    plan: &DatasetPlan,
    constraints: &RoomConstraints,
    settings: &SynthSettings,
    seed: u64,
    config_hash: &str,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let settings = SynthSettings {
        keep_waveforms: true,
        ..settings.clone()
    };
    let examples = synthesize(sources, plan, constraints, &settings, seed)?;
    for sub in ["wav", "feats"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| AecError::io(&d, e))?;
    }
    let mut records = Vec::with_capacity(examples.len());
    for (mut record, ex) in examples {
        for (stem, name) in STEM_FILES {
            let rel = format!("wav/{}_{}.wav", ex.id, name);
            write_wav(&out_dir.join(&rel), ex.stem(stem)?, WavEncoding::Float32)?;
            record.paths.insert(name.to_string(), rel);
        }
        let rel = format!("feats/{}.aecf", ex.id);
        let tensor = stack_channels(&[&ex.probe_feats.frames, &ex.reference_feats.frames, &ex.target_feats.frames])?;
        write_shard(&out_dir.join(&rel), &tensor)?;
        record.paths.insert("feats".to_string(), rel);
        records.push(record);
    }
    let manifest = DatasetManifest {
        header: DatasetHeader {
            stft: settings.stft,
            mel: settings.mel,
            sample_rate: sources.targets[0].0.sample_rate(),
            seed,
            plan: plan.clone(),
            config_hash: config_hash.to_string(),
        },
        records,
    };
    manifest.validate()?;
    write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_jsonl()).map_err(|e| AecError::io(&path, e))?;
    let path = dir.join(HEADER_FILE);
    let text = serde_json::to_string_pretty(&manifest.header).expect("header serializes");
    std::fs::write(&path, text).map_err(|e| AecError::io(&path, e))
}

/// Reads `manifest.jsonl` and `dataset.json` from `dir` and checks that
/// every referenced file exists.
pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(HEADER_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| AecError::io(&path, e))?;
    let header: DatasetHeader = serde_json::from_str(&text).map_err(|e| AecError::format(&path, e.to_string()))?;
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| AecError::io(&path, e))?;
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: ExampleRecord = serde_json::from_str(line)
            .map_err(|e| AecError::format(&path, format!("line {}: {e}", n + 1)))?;
        for rel in r.paths.values() {
            let p = dir.join(rel);
            if !p.exists() {
                return Err(AecError::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
        records.push(r);
    }
    let m = DatasetManifest { header, records };
    m.validate()?;
    Ok(m)
}

/// Loads one example's features, and its stems when `with_stems` is set.
pub fn load_example(dir: &Path, header: &DatasetHeader, record: &ExampleRecord, with_stems: bool) -> Result<UtteranceExample> {
    let feats_rel = record
        .paths
        .get("feats")
        .ok_or_else(|| AecError::MissingStems(record.id.clone()))?;
    let shard_path: PathBuf = dir.join(feats_rel);
    let tensor = read_shard(&shard_path)?;
    if tensor.dim().2 != 3 {
        return Err(AecError::format(&shard_path, "expected probe, reference and target channels"));
    }
    let chans = super::features::unstack(&tensor);
    let lm = |a: &ndarray::Array2<f32>| LogMelFrames {
        frames: a.clone(),
        mel_config: header.mel,
    };
    let mut waveforms = BTreeMap::new();
    if with_stems {
        for (stem, name) in STEM_FILES {
            let rel = record
                .paths
                .get(name)
                .ok_or_else(|| AecError::MissingStems(record.id.clone()))?;
            let role = match stem {
                Stem::Probe => Role::Probe,
                Stem::Reference => Role::Reference,
                Stem::Target | Stem::ReverberantTarget => Role::Target,
                Stem::Noise => Role::Noise,
                Stem::EchoedReference => Role::EchoedReference,
                Stem::Residual => Role::Residual,
            };
            waveforms.insert(stem, read_wav(&dir.join(rel), Some(header.sample_rate), role)?);
        }
    }
    Ok(UtteranceExample {
        id: record.id.clone(),
        probe_feats: lm(&chans[0]),
        reference_feats: lm(&chans[1]),
        target_feats: lm(&chans[2]),
        waveforms,
        mix: MixSpec {
            tnr_db: record.tnr_db,
            terr_db: record.terr_db,
        },
        provenance: super::synth::Provenance {
            seed: record.seeds.get("example").copied().unwrap_or(0),
            room_id: record.room_id.clone(),
            lag: record.lag,
            target_delay: 0,
        },
        label: record.label,
    })
}

pub fn load_split(dir: &Path, manifest: &DatasetManifest, split: Split, with_stems: bool) -> Result<Vec<UtteranceExample>> {
    manifest
        .split(split)
        .map(|r| load_example(dir, &manifest.header, r, with_stems))
        .collect()
}

/// Training examples, optionally restricted to replayed-echo ones.
pub fn load_training_set(dir: &Path, manifest: &DatasetManifest, include_simulated: bool) -> Result<Vec<UtteranceExample>> {
    manifest
        .split(Split::Train)
        .filter(|r| include_simulated || r.echo_style == EchoStyle::Replayed)
        .map(|r| load_example(dir, &manifest.header, r, false))
        .collect()
}
