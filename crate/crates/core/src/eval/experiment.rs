use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{echo_only_mask, erle, lsd_frames, sdr};
use crate::asr_proxy::ProxyRecognizer;
use crate::baselines::{apply_mask_erase, oracle_mask, subband_nlms_erase, IrmConfig, IrmPredictor, NlmsConfig};
use crate::config::hash_json;
use crate::data::dataset::{load_split, read_manifest, DatasetHeader};
use crate::data::{Split, Stem, UtteranceExample};
use crate::error::{AecError, Result};
use crate::neural::{frames_to_waveform, latent_loss, NeuralAec};
use crate::signal::{features, LogMelFrames, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    ProbePassthrough,
    SubbandNlms,
    IrmOracle,
    IrmPredicted,
    Neural,
}

impl SystemKind {
    pub fn needs_checkpoint(self) -> bool {
        matches!(self, SystemKind::IrmPredicted | SystemKind::Neural)
    }
}

/// One row of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub name: String,
    pub kind: SystemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl SystemSpec {
    pub fn new(name: &str, kind: SystemKind, checkpoint: Option<PathBuf>) -> Self {
        SystemSpec {
            name: name.to_string(),
            kind,
            checkpoint,
        }
    }
}

/// A frozen recognizer used to score proxy error and latent MSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxySpec {
    pub name: String,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentMatrix {
    pub systems: Vec<SystemSpec>,
    pub terr_levels: Vec<f64>,
    pub split: Split,
    pub proxies: Vec<ProxySpec>,
    pub nlms: NlmsConfig,
    pub irm: IrmConfig,
    /// Block length and level (dB below the loudest block) that define
    /// echo-only regions for ERLE.
    pub echo_only_block: usize,
    pub echo_only_threshold_db: f64,
}

impl Default for ExperimentMatrix {
    fn default() -> Self {
        ExperimentMatrix {
            systems: vec![
                SystemSpec::new("probe", SystemKind::ProbePassthrough, None),
                SystemSpec::new("subband_nlms", SystemKind::SubbandNlms, None),
                SystemSpec::new("irm_oracle", SystemKind::IrmOracle, None),
            ],
            terr_levels: vec![0.0, -5.0, -10.0],
            split: Split::Test,
            proxies: Vec::new(),
            nlms: NlmsConfig::default(),
            irm: IrmConfig::default(),
            echo_only_block: 160,
            echo_only_threshold_db: 40.0,
        }
    }
}

/// Checkpoint locations for the standard matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    pub irm_predictor: Option<PathBuf>,
    pub neural_full: Option<PathBuf>,
    pub neural_no_latent: Option<PathBuf>,
    pub neural_no_specaugment: Option<PathBuf>,
    pub neural_no_synthetic: Option<PathBuf>,
    pub proxies: Vec<ProxySpec>,
}

impl ExperimentMatrix {
    /// Baselines, the learned mask and the cumulative ablation ladder: the
    /// full model, then without the latent loss, then also without
    /// SpecAugment, then also without synthetic training data.
    pub fn standard(a: &Artifacts) -> Self {
        let mut m = ExperimentMatrix::default();
        let rows = [
            ("irm_predicted", SystemKind::IrmPredicted, &a.irm_predictor),
            ("neural_full", SystemKind::Neural, &a.neural_full),
            ("neural_no_latent", SystemKind::Neural, &a.neural_no_latent),
            ("neural_no_latent_no_specaugment", SystemKind::Neural, &a.neural_no_specaugment),
            ("neural_no_latent_no_specaugment_no_synthetic", SystemKind::Neural, &a.neural_no_synthetic),
        ];
        for (name, kind, path) in rows {
            m.systems.push(SystemSpec::new(name, kind, path.clone()));
        }
        m.proxies = a.proxies.clone();
        m
    }

    pub fn validate(&self) -> Result<()> {
        if self.systems.is_empty() || self.terr_levels.is_empty() {
            return Err(AecError::InvalidConfig("experiment needs at least one system and one TERR level".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for s in &self.systems {
            if !names.insert(&s.name) {
                return Err(AecError::InvalidConfig(format!("duplicate system name {}", s.name)));
            }
        }
        self.nlms.validate()?;
        self.irm.validate()
    }
}

/// Metrics of one system on one example. Proxy metrics are keyed by proxy
/// name; proxy error is 0 or 1 per example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMetrics {
    pub system: String,
    pub id: String,
    pub terr_db: f64,
    pub sdr_db: f64,
    pub lsd_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub erle_db: Option<f64>,
    pub proxy_error: BTreeMap<String, f64>,
    pub latent_mse: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stat {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }
}

/// Aggregates of one (system, TERR) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub system: String,
    pub terr_db: f64,
    pub examples: usize,
    pub id_list_hash: String,
    pub sdr_db: Stat,
    pub lsd_db: Stat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub erle_db: Option<Stat>,
    pub proxy_error: BTreeMap<String, Stat>,
    pub latent_mse: BTreeMap<String, Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub matrix: ExperimentMatrix,
    pub dataset_checksum: String,
    pub dataset_config_hash: String,
    /// Config hash of every system and proxy.
    pub config_hashes: BTreeMap<String, String>,
    /// SHA-256 of the newline-joined example ids per TERR level; shared by
    /// every system.
    pub id_list_hashes: BTreeMap<String, String>,
    pub per_example: Vec<ExampleMetrics>,
    pub aggregates: Vec<CellAggregate>,
}

fn level_key(terr: f64) -> String {
    format!("{terr} dB")
}

fn id_list_hash(ids: &[&str]) -> String {
    hex::encode(Sha256::digest(ids.join("\n").as_bytes()))
}

enum Loaded {
    Probe,
    Nlms,
    Oracle,
    Predicted(Box<IrmPredictor>),
    Neural(Box<NeuralAec>),
}

/// Output of one system on one example: waveform plus the log-mel frames
/// used for spectral and recognizer metrics.
struct Output {
    wave: Waveform,
    frames: LogMelFrames,
}

fn require(path: &Option<PathBuf>, cell: &str) -> Result<PathBuf> {
    let missing = |what: String| AecError::MissingArtifact {
        cell: cell.to_string(),
        what,
    };
    let p = path.clone().ok_or_else(|| missing("no checkpoint configured".into()))?;
    if !p.is_file() {
        return Err(missing(format!("checkpoint {} not found", p.display())));
    }
    Ok(p)
}

fn load_system(spec: &SystemSpec, header: &DatasetHeader) -> Result<(Loaded, String)> {
    let mismatch = |what: &str| {
        AecError::InvalidConfig(format!("{}: checkpoint {what} differs from the dataset's", spec.name))
    };
    Ok(match spec.kind {
        SystemKind::ProbePassthrough => (Loaded::Probe, hash_json(&"probe_passthrough")),
        SystemKind::SubbandNlms => (Loaded::Nlms, String::new()),
        SystemKind::IrmOracle => (Loaded::Oracle, String::new()),
        SystemKind::IrmPredicted => {
            let m = IrmPredictor::load(&require(&spec.checkpoint, &spec.name)?)?;
            if m.meta.mel != header.mel || m.meta.stft != header.stft {
                return Err(mismatch("feature configuration"));
            }
            let h = m.meta.config_hash.clone();
            (Loaded::Predicted(Box::new(m)), h)
        }
        SystemKind::Neural => {
            let m = NeuralAec::load(&require(&spec.checkpoint, &spec.name)?)?;
            if m.meta.mel != header.mel || m.meta.stft != header.stft {
                return Err(mismatch("feature configuration"));
            }
            let h = m.meta.config_hash.clone();
            (Loaded::Neural(Box::new(m)), h)
        }
    })
}

fn fit(wave: &Waveform, len: usize) -> Result<Waveform> {
    let s = wave.samples();
    let samples = (0..len).map(|i| s.get(i).copied().unwrap_or(0.0)).collect();
    Waveform::new(samples, wave.sample_rate(), crate::signal::Role::Erased)
}

fn run_system(sys: &Loaded, ex: &UtteranceExample, header: &DatasetHeader, matrix: &ExperimentMatrix) -> Result<Output> {
    let probe = ex.stem(Stem::Probe)?;
    let reference = ex.stem(Stem::Reference)?;
    let from_wave = |wave: Waveform| -> Result<Output> {
        let frames = features(&wave, &header.stft, &header.mel)?;
        Ok(Output { wave, frames })
    };
    match sys {
        Loaded::Probe => Ok(Output {
            wave: probe.clone(),
            frames: ex.probe_feats.clone(),
        }),
        Loaded::Nlms => from_wave(subband_nlms_erase(probe, reference, &matrix.nlms)?),
        Loaded::Oracle => {
            let mask = oracle_mask(ex.stem(Stem::Residual)?, ex.stem(Stem::EchoedReference)?, &header.stft, &matrix.irm)?;
            from_wave(apply_mask_erase(probe, &mask, &header.stft)?)
        }
        Loaded::Predicted(m) => {
            let mask = m.predict_mask(&ex.probe_feats.frames, &ex.reference_feats.frames)?;
            from_wave(apply_mask_erase(probe, &mask, &header.stft)?)
        }
        Loaded::Neural(m) => {
            let (_, y_post) = m.predict(&ex.probe_feats, &ex.reference_feats)?;
            let wave = frames_to_waveform(&y_post, &header.stft, &header.mel, header.sample_rate)?;
            Ok(Output {
                wave: fit(&wave, probe.len())?,
                frames: LogMelFrames {
                    frames: y_post,
                    mel_config: header.mel,
                },
            })
        }
    }
}

fn score(
    system: &str,
    out: &Output,
    ex: &UtteranceExample,
    proxies: &[(String, ProxyRecognizer)],
    matrix: &ExperimentMatrix,
) -> Result<ExampleMetrics> {
    let reverberant = ex.stem(Stem::ReverberantTarget)?;
    let probe = ex.stem(Stem::Probe)?;
    let sdr_db = sdr(&out.wave, reverberant)?;
    let lsd_db = lsd_frames(&out.frames, &ex.target_feats)?;
    let mask = echo_only_mask(reverberant, matrix.echo_only_block, matrix.echo_only_threshold_db);
    let erle_db = match erle(probe, &out.wave, &mask) {
        Ok(v) => Some(v),
        Err(AecError::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    let mut proxy_error = BTreeMap::new();
    let mut latent_mse = BTreeMap::new();
    for (name, p) in proxies {
        if let Some(label) = ex.label {
            let wrong = p.predict(&out.frames.frames) != label;
            proxy_error.insert(name.clone(), if wrong { 1.0 } else { 0.0 });
        }
        latent_mse.insert(name.clone(), latent_loss(&out.frames.frames, &ex.target_feats.frames, p)?);
    }
    Ok(ExampleMetrics {
        system: system.to_string(),
        id: ex.id.clone(),
        terr_db: ex.mix.terr_db,
        sdr_db,
        lsd_db,
        erle_db,
        proxy_error,
        latent_mse,
    })
}

fn aggregate(system: &str, terr: f64, rows: &[&ExampleMetrics], id_hash: &str) -> CellAggregate {
    let col = |f: &dyn Fn(&ExampleMetrics) -> Option<f64>| -> Vec<f64> { rows.iter().filter_map(|r| f(r)).collect() };
    let keys: std::collections::BTreeSet<&String> = rows.iter().flat_map(|r| r.latent_mse.keys()).collect();
    let mut proxy_error = BTreeMap::new();
    let mut latent_mse = BTreeMap::new();
    for k in keys {
        if let Some(s) = Stat::of(&col(&|r| r.proxy_error.get(k).copied())) {
            proxy_error.insert(k.clone(), s);
        }
        if let Some(s) = Stat::of(&col(&|r| r.latent_mse.get(k).copied())) {
            latent_mse.insert(k.clone(), s);
        }
    }
    let empty = Stat {
        mean: 0.0,
        std: 0.0,
        n: 0,
    };
    CellAggregate {
        system: system.to_string(),
        terr_db: terr,
        examples: rows.len(),
        id_list_hash: id_hash.to_string(),
        sdr_db: Stat::of(&col(&|r| Some(r.sdr_db))).unwrap_or(empty),
        lsd_db: Stat::of(&col(&|r| Some(r.lsd_db))).unwrap_or(empty),
        erle_db: Stat::of(&col(&|r| r.erle_db)),
        proxy_error,
        latent_mse,
    }
}

/// Scores every system on every example of the matrix split whose TERR is
/// one of the requested levels. All systems see the same examples.
pub fn run_experiment(matrix: &ExperimentMatrix, dataset_dir: &Path) -> Result<ExperimentReport> {
    run_experiment_with_threads(matrix, dataset_dir, 1)
}

/// [`run_experiment`] spreading the examples of each system over up to
/// `threads` worker threads. The report does not depend on `threads`.
pub fn run_experiment_with_threads(matrix: &ExperimentMatrix, dataset_dir: &Path, threads: usize) -> Result<ExperimentReport> {
    matrix.validate()?;
    if !dataset_dir.join(crate::data::dataset::MANIFEST_FILE).is_file() {
        return Err(AecError::MissingArtifact {
            cell: "dataset".into(),
            what: format!("no manifest under {}", dataset_dir.display()),
        });
    }
    let manifest = read_manifest(dataset_dir)?;
    let header = &manifest.header;

    let mut config_hashes = BTreeMap::new();
    let mut systems = Vec::with_capacity(matrix.systems.len());
    for spec in &matrix.systems {
        let (loaded, hash) = load_system(spec, header)?;
        let hash = match spec.kind {
            SystemKind::SubbandNlms => hash_json(&matrix.nlms),
            SystemKind::IrmOracle => hash_json(&matrix.irm),
            _ => hash,
        };
        config_hashes.insert(spec.name.clone(), hash);
        systems.push((spec.name.clone(), loaded));
    }
    let mut proxies = Vec::with_capacity(matrix.proxies.len());
    for p in &matrix.proxies {
        let cell = format!("proxy {}", p.name);
        let path = require(&Some(p.checkpoint.clone()), &cell)?;
        let rec = ProxyRecognizer::load(&path)?;
        if rec.meta.mel != header.mel {
            return Err(AecError::InvalidConfig(format!("{cell}: mel configuration differs from the dataset's")));
        }
        config_hashes.insert(format!("proxy:{}", p.name), hash_json(&rec.meta));
        proxies.push((p.name.clone(), rec));
    }

    let examples: Vec<UtteranceExample> = load_split(dataset_dir, &manifest, matrix.split, true)?
        .into_iter()
        .filter(|e| matrix.terr_levels.contains(&e.mix.terr_db))
        .collect();
    let mut id_list_hashes = BTreeMap::new();
    let mut level_ids: Vec<(f64, String)> = Vec::new();
    for &terr in &matrix.terr_levels {
        let ids: Vec<&str> = examples.iter().filter(|e| e.mix.terr_db == terr).map(|e| e.id.as_str()).collect();
        if ids.is_empty() {
            return Err(AecError::MissingArtifact {
                cell: format!("TERR {}", level_key(terr)),
                what: format!("no {} examples at this level", matrix.split.name()),
            });
        }
        let h = id_list_hash(&ids);
        id_list_hashes.insert(level_key(terr), h.clone());
        level_ids.push((terr, h));
    }

    let chunk = examples.len().div_ceil(threads.max(1)).max(1);
    let mut per_example = Vec::with_capacity(systems.len() * examples.len());
    for (name, sys) in &systems {
        let eval = |part: &[UtteranceExample]| -> Result<Vec<ExampleMetrics>> {
            part.iter()
                .map(|ex| score(name, &run_system(sys, ex, header, matrix)?, ex, &proxies, matrix))
                .collect()
        };
        let parts: Vec<Result<Vec<ExampleMetrics>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = examples.chunks(chunk).map(|part| scope.spawn(move || eval(part))).collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        for p in parts {
            per_example.extend(p?);
        }
    }

    let mut aggregates = Vec::new();
    for (name, _) in &systems {
        for (terr, h) in &level_ids {
            let rows: Vec<&ExampleMetrics> = per_example
                .iter()
                .filter(|r| &r.system == name && r.terr_db == *terr)
                .collect();
            let ids: Vec<&str> = rows.iter().map(|r| r.id.as_str()).collect();
            debug_assert_eq!(&id_list_hash(&ids), h);
            aggregates.push(aggregate(name, *terr, &rows, h));
        }
    }

    Ok(ExperimentReport {
        matrix: matrix.clone(),
        dataset_checksum: manifest.checksum(),
        dataset_config_hash: header.config_hash.clone(),
        config_hashes,
        id_list_hashes,
        per_example,
        aggregates,
    })
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn cell(&self, system: &str, terr: f64) -> Option<&CellAggregate> {
        self.aggregates.iter().find(|c| c.system == system && c.terr_db == terr)
    }

    /// Every (metric name, value extractor) shown in the table and CSV.
    fn metric_columns(&self) -> Vec<(String, Box<dyn Fn(&CellAggregate) -> Option<Stat> + '_>)> {
        let mut cols: Vec<(String, Box<dyn Fn(&CellAggregate) -> Option<Stat>>)> = vec![
            ("sdr_db".into(), Box::new(|c: &CellAggregate| Some(c.sdr_db))),
            ("lsd_db".into(), Box::new(|c: &CellAggregate| Some(c.lsd_db))),
            ("erle_db".into(), Box::new(|c: &CellAggregate| c.erle_db)),
        ];
        for p in &self.matrix.proxies {
            let k = p.name.clone();
            cols.push((format!("proxy_error:{k}"), Box::new(move |c: &CellAggregate| c.proxy_error.get(&k).copied())));
            let k = p.name.clone();
            cols.push((format!("latent_mse:{k}"), Box::new(move |c: &CellAggregate| c.latent_mse.get(&k).copied())));
        }
        cols
    }

    /// Plain-text tables, one per metric: rows are systems, columns are
    /// TERR levels, cells are mean ± std.
    pub fn render_table(&self) -> String {
        let levels = &self.matrix.terr_levels;
        let name_w = self.matrix.systems.iter().map(|s| s.name.len()).max().unwrap_or(6).max(6);
        let col_w = 20;
        let mut out = String::new();
        for (metric, get) in self.metric_columns() {
            let _ = writeln!(out, "{metric} (mean ± std)");
            let _ = write!(out, "{:<name_w$}", "system");
            for l in levels {
                let _ = write!(out, "  {:>col_w$}", format!("TERR {}", level_key(*l)));
            }
            out.push('\n');
            for s in &self.matrix.systems {
                let _ = write!(out, "{:<name_w$}", s.name);
                for l in levels {
                    let cell = self.cell(&s.name, *l).and_then(&get);
                    let text = match cell {
                        Some(st) => format!("{:.3} ± {:.3}", st.mean, st.std),
                        None => "n/a".to_string(),
                    };
                    let _ = write!(out, "  {text:>col_w$}");
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    /// Long-format CSV: one line per (system, TERR, metric).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("system,terr_db,metric,mean,std,n\n");
        let cols = self.metric_columns();
        for c in &self.aggregates {
            for (metric, get) in &cols {
                if let Some(st) = get(c) {
                    let _ = writeln!(out, "{},{},{},{},{},{}", c.system, c.terr_db, metric, st.mean, st.std, st.n);
                }
            }
        }
        out
    }
}
