use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use aec_core::asr_proxy::{make_keyword_corpus, train_proxy, ProxyArch, ProxyRecognizer};
use aec_core::baselines::{subband_nlms_erase, train_irm_predictor, IrmPredictor};
use aec_core::data::dataset::{load_split, load_training_set, read_manifest, MANIFEST_FILE};
use aec_core::data::{build_dataset, SourcePool, Split};
use aec_core::eval::{run_experiment_with_threads, Artifacts, ExperimentMatrix, ProxySpec};
use aec_core::neural::{train_step, NeuralAec, NeuralMeta, TrainState};
use aec_core::room::persist::{save_rir, RirSidecar};
use aec_core::room::{compute_rir, sample_room_config, SourceKind};
use aec_core::seed::derive_seed;
use aec_core::signal::wav::{read_wav, write_wav, WavEncoding};
use aec_core::signal::Role;
use aec_core::{AecError, Result, RunConfig};

/// Acoustic echo cancellation toolkit: room simulation, data synthesis,
/// training, inference and evaluation.
#[derive(Debug, Parser)]
#[command(name = "aec", version)]
struct Cli {
    /// JSON run configuration; every field is optional.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Base seed. Overrides the configuration's seed.
    #[arg(long, global = true, env = "AEC_SEED")]
    seed: Option<u64>,

    /// Upper bound on worker threads.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample rooms and write both impulse responses of each as WAV plus a
    /// JSON sidecar.
    Simulate(SimulateArgs),
    /// Synthesize an echoic dataset with stems, features and a manifest.
    SynthData(SynthArgs),
    /// Train a neural model, a mask predictor or a proxy recognizer.
    Train(TrainArgs),
    /// Remove the echo from a probe recording.
    Erase(EraseArgs),
    /// Score systems on a dataset and write the report.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Number of rooms.
    #[arg(long, default_value_t = 4)]
    rooms: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Training examples [default: from config]
    #[arg(long)]
    train: Option<usize>,
    /// Development examples [default: from config]
    #[arg(long)]
    dev: Option<usize>,
    /// Test examples [default: from config]
    #[arg(long)]
    test: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Neural,
    Irm,
    ProxyA,
    ProxyB,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// What to train.
    #[arg(long, value_enum, default_value_t = Kind::Neural)]
    kind: Kind,
    /// Dataset directory (neural and irm).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Proxy recognizer checkpoint for the latent loss (neural).
    #[arg(long)]
    proxy: Option<PathBuf>,
    /// Train without the latent loss (lambda stays zero).
    #[arg(long)]
    no_latent_loss: bool,
    /// Train without SpecAugment.
    #[arg(long)]
    no_specaugment: bool,
    /// Train only on replayed-echo examples.
    #[arg(long)]
    no_synthetic: bool,
    /// Total optimization steps [default: from config]
    #[arg(long)]
    steps: Option<u64>,
    /// Continue training from this neural checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Write a checkpoint every N steps (neural); 0 writes only at the end.
    #[arg(long, default_value_t = 0)]
    checkpoint_every: u64,
    /// JSON-lines training log [default: <out>.log.jsonl]
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EraseArgs {
    /// Neural or mask-predictor checkpoint.
    #[arg(long, required_unless_present = "nlms")]
    checkpoint: Option<PathBuf>,
    /// Use the subband adaptive filter instead of a checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    nlms: bool,
    /// Microphone recording.
    #[arg(long)]
    probe: PathBuf,
    /// Playback reference.
    #[arg(long)]
    reference: PathBuf,
    /// Output WAV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Table => "txt",
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Experiment matrix JSON [default: the config's eval section]
    #[arg(long, conflicts_with = "artifacts")]
    matrix: Option<PathBuf>,
    /// Directory holding irm.ckpt, neural_full.ckpt, neural_no_latent.ckpt,
    /// neural_no_specaugment.ckpt, neural_no_synthetic.ckpt, proxy_a.ckpt and
    /// proxy_b.ckpt; evaluates the standard matrix over them.
    #[arg(long)]
    artifacts: Option<PathBuf>,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let threads = cli.threads as usize;
    match &cli.command {
        Command::Simulate(a) => simulate(&cfg, a),
        Command::SynthData(a) => synth_data(cfg, a),
        Command::Train(a) => train(cfg, a),
        Command::Erase(a) => erase(a),
        Command::Evaluate(a) => evaluate(&cfg, a, threads),
    }
}

fn simulate(cfg: &RunConfig, a: &SimulateArgs) -> Result<()> {
    let hash = cfg.hash();
    for i in 0..a.rooms {
        let seed = derive_seed(cfg.seed, "room", i as u64);
        let room = sample_room_config(seed, &cfg.room)?;
        let room_id = format!("room-{i:04}");
        for (kind, suffix) in [(SourceKind::TargetPath, "target"), (SourceKind::LoudspeakerPath, "loudspeaker")] {
            let rir = compute_rir(&room, kind, cfg.sources.sample_rate)?;
            let sidecar = RirSidecar {
                room_id: room_id.clone(),
                seed,
                source_kind: kind,
                sample_rate: cfg.sources.sample_rate,
                room: room.clone(),
                config_hash: Some(hash.clone()),
            };
            save_rir(&a.out, &format!("{room_id}_{suffix}"), &rir, &sidecar)?;
        }
    }
    println!("{}", a.out.display());
    Ok(())
}

fn synth_data(mut cfg: RunConfig, a: &SynthArgs) -> Result<()> {
    let counts = &mut cfg.dataset.counts;
    if let Some(n) = a.train {
        counts.train = n;
    }
    if let Some(n) = a.dev {
        counts.dev = n;
    }
    if let Some(n) = a.test {
        counts.test = n;
    }
    let pool = SourcePool::generate(&cfg.sources, cfg.seed)?;
    log::info!("synthesizing {:?} examples", cfg.dataset.counts);
    let manifest = build_dataset(&pool, &cfg.dataset, &cfg.room, &cfg.synth_settings(), cfg.seed, &cfg.hash(), &a.out)?;
    println!("{}", a.out.join(MANIFEST_FILE).display());
    println!("checksum {}", manifest.checksum());
    Ok(())
}

fn dataset_dir(a: &TrainArgs) -> Result<&Path> {
    let dir = a.data.as_deref().ok_or_else(|| AecError::InvalidConfig("--data is required for this kind".into()))?;
    if !dir.join(MANIFEST_FILE).is_file() {
        return Err(AecError::MissingArtifact {
            cell: "dataset".into(),
            what: format!("no manifest under {}", dir.display()),
        });
    }
    Ok(dir)
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(AecError::MissingArtifact {
            cell: what.to_string(),
            what: format!("{} not found", path.display()),
        })
    }
}

fn train(mut cfg: RunConfig, a: &TrainArgs) -> Result<()> {
    if a.no_latent_loss {
        cfg.latent_loss = false;
    }
    if a.no_specaugment {
        cfg.specaugment = None;
    }
    if a.no_synthetic {
        cfg.synthetic_data = false;
    }
    if let Some(s) = a.steps {
        cfg.train.max_steps = s;
    }
    match a.kind {
        Kind::ProxyA => train_proxy_cmd(&cfg, ProxyArch::A, a),
        Kind::ProxyB => train_proxy_cmd(&cfg, ProxyArch::B, a),
        Kind::Irm => {
            let dir = dataset_dir(a)?;
            let manifest = read_manifest(dir)?;
            let examples = load_split(dir, &manifest, Split::Train, true)?;
            let mut irm = cfg.irm.clone();
            if let Some(s) = a.steps {
                irm.steps = s;
            }
            let model = train_irm_predictor(&examples, &irm, &cfg.stft, cfg.mix.max_lag, cfg.irm_seed(), &cfg.hash())?;
            model.save(&a.out)?;
            println!("{} train mse {:.5}", a.out.display(), model.meta.train_mse);
            Ok(())
        }
        Kind::Neural => train_neural(&cfg, a),
    }
}

fn train_proxy_cmd(cfg: &RunConfig, arch: ProxyArch, a: &TrainArgs) -> Result<()> {
    let corpus = make_keyword_corpus(cfg.proxy_corpus_seed(), cfg.proxy.classes, cfg.proxy.per_class, cfg.sources.sample_rate);
    let feats = corpus.features(&cfg.stft, &cfg.mel)?;
    let mut tc = cfg.proxy.train_config(arch).clone();
    if let Some(s) = a.steps {
        tc.steps = s as usize;
    }
    let rec = train_proxy(&feats, &corpus.labels, cfg.proxy.classes, arch, &tc, &cfg.stft, &cfg.mel, cfg.proxy_seed(arch))?;
    rec.save(&a.out)?;
    println!("{} held-out accuracy {:.3}", a.out.display(), rec.meta.held_out_accuracy);
    Ok(())
}

fn train_neural(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    let dir = dataset_dir(a)?;
    let manifest = read_manifest(dir)?;
    if manifest.header.mel != cfg.mel || manifest.header.stft != cfg.stft {
        return Err(AecError::InvalidConfig("dataset features were made with a different stft or mel configuration".into()));
    }
    let proxy = if cfg.latent_loss {
        let path = a.proxy.as_deref().ok_or_else(|| AecError::MissingArtifact {
            cell: "latent loss".into(),
            what: "--proxy checkpoint is required unless --no-latent-loss is given".into(),
        })?;
        require_file(path, "proxy")?;
        Some(ProxyRecognizer::load(path)?)
    } else {
        None
    };
    let examples = load_training_set(dir, &manifest, cfg.synthetic_data)?;
    if examples.is_empty() {
        return Err(AecError::InvalidConfig("no training examples selected".into()));
    }
    let tc = cfg.train_config();
    let meta = NeuralMeta {
        model: cfg.model,
        train: tc.clone(),
        schedule: cfg.loss_schedule,
        stft: cfg.stft,
        mel: cfg.mel,
        sample_rate: manifest.header.sample_rate,
        max_lag: cfg.mix.max_lag,
        step: 0,
        latent_loss: cfg.latent_loss,
        config_hash: cfg.hash(),
    };
    let mut state = match &a.resume {
        Some(p) => {
            require_file(p, "resume")?;
            let prev = NeuralAec::load(p)?;
            if prev.meta.model != meta.model {
                return Err(AecError::InvalidConfig("resume checkpoint has a different model configuration".into()));
            }
            prev.train_state()
        }
        None => TrainState::fresh(&examples, &cfg.model, &tc),
    };
    tc.validate()?;
    cfg.loss_schedule.validate()?;
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".log.jsonl");
        PathBuf::from(p)
    });
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(a.resume.is_some())
        .write(true)
        .truncate(a.resume.is_none())
        .open(&log_path)
        .map_err(|e| AecError::io(&log_path, e))?;
    while state.step < tc.max_steps {
        let rec = train_step(&mut state, &examples, &cfg.model, &tc, &cfg.loss_schedule, proxy.as_ref())?;
        let line = serde_json::to_string(&rec).expect("log record serializes");
        writeln!(log, "{line}").map_err(|e| AecError::io(&log_path, e))?;
        if rec.step % 100 == 0 {
            log::info!("step {} spectral {:.4} latent {:.4} lambda {:.4}", rec.step, rec.spectral, rec.latent, rec.lambda);
        }
        if a.checkpoint_every > 0 && state.step % a.checkpoint_every == 0 && state.step < tc.max_steps {
            NeuralAec::from_state(meta.clone(), &state).save(&a.out)?;
        }
    }
    NeuralAec::from_state(meta, &state).save(&a.out)?;
    println!("{}", a.out.display());
    Ok(())
}

fn erase(a: &EraseArgs) -> Result<()> {
    if let Some(path) = &a.checkpoint {
        require_file(path, "checkpoint")?;
    }
    let probe = read_wav(&a.probe, None, Role::Probe)?;
    let reference = read_wav(&a.reference, Some(probe.sample_rate()), Role::Reference)?;
    let out = if a.nlms {
        subband_nlms_erase(&probe, &reference, &Default::default())?
    } else {
        let path = a.checkpoint.as_deref().expect("clap requires a checkpoint without --nlms");
        match NeuralAec::load(path) {
            Ok(m) => m.erase(&probe, &reference)?,
            Err(AecError::CorruptCheckpoint(first)) => match IrmPredictor::load(path) {
                Ok(m) => m.erase(&probe, &reference)?,
                Err(_) => return Err(AecError::CorruptCheckpoint(first)),
            },
            Err(e) => return Err(e),
        }
    };
    write_wav(&a.out, &out, WavEncoding::Float32)?;
    println!("{}", a.out.display());
    Ok(())
}

fn standard_artifacts(dir: &Path) -> Artifacts {
    let f = |name: &str| Some(dir.join(name));
    Artifacts {
        irm_predictor: f("irm.ckpt"),
        neural_full: f("neural_full.ckpt"),
        neural_no_latent: f("neural_no_latent.ckpt"),
        neural_no_specaugment: f("neural_no_specaugment.ckpt"),
        neural_no_synthetic: f("neural_no_synthetic.ckpt"),
        proxies: vec![
            ProxySpec {
                name: "proxy_a".into(),
                checkpoint: dir.join("proxy_a.ckpt"),
            },
            ProxySpec {
                name: "proxy_b".into(),
                checkpoint: dir.join("proxy_b.ckpt"),
            },
        ],
    }
}

fn evaluate(cfg: &RunConfig, a: &EvaluateArgs, threads: usize) -> Result<()> {
    let matrix = match (&a.matrix, &a.artifacts) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).map_err(|e| AecError::io(p, e))?;
            serde_json::from_str::<ExperimentMatrix>(&text).map_err(|e| AecError::InvalidConfig(format!("{}: {e}", p.display())))?
        }
        (None, Some(dir)) => ExperimentMatrix {
            nlms: cfg.eval.nlms,
            irm: cfg.eval.irm,
            terr_levels: cfg.eval.terr_levels.clone(),
            ..ExperimentMatrix::standard(&standard_artifacts(dir))
        },
        (None, None) => cfg.eval.clone(),
    };
    let report = run_experiment_with_threads(&matrix, &a.data, threads)?;
    std::fs::create_dir_all(&a.out).map_err(|e| AecError::io(&a.out, e))?;
    let path = a.out.join(format!("report.{}", a.format.extension()));
    let body = match a.format {
        Format::Table => report.render_table(),
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    std::fs::write(&path, &body).map_err(|e| AecError::io(&path, e))?;
    let mut stdout = std::io::stdout().lock();
    if a.format == Format::Table {
        let _ = stdout.write_all(body.as_bytes());
    }
    let _ = writeln!(stdout, "{}", path.display());
    Ok(())
}
