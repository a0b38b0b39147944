use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "mel": {"num_mels": 24},
  "model": {"mel_dim": 24, "encoder_width": 8, "decoder_width": 8, "prenet_width": 8, "postnet_filters": 8, "postnet_layers": 2},
  "sources": {"keyword_classes": 3, "keywords_per_class": 4, "references": 6, "reference_secs": 2.0, "noises": 6, "noise_secs": 1.5},
  "dataset": {"counts": {"train": 6, "dev": 1, "test": 3}},
  "proxy": {"classes": 3, "per_class": 6, "a": {"steps": 10, "width": 8}, "b": {"steps": 10, "width": 8, "layers": 1}},
  "irm": {"steps": 10, "hidden": 16},
  "train": {"batch_size": 4, "max_steps": 3},
  "loss_schedule": {"lambda_final": 1.0, "ramp_steps": 4}
}"#;

fn aec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aec"))
        .args(args)
        .env_remove("AEC_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Work {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

fn work() -> Work {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("small.json");
    std::fs::write(&config, SMALL).unwrap();
    Work { _dir: dir, root, config }
}

impl Work {
    fn run(&self, args: &[&str]) -> Output {
        let mut full = vec!["--config", s(&self.config)];
        full.extend_from_slice(args);
        aec(&full)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn synth(&self, name: &str) -> (PathBuf, String) {
        let out = self.path(name);
        let text = ok(self.run(&["synth-data", "--out", s(&out)]));
        (out, text)
    }
}

#[test]
fn help_documents_every_flag() {
    let cases: &[(&str, &[&str])] = &[
        ("", &["--config", "--seed", "--threads", "--verbose", "simulate", "synth-data", "train", "erase", "evaluate"]),
        ("simulate", &["--rooms", "--out"]),
        ("synth-data", &["--out", "--train", "--dev", "--test"]),
        (
            "train",
            &[
                "--kind",
                "--data",
                "--out",
                "--proxy",
                "--no-latent-loss",
                "--no-specaugment",
                "--no-synthetic",
                "--steps",
                "--resume",
                "--checkpoint-every",
                "--log",
                "neural",
                "irm",
                "proxy-a",
                "proxy-b",
            ],
        ),
        ("erase", &["--checkpoint", "--nlms", "--probe", "--reference", "--out"]),
        ("evaluate", &["--data", "--matrix", "--artifacts", "--out", "--format", "table", "json", "csv"]),
    ];
    for (sub, flags) in cases {
        let args: Vec<&str> = if sub.is_empty() { vec!["--help"] } else { vec![sub, "--help"] };
        let o = aec(&args);
        assert_eq!(code(&o), 0);
        let text = stdout(&o);
        for f in *flags {
            assert!(text.contains(f), "`aec {sub} --help` does not mention {f}");
        }
    }
}

#[test]
fn usage_and_config_errors_exit_two() {
    let w = work();
    assert_eq!(code(&aec(&["no-such-command"])), 2);
    assert_eq!(code(&aec(&["--threads", "0", "simulate", "--out", s(&w.path("r"))])), 2);
    assert_eq!(code(&aec(&["erase", "--probe", "a.wav", "--reference", "b.wav", "--out", "c.wav"])), 2);
    let bad = w.path("bad.json");
    std::fs::write(&bad, r#"{"stft": {"hop": 0}}"#).unwrap();
    assert_eq!(code(&aec(&["--config", s(&bad), "simulate", "--out", s(&w.path("r"))])), 2);
    std::fs::write(&bad, r#"{"unknown": true}"#).unwrap();
    assert_eq!(code(&aec(&["--config", s(&bad), "simulate", "--out", s(&w.path("r"))])), 2);
    let mismatch = w.path("mismatch.json");
    std::fs::write(&mismatch, r#"{"mel": {"num_mels": 24}}"#).unwrap();
    assert_eq!(code(&aec(&["--config", s(&mismatch), "simulate", "--out", s(&w.path("r"))])), 2);
}

#[test]
fn missing_artifacts_exit_four_and_io_errors_exit_three() {
    let w = work();
    let wav = w.path("x.wav");
    std::fs::write(&wav, b"not a wav file").unwrap();
    let o = w.run(&["erase", "--checkpoint", s(&w.path("absent.ckpt")), "--probe", s(&wav), "--reference", s(&wav), "--out", s(&w.path("o.wav"))]);
    assert_eq!(code(&o), 4);
    let o = w.run(&["erase", "--nlms", "--probe", s(&wav), "--reference", s(&wav), "--out", s(&w.path("o.wav"))]);
    assert_eq!(code(&o), 3);
    let o = w.run(&["train", "--kind", "neural", "--data", s(&w.path("nodata")), "--out", s(&w.path("m.ckpt")), "--no-latent-loss"]);
    assert_eq!(code(&o), 4);
    let o = w.run(&["evaluate", "--data", s(&w.path("nodata")), "--out", s(&w.path("rep"))]);
    assert_eq!(code(&o), 4);

    let (data, _) = w.synth("data");
    let o = w.run(&["train", "--kind", "neural", "--data", s(&data), "--out", s(&w.path("m.ckpt"))]);
    assert_eq!(code(&o), 4, "latent loss without --proxy");
}

#[test]
fn simulate_writes_rooms() {
    let w = work();
    let out = w.path("rooms");
    ok(w.run(&["simulate", "--rooms", "2", "--out", s(&out)]));
    for i in 0..2 {
        for kind in ["target", "loudspeaker"] {
            assert!(out.join(format!("room-{i:04}_{kind}.wav")).is_file());
            assert!(out.join(format!("room-{i:04}_{kind}.json")).is_file());
        }
    }
}

#[test]
fn synth_data_is_deterministic_per_seed() {
    let w = work();
    let (a, ta) = w.synth("a");
    let (b, tb) = w.synth("b");
    let checksum = |t: &str| t.lines().find(|l| l.starts_with("checksum")).unwrap().to_string();
    assert_eq!(checksum(&ta), checksum(&tb));
    let manifest = |d: &Path| std::fs::read(d.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest(&a), manifest(&b));
    let c = w.path("c");
    let tc = ok(w.run(&["--seed", "7", "synth-data", "--out", s(&c)]));
    assert_ne!(checksum(&ta), checksum(&tc));
    let d = w.path("d");
    let td = ok(w.run(&["synth-data", "--out", s(&d), "--test", "6"]));
    assert_ne!(checksum(&ta), checksum(&td));
}

fn log_lambdas(path: &Path) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["lambda"].as_f64().unwrap())
        .collect()
}

#[test]
fn training_logs_and_resume() {
    let w = work();
    let (data, _) = w.synth("data");
    let proxy = w.path("proxy_a.ckpt");
    ok(w.run(&["train", "--kind", "proxy-a", "--out", s(&proxy)]));

    let full = w.path("full.ckpt");
    ok(w.run(&["train", "--data", s(&data), "--proxy", s(&proxy), "--out", s(&full), "--steps", "6"]));
    let lambdas = log_lambdas(&w.path("full.ckpt.log.jsonl"));
    assert_eq!(lambdas, vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.0]);

    let plain = w.path("plain.ckpt");
    let log = w.path("plain.jsonl");
    ok(w.run(&["train", "--data", s(&data), "--out", s(&plain), "--no-latent-loss", "--steps", "4", "--log", s(&log)]));
    let lambdas = log_lambdas(&log);
    assert_eq!(lambdas.len(), 4);
    assert!(lambdas.iter().all(|&l| l == 0.0));

    let half = w.path("half.ckpt");
    ok(w.run(&["train", "--data", s(&data), "--out", s(&half), "--no-latent-loss", "--steps", "2"]));
    let resumed = w.path("resumed.ckpt");
    ok(w.run(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&resumed),
        "--no-latent-loss",
        "--steps",
        "4",
        "--resume",
        s(&half),
    ]));
    assert_eq!(std::fs::read(&plain).unwrap(), std::fs::read(&resumed).unwrap());
}

#[test]
fn evaluate_and_erase_end_to_end() {
    let w = work();
    let (data, _) = w.synth("data");
    let art = w.path("art");
    std::fs::create_dir_all(&art).unwrap();
    let a = |n: &str| art.join(n);
    ok(w.run(&["train", "--kind", "proxy-a", "--out", s(&a("proxy_a.ckpt"))]));
    ok(w.run(&["train", "--kind", "proxy-b", "--out", s(&a("proxy_b.ckpt"))]));
    ok(w.run(&["train", "--kind", "irm", "--data", s(&data), "--out", s(&a("irm.ckpt"))]));
    let d = s(&data);
    ok(w.run(&["train", "--data", d, "--proxy", s(&a("proxy_a.ckpt")), "--out", s(&a("neural_full.ckpt"))]));
    ok(w.run(&["train", "--data", d, "--no-latent-loss", "--out", s(&a("neural_no_latent.ckpt"))]));
    ok(w.run(&["train", "--data", d, "--no-latent-loss", "--no-specaugment", "--out", s(&a("neural_no_specaugment.ckpt"))]));
    ok(w.run(&[
        "train",
        "--data",
        d,
        "--no-latent-loss",
        "--no-specaugment",
        "--no-synthetic",
        "--out",
        s(&a("neural_no_synthetic.ckpt")),
    ]));

    let rep = w.path("rep");
    let out = ok(w.run(&["evaluate", "--data", d, "--artifacts", s(&art), "--out", s(&rep), "--format", "json"]));
    assert!(out.contains("report.json"));
    let first = std::fs::read_to_string(rep.join("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(v["aggregates"].as_array().unwrap().len(), 8 * 3);
    ok(w.run(&["--threads", "2", "evaluate", "--data", d, "--artifacts", s(&art), "--out", s(&rep), "--format", "json"]));
    assert_eq!(first, std::fs::read_to_string(rep.join("report.json")).unwrap());
    ok(w.run(&["evaluate", "--data", d, "--artifacts", s(&art), "--out", s(&rep), "--format", "csv"]));
    assert!(std::fs::read_to_string(rep.join("report.csv")).unwrap().starts_with("system,terr_db,metric,mean,std,n"));
    ok(w.run(&["evaluate", "--data", d, "--out", s(&rep)]));
    let table = std::fs::read_to_string(rep.join("report.txt")).unwrap();
    assert!(table.contains("subband_nlms") && !table.contains("neural_full"));
    let o = w.run(&["evaluate", "--data", d, "--out", s(&rep), "--format", "yaml"]);
    assert_eq!(code(&o), 2);

    let manifest = std::fs::read_to_string(data.join("manifest.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(manifest.lines().last().unwrap()).unwrap();
    let stem = |k: &str| data.join(rec["paths"][k].as_str().unwrap_or_else(|| panic!("no {k} path")));
    let (probe, reference) = (stem("probe"), stem("ref"));
    for (flag, ckpt) in [("--checkpoint", Some(a("neural_full.ckpt"))), ("--checkpoint", Some(a("irm.ckpt"))), ("--nlms", None)] {
        let out = w.path("erased.wav");
        let mut args = vec!["erase", flag];
        if let Some(c) = &ckpt {
            args.push(s(c));
        }
        args.extend_from_slice(&["--probe", s(&probe), "--reference", s(&reference), "--out", s(&out)]);
        ok(w.run(&args));
        let r = hound::WavReader::open(&out).unwrap();
        assert!(r.len() > 0);
        std::fs::remove_file(&out).unwrap();
    }
}
