use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;

use aec_core::neural::model::FeatureStats;
use aec_core::neural::{init_params, LossSchedule, ModelConfig, NeuralAec, NeuralMeta, TrainConfig};
use aec_core::signal::{MelConfig, StftConfig};
use aec_ffi::*;

fn noise(n: usize, seed: u32) -> Vec<f32> {
    let mut s = seed;
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(1_103_515_245).wrapping_add(12_345);
            ((s >> 8) & 0xffff) as f32 / 65_535.0 * 0.2 - 0.1
        })
        .collect()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(aec_last_error()) }.to_string_lossy().into_owned()
}

fn tiny_checkpoint(dir: &Path) -> PathBuf {
    let model = ModelConfig {
        encoder_layers: 1,
        encoder_width: 8,
        decoder_width: 8,
        mel_dim: 24,
        prenet_width: 8,
        postnet_layers: 2,
        postnet_filters: 8,
        ..ModelConfig::default()
    };
    let mel = MelConfig {
        num_mels: 24,
        ..MelConfig::default()
    };
    let aec = NeuralAec {
        meta: NeuralMeta {
            model,
            train: TrainConfig::default(),
            schedule: LossSchedule::default(),
            stft: StftConfig::default(),
            mel,
            sample_rate: 16_000,
            max_lag: 800,
            step: 0,
            latent_loss: false,
            config_hash: String::new(),
        },
        params: init_params(&model, &FeatureStats::identity(24), 3),
        adam: None,
    };
    let path = dir.join("tiny.ckpt");
    aec.save(&path).unwrap();
    path
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(aec_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn nlms_removes_linear_echo() {
    let r = noise(32_000, 7);
    let p: Vec<f32> = (0..r.len()).map(|i| 0.5 * r[i] + if i >= 5 { 0.25 * r[i - 5] } else { 0.0 }).collect();
    let mut out = vec![0.0f32; p.len()];
    let st = unsafe { aec_nlms_erase(p.as_ptr(), p.len(), r.as_ptr(), r.len(), 16_000, out.as_mut_ptr()) };
    assert_eq!(st, AecStatus::Ok, "{}", last_error());
    let tail = p.len() / 2..;
    let pin: f64 = p[tail.clone()].iter().map(|v| (*v as f64).powi(2)).sum();
    let pout: f64 = out[tail].iter().map(|v| (*v as f64).powi(2)).sum();
    assert!(10.0 * (pin / pout).log10() > 20.0);
}

#[test]
fn null_and_empty_inputs_are_rejected() {
    let r = noise(100, 1);
    let mut out = vec![0.0f32; 100];
    let st = unsafe { aec_nlms_erase(std::ptr::null(), 100, r.as_ptr(), 100, 16_000, out.as_mut_ptr()) };
    assert_eq!(st, AecStatus::InvalidArgument);
    assert!(last_error().contains("probe"));
    let st = unsafe { aec_nlms_erase(r.as_ptr(), 0, r.as_ptr(), 100, 16_000, out.as_mut_ptr()) };
    assert_eq!(st, AecStatus::InvalidArgument);
    let mut db = 0.0;
    let st = unsafe { aec_sdr(r.as_ptr(), r.as_ptr(), 100, &mut db) };
    assert_eq!(st, AecStatus::Ok);
    assert!(last_error().is_empty());
}

#[test]
fn silent_reference_reports_no_signal() {
    let z = vec![0.0f32; 64];
    let e = noise(64, 2);
    let mut db = 0.0;
    let st = unsafe { aec_sdr(e.as_ptr(), z.as_ptr(), 64, &mut db) };
    assert_eq!(st, AecStatus::NoSignal);
}

#[test]
fn missing_checkpoint_is_missing_artifact() {
    let path = CString::new("/nonexistent/dir/model.ckpt").unwrap();
    let mut h: *mut AecNeural = std::ptr::null_mut();
    assert_eq!(unsafe { aec_neural_load(path.as_ptr(), &mut h) }, AecStatus::MissingArtifact);
    assert!(h.is_null());
    let mut m: *mut AecMaskPredictor = std::ptr::null_mut();
    assert_eq!(unsafe { aec_mask_load(path.as_ptr(), &mut m) }, AecStatus::MissingArtifact);
}

#[test]
fn neural_handle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path());
    let c = CString::new(ckpt.to_str().unwrap()).unwrap();
    let mut h: *mut AecNeural = std::ptr::null_mut();
    assert_eq!(unsafe { aec_neural_load(c.as_ptr(), &mut h) }, AecStatus::Ok, "{}", last_error());
    assert!(!h.is_null());

    let r = noise(8_000, 4);
    let p: Vec<f32> = r.iter().map(|v| 0.5 * v).collect();
    let mut need = 0usize;
    let st = unsafe { aec_neural_erase(h, p.as_ptr(), p.len(), r.as_ptr(), r.len(), 16_000, std::ptr::null_mut(), 0, &mut need) };
    assert_eq!(st, AecStatus::BufferTooSmall);
    assert!(need > 0);
    let mut out = vec![0.0f32; need];
    let mut got = 0usize;
    let st = unsafe { aec_neural_erase(h, p.as_ptr(), p.len(), r.as_ptr(), r.len(), 16_000, out.as_mut_ptr(), out.len(), &mut got) };
    assert_eq!(st, AecStatus::Ok, "{}", last_error());
    assert_eq!(got, need);
    assert!(out.iter().all(|v| v.is_finite()));

    let mut m: *mut AecMaskPredictor = std::ptr::null_mut();
    assert_eq!(unsafe { aec_mask_load(c.as_ptr(), &mut m) }, AecStatus::CorruptCheckpoint);
    unsafe { aec_neural_free(h) };
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/aec.h")).unwrap();
    for name in [
        "aec_version",
        "aec_last_error",
        "aec_nlms_erase",
        "aec_neural_load",
        "aec_neural_erase",
        "aec_neural_free",
        "aec_mask_load",
        "aec_mask_erase",
        "aec_mask_free",
        "aec_sdr",
        "typedef struct AecNeural AecNeural",
        "typedef struct AecMaskPredictor AecMaskPredictor",
        "AEC_STATUS_MISSING_ARTIFACT = 4",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn c_program_links_against_static_library() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libaec_ffi.a");
    assert!(lib.is_file(), "{} not built", lib.display());
    let out_dir = tempfile::tempdir().unwrap();
    let exe = out_dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stdout));
}
