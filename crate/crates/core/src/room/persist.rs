use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RoomConfig;
use super::ism::{Rir, SourceKind};
use crate::error::{AecError, Result};
use crate::signal::wav::{read_wav, write_wav, WavEncoding};
use crate::signal::Role;

/// JSON written next to each RIR WAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RirSidecar {
    pub room_id: String,
    pub seed: u64,
    pub source_kind: SourceKind,
    pub sample_rate: u32,
    pub room: RoomConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Writes `<stem>.wav` (32-bit float) and `<stem>.json`.
pub fn save_rir(dir: &Path, stem: &str, rir: &Rir, sidecar: &RirSidecar) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AecError::io(dir, e))?;
    write_wav(&dir.join(format!("{stem}.wav")), &rir.as_waveform(), WavEncoding::Float32)?;
    let json_path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    std::fs::write(&json_path, text).map_err(|e| AecError::io(&json_path, e))
}

pub fn load_rir(dir: &Path, stem: &str) -> Result<(Rir, RirSidecar)> {
    let json_path = dir.join(format!("{stem}.json"));
    let text = std::fs::read_to_string(&json_path).map_err(|e| AecError::io(&json_path, e))?;
    let sidecar: RirSidecar =
        serde_json::from_str(&text).map_err(|e| AecError::format(&json_path, e.to_string()))?;
    let wave = read_wav(&dir.join(format!("{stem}.wav")), Some(sidecar.sample_rate), Role::Unspecified)?;
    Ok((
        Rir {
            taps: wave.into_samples(),
            sample_rate: sidecar.sample_rate,
            source_kind: sidecar.source_kind,
        },
        sidecar,
    ))
}
