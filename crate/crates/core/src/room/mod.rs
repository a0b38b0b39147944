//! Shoebox room acoustics by the image-source method.

pub mod config;
pub mod convolve;
pub mod ism;
pub mod persist;

pub use config::{sample_room_config, RoomConfig, RoomConstraints};
pub use ism::{apply_rir, compute_rir, Rir, SourceKind};
