//! Minimal reverse-mode differentiation over 2-D matrices, plus the
//! parameter container and Adam optimizer used by every trainable model.

pub mod adam;
pub mod layers;
pub mod params;
pub mod tape;

pub use adam::{Adam, AdamConfig};
pub use params::{Bound, ParamStore};
pub use tape::{Gradients, Real, Tape, Var};
