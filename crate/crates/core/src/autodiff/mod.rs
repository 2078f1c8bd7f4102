//! Exact derivatives: forward-mode jets in the disc coordinates and reverse
//! accumulation over parameters.

mod jet;
mod tape;

pub use jet::{Axis, ComplexJet, Jet2};
pub use tape::{JetVar, SVar, Scalar, Tape};
