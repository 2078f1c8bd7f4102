//! Neural-network discs in hyperbolic space bounding a prescribed knot.
//!
//! A disc is the map `u_θ = (ρ·exp(NNˣ), ext(γ) + ρᵏ·NNʸ)` from the closed
//! unit disc into the half-space model of `H^{n+1}`. Its boundary values are
//! fixed by construction; training drives the tension field towards zero so
//! that `u_θ` approximates a minimal immersion. Double points of trained
//! discs in `H⁴` are located and signed, and their signed count is compared
//! with the HOMFLY polynomial of the boundary knot.

// `!(a > b)` is used on purpose so that NaN takes the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod boundary;
pub mod error;
pub mod intersections;
pub mod invariants;
pub mod network;
pub mod residual;
pub mod surface;
pub mod training;

pub use boundary::{KnotCurve, Preset};
pub use error::{Error, Result};
pub use intersections::{DiscMap, DoublePointRecord, IntersectionReport, ModelMap, SearchParams};
pub use invariants::{HomflyPolynomial, Verdict};
pub use network::{Activation, InitScheme, MlpArchitecture, ParameterVector};
pub use surface::{ModelConfig, SurfaceModel};
pub use training::{McStats, TrainConfig, TrainReport};
