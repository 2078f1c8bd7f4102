//! Boundary knots, boundary defining functions and extensions of the knot
//! into the disc.

mod curve;
mod extension;

pub use curve::{
    mirror_curve, perturb, preset_by_name, preset_curve, torus_knot, torus_label, KnotCurve, Preset,
    INJECTIVITY_SAMPLES, INJECTIVITY_WINDOW,
};
pub use extension::{
    build_extension, eval_extension, mode_coefficients, rho, rho_st, ExtensionField, ExtensionKind, RhoKind,
};
