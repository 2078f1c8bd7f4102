use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain violation in {op}: argument {value:e}")]
    Domain { op: &'static str, value: f64 },

    #[error("non-finite value produced by {op} at node {node}")]
    NonFinite { op: &'static str, node: usize },

    #[error("parameter vector has length {got}, architecture expects {expected}")]
    ParamLength { expected: usize, got: usize },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("torus({p},{q}) is not a knot: need p, q nonzero and coprime")]
    NotAKnot { p: i64, q: i64 },

    #[error("unknown knot preset `{0}`")]
    UnknownPreset(String),

    #[error("perturbed curve is not embedded: minimum separation {separation:e}")]
    NotEmbedded { separation: f64 },

    #[error("invalid model configuration: {0}")]
    InvalidModel(String),

    #[error("point ({x}, {y}) lies outside the closed unit disc")]
    OutsideDisc { x: f64, y: f64 },

    #[error("point ({x}, {y}) is not strictly inside the unit disc")]
    NotInterior { x: f64, y: f64 },

    #[error("induced metric is degenerate at {count} point(s), indices {indices:?}")]
    Degenerate { count: usize, indices: Vec<usize> },

    #[error("map requires n = {expected}, got n = {got}")]
    Dimension { expected: usize, got: usize },

    #[error("more than {cap} candidate pairs; use a smaller image threshold")]
    TooManyCandidates { cap: usize },

    #[error("double point at ({p1:?}, {p2:?}) is not transverse: |det| = {det:e}")]
    NonTransverse { p1: [f64; 2], p2: [f64; 2], det: f64 },

    #[error("no HOMFLY polynomial stored for `{0}`")]
    UnknownKnot(String),

    #[error("invalid training configuration: {0}")]
    InvalidTraining(String),
}
