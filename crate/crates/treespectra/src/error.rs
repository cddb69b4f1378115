//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("not a tree: {0}")]
    NotATree(String),

    #[error("degree bound {bound} exceeded at vertex '{vertex}' (degree {degree})")]
    DegreeBound {
        vertex: String,
        degree: usize,
        bound: usize,
    },

    #[error("zero edge weight on '{a}' -- '{b}'")]
    ZeroEdgeWeight { a: String, b: String },

    #[error("unknown vertex: {0}")]
    UnknownVertex(String),

    #[error("vertices {0} and {1} do not lie together in the cut component")]
    SeparatedByCut(String, String),

    #[error("inadmissible spectral parameter: {0}")]
    InadmissibleParameter(String),

    #[error("near-pole denominator ({0})")]
    NearPole(String),

    #[error("depth {depth} out of range: {reason}")]
    DepthRange { depth: u32, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("ray cannot extend: {0}")]
    RayExtension(String),

    #[error("eigen-equation residual {residual:.3e} exceeds gate {gate:.3e} at vertex {vertex}")]
    EigenResidual {
        vertex: String,
        residual: f64,
        gate: f64,
    },

    #[error("quadrature panel refinement exhausted near E = {0}")]
    QuadratureRefinement(f64),

    #[error("truncation too large for a dense solve ({0} vertices)")]
    TruncationTooLarge(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
