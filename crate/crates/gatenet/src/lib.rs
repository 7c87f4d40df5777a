//! Training-free construction and verification of gate-controlled residual
//! networks.
//!
//! The crate builds explicit ResNet weights that exactly classify any finite
//! labeled point set, without any training loop. Each residual block pairs an
//! identity (or projection) shortcut with a small gate network; the gate
//! decides per input whether a unit passes its shortcut value through as an
//! affine shift or is forced to zero by a large negative gate weight.
//!
//! Modules:
//!
//! - [`net`] — block/network data model and exact forward evaluation.
//! - [`geometry`] — separating-hyperplane certificates and convex polytope
//!   covers of one category against the rest.
//! - [`construct`] — weight synthesis: per-facet block chains, parallel
//!   branches with depth equalization, readout, and the merge into a single
//!   projection-shortcut network.
//! - [`approx`] — 1-D piecewise-constant function approximators built from
//!   the same block form.
//! - [`verify`] — executable audits of the constructed invariants
//!   (exclusion, pass-through, layer preservation, merge equivalence).
//! - [`io`] — bit-exact text serialization of datasets, networks, reports.
//! - [`render`] — 2-D decision-region SVG output.

pub mod approx;
pub mod construct;
pub mod geometry;
pub mod io;
pub mod net;
pub mod render;
pub mod verify;

use thiserror::Error;

/// Absolute tolerance for "exactly zero" claims in verification.
///
/// Evaluation itself is raw arithmetic; the constructions guarantee true
/// zeros after ReLU, so this only covers pre-activation noise propagated
/// through traces.
pub const TAU: f64 = 1e-9;

/// Minimum certified separation margin after normalizing the hyperplane
/// normal to unit max-norm.
pub const GAMMA_MIN: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("duplicate points in dataset at rows {0:?}")]
    DuplicatePoints(Vec<usize>),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("no one-sided separating hyperplane with certified margin exists")]
    Infeasible,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("synthesized network failed self-verification: {0}")]
    VerificationFailed(String),

    #[error("invalid approximation spec: {0}")]
    InvalidSpec(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported file version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;
