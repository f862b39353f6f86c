//! Numerical engine for groups of Heisenberg type.
//!
//! Starting from a real Clifford module (a family of antisymmetric matrices
//! satisfying the Clifford relation) the crate builds the associated step-two
//! Carnot group, its left-invariant frame and sublaplacian, the flat contact
//! structure with its extremal profile and spherical inversion, the canonical
//! connection obtained by solving its defining linear conditions pointwise,
//! the conformal change of scalar curvature, and a Yamabe-quotient minimizer
//! on periodic grids.

pub mod clifford;
pub mod connection;
pub mod flat;
pub mod group;
pub mod jet;
pub mod projectors;
pub mod report;
pub mod yamabe;

pub use clifford::{CliffordModule, IwasawaWitness, VerificationReport};
pub use connection::{ConnectionAtPoint, CurvatureSummary, FrameConnection};
pub use flat::{CalibrationRecord, FlatContactStructure};
pub use group::{GroupPoint, HTypeGroup};
pub use jet::{FieldSpec, Jet2, ScalarField};
pub use projectors::ProjectorPair;
pub use yamabe::{GridField, MinimizeOptions, TorusGrid, YamabeResult};

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum HtypeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("clifford relations violated: {0}")]
    CliffordViolation(String),
    #[error("singular point for the spherical inversion")]
    SingularPoint,
    #[error("group is not of Iwasawa type: {0}")]
    NotIwasawa(String),
    #[error("convention mismatch: {0}")]
    ConventionMismatch(String),
    #[error("uniqueness violation in the connection solve: {0}")]
    UniquenessViolation(String),
    #[error("verification failure: {0}")]
    VerificationFailure(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HtypeError>;
