//! Observation-indexed state-feedback synthesis and closed-loop
//! certification.
//!
//! Synthesis solves LMIs in `(X_i, Y_i^m, s_i)`, where `X_i` is the
//! inverse of a mode's Lyapunov matrix and `Y_i^m` the gain times `X_i`,
//! then re-weights `Y_i^m X_i⁻¹` by the inverse emission matrix so that
//! the gains act on observed modes. Certification checks a fixed gain
//! bank against the generator condition
//! `Ψ_i^m = P_i Ā + ĀᵀP_i + Σ_j γ_ij P_j + s P_i D Dᵀ P_i ≺ 0`.

mod bank;
mod build;
mod certify;

pub use bank::{ControllerBank, GainKey, LyapunovData, Scheme};
pub use build::{
    build_centralized, build_distributed, build_fullinfo, recover_gains, synthesize_centralized,
    synthesize_distributed, synthesize_fullinfo, SynthesisOptions, SynthesisProblem,
};
pub use certify::{build_psi, certify_gains, check_corollary, Certificate, CertificateSource};

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::lmi::{LmiError, SolveStatus};
use crate::model::ModelError;

/// Below this minimum eigenvalue an `X_i` is treated as singular.
pub const SINGULAR_X_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("invalid model: {0}")]
    InvalidModel(#[from] ModelError),
    #[error("LMI solution is not feasible (status {0:?})")]
    NotFeasible(SolveStatus),
    #[error("X for mode {mode} is numerically singular (min eigenvalue {min_eig:e})")]
    SingularX { mode: usize, min_eig: f64 },
    #[error("no gain for {0}")]
    MissingGain(GainKey),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
