//! Cramér–Rao lower bounds for rigid body localization.
//!
//! The crate assembles Fisher information matrices for the translation `t`
//! and the vectorized rotation `vec(Q)` of a rigid body observed through
//! heterogeneous measurements (distances, angles of arrival, angle
//! differences of arrival) with per-edge noise models. Each measurement adds
//! a rank-one term `λ v vᵀ`: `λ` is the Fisher information of the noise model
//! with respect to the dissimilarity and `v` is the dissimilarity gradient.
//!
//! From those matrices [`bounds`] evaluates the exact and trace-approximate
//! bounds as well as the bound constrained to SO(3). [`estimators`] provides
//! reference estimators and a Monte Carlo harness for comparing empirical MSE
//! against the bounds, and [`fim::mc_fim_oracle`] cross-checks the rank-one
//! assembly against the expectation of the full-likelihood score.

pub mod bounds;
pub mod config;
pub mod dissimilarity;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod fim;
pub mod geometry;
pub mod intensity;
pub mod scenario;
pub mod stats;
pub mod validation;

pub use error::{Error, Result};
pub use exec::Exec;
