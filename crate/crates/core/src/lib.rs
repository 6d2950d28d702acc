//! Multi-material ("multi-bang") optimization of PDE coefficients.
//!
//! The crate is organized bottom-up:
//!
//! * [`multibang`] holds the pointwise convex analysis: the multi-bang penalty,
//!   its convex envelope, the subdifferential of the conjugate, and the
//!   Moreau-Yosida regularized map `H_gamma` with its Newton derivative.
//! * [`oracle`] contains brute-force reference computations (lower convex hull,
//!   sampled maximization) used to certify the closed forms.
//! * [`fdgrid`] provides fields on a uniform grid over `[-1,1]^2`, the two
//!   elliptic operators, the five-point smoothing operator and sparse solves.
//! * [`potential`] and [`diffusion`] assemble residuals and exact Jacobians of
//!   the reduced optimality systems.
//! * [`ssn`] drives a semismooth Newton method with backtracking and
//!   continuation in `gamma`.
//! * [`experiments`] builds the reference problems, computes metrics and
//!   writes artifacts.

pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod fdgrid;
pub mod multibang;
pub mod oracle;
pub mod potential;
pub mod ssn;

pub use error::{ConfigError, Error, Result};
