//! Simulator and bound calculator for the covariance dynamics of
//! coupling-based normalizing flows.
//!
//! A coupling block (rotation, affine coupling layer, ActNorm) acting on
//! Gaussian moments admits a closed-form optimal update: the covariance is
//! rotated, one half is conditioned on the other via the Schur complement,
//! and both halves are rescaled to unit diagonal. This crate implements that
//! update, the resulting non-Standardness bookkeeping, closed-form upper
//! bounds on the expected non-Standardness after one block under Haar-random
//! rotations, and the per-block convergence rate for deep stacks. Every
//! closed-form expectation has a Monte Carlo counterpart over the orthogonal
//! or unitary group so the formulas can be validated end to end.
//!
//! Modules:
//! - [`linalg`]: SPD/HPD matrices, Haar sampling, Schur complements, diagonal
//!   preconditioning.
//! - [`divergence`]: non-Standardness, Correlation, Gaussian KL, and a Monte
//!   Carlo KL-gap estimator for mixture oracles.
//! - [`whitening`]: the optimal single-block update and its explicit affine
//!   coupling parameters.
//! - [`bounds`]: the three closed-form bounds, the rate `gamma`, and the
//!   arbitrary-precision symmetric-polynomial machinery behind the tight one.
//! - [`spectra`]: toy eigenvalue spectrum generators, scaling schedules, and
//!   the distinctness perturbation.
//! - [`experiments`]: the single-block rotation-averaging protocol and the
//!   deep multi-layer protocol.

pub mod bounds;
pub mod divergence;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod rng;
pub mod spectra;
pub mod whitening;

pub use error::{Error, Result};
