//! Spectral laboratory for random band matrices with a deterministic
//! perturbation.
//!
//! The crate simulates ensembles `Y = (R + σX) / √c_n` where `X` is a random
//! band matrix of bandwidth `b_n`, `R` is a deterministic band matrix and
//! `c_n = 2 b_n + 1`. It computes empirical spectral distributions of the Gram
//! matrix `Y Y*`, solves the self-consistent equation for the limiting
//! Stieltjes transform
//!
//! ```text
//! m(z) = ∫ dH(t) / ( t / (1 + σ² m(z)) − (1 + σ² m(z)) z )
//! ```
//!
//! and runs Monte Carlo and exact-oracle checks of the concentration and
//! perturbation inequalities that control the convergence of `m_n → m`.
//!
//! Module map:
//! - [`band`]: shapes, index sets and support validation
//! - [`ensemble`]: noise sampling, construction of `R`, truncation, assembly of `Y`
//! - [`spectra`]: Gram matrices, eigenvalues, ESDs, empirical Stieltjes transforms
//! - [`limit_law`]: the limiting equation, Marchenko-Pastur closed form, density inversion
//! - [`verify`]: convergence sweeps and bound checks
//! - [`cli`]: configuration-driven front end writing CSV/JSON results

pub mod band;
pub mod cli;
pub mod ensemble;
mod error;
pub mod limit_law;
pub(crate) mod linalg;
pub mod spectra;
pub mod verify;

pub use error::{Error, Result};
pub use faer::c64;
