//! Certified error bounds for finite-level approximations of quantum stochastic models.

pub mod adiabatic;
pub mod approx;
pub mod error;
pub mod io;
pub mod nelder_mead;
pub mod operator;
pub mod semigroup;
pub mod scenarios;
pub mod slh;
pub mod truncation;
pub mod verification;

pub use error::{Error, Result};
