//! Quasi-stationary distributions of the stochastic logistic (Verhulst/SIS)
//! and SIR models, asymptotic cumulant approximations derived from the
//! stationary cumulant equations, and the moment-closure baselines they are
//! compared against.

pub mod asymptotic;
pub mod banded;
pub mod closure;
pub mod config;
mod dd;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod model;
pub mod newton;
pub mod poly;
pub mod qsd;
pub mod report;
pub mod series;
pub mod sir;

pub use error::{Error, Result};
