//! Probabilistic surrogate safety measures for car-following conflicts.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`trajectory`] turns vehicle logs into pairs of an initial situation and
//!    the leader's future speed profile.
//! 2. [`density`] estimates the joint density of those pairs with a Gaussian
//!    KDE over SVD-reduced coordinates and samples futures conditioned on an
//!    initial situation.
//! 3. [`simulation`] and [`probability`] run Monte Carlo conflicts and turn
//!    their outcomes into a crash probability with an adaptive stopping rule.
//! 4. [`regression`] tabulates probabilities at design points and serves them
//!    through a Nadaraya-Watson smoother for real-time lookup.
//!
//! Interchangeable pieces (conflict models, probability estimators) sit behind
//! traits and are looked up by name in [`registry`].

// Validation writes `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod density;
pub mod distributions;
pub mod error;
pub mod models;
pub mod pipeline;
pub mod probability;
pub mod quadrature;
pub mod reference;
pub mod registry;
pub mod regression;
pub mod rng;
pub mod scenario;
pub mod simulation;
pub mod trajectory;

pub use error::{Result, SsmError};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
