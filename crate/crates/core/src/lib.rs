//! Correlation-based imaging through random media.
//!
//! Wave data from a passive source array are simulated through either an
//! isotropic random slab (paraxial Itô–Schrödinger model) or a randomly
//! layered slab (statistics of the jump Markov representation), correlated
//! at a receiver array, migrated with Kirchhoff migration, and measured
//! against closed-form resolution laws.

pub mod analysis;
pub mod correlation;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod io;
pub mod layered;
pub mod medium;
pub mod migration;
pub mod paraxial;
pub mod passive;
pub mod pulse;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod survey;
pub mod wave;

pub use error::{Error, Result};
