//! Simulation and analysis of spin-polarization correlation experiments
//! under a contextual, causally local hidden-variable model.
//!
//! The crate is organised as:
//!
//! * [`model`]: settings, outcomes, trial records and contingency tables;
//! * [`qm`]: closed-form singlet predictions and Malus-law ratios;
//! * [`engine`]: factorized hidden-variable sampling, exact enumeration for
//!   discrete models and the deterministic-strategy CHSH bound;
//! * [`stats`]: tabulation, post-selected correlations, CHSH estimates,
//!   conditional-probability checks, no-signaling audits and coincidence
//!   matching of raw click logs;
//! * [`fit`]: derivative-free fitting of model parameters to quantum targets;
//! * [`beam`]: click-counting simulation of polarizer beam contexts;
//! * [`cli`]: configuration files, report formats and the command runner.

pub mod beam;
pub mod cli;
pub mod engine;
pub mod error;
pub mod fit;
pub mod model;
pub mod qm;
pub mod quadrature;
pub mod stats;

pub use error::{Error, Result};
