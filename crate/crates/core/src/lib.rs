//! Key-rate analysis for twin-field QKD whose code mode is free of phase
//! postselection while the decoy mode keeps it.
//!
//! The crate is organised bottom-up:
//!
//! * [`params`] – the protocol tuple, experiment constants, validity rules
//!   and the ε budget;
//! * [`photon`] – Poisson statistics of the twin pulses and the decoy
//!   weights Γ, Λ;
//! * [`dominance`] – a numerical certificate that Γ, Λ satisfy the operator
//!   dominance inequality on a truncated Fock space;
//! * [`channel`] – the analytic detection model;
//! * [`finite_key`] – phase-error bound and final key length;
//! * [`optimize`] – parameter search and rate-distance curves;
//! * [`montecarlo`] – a round-by-round protocol simulator;
//! * [`cli`] – the `tfqkd` command-line front end.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod dominance;
pub mod error;
pub mod finite_key;
pub mod montecarlo;
pub mod optimize;
pub mod params;
pub mod photon;

pub use error::{Error, Result};
pub use params::{ExperimentConfig, LogBase, ObservedCounts, ProtocolParams, Variant};
