//! Simulation and analysis of second-order charge-pump phase-locked loops
//! with a phase-frequency detector (CP-PLL).
//!
//! Three independent engines model the same circuit:
//!
//! * [`map`] — the closed-form discrete map `(τ_k, v_k) → (τ_{k+1}, v_{k+1})`
//!   over the signed PFD pulse width and the filter hold voltage, with exact
//!   four-case dispatch and no numerical integration.
//! * [`paemel`] — Van Paemel's original flowchart algorithm, kept verbatim in
//!   its voltage-domain form so that its documented failure modes (negative
//!   radicands, missing history on cycle slip) are reproduced instead of
//!   papered over.
//! * [`oracle`] — an event-driven simulator of the continuous signal-space
//!   model. The PFD automaton, PI filter, and VCO are integrated exactly
//!   between trailing-edge events, so the oracle serves as ground truth for
//!   cross-validating the discrete engines.
//!
//! [`overload`] extends the discrete map with the clamped-VCO step (cases
//! O1–O7) for states that drive the VCO frequency to zero. [`normalized`]
//! carries the dimensionless two-parameter reduction of the map, and
//! [`analysis`] provides lock detection, pull-in-time estimation, classical
//! design numbers, and parameter-sweep classification.
//!
//! The crate is `no_std` (with `alloc`); IO, file formats, and the command
//! line front end live in the companion `cppll-cli` crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod analysis;
pub mod error;
pub mod map;
pub mod normalized;
pub mod oracle;
pub mod overload;
pub mod paemel;
pub mod params;

pub(crate) mod math;

pub use error::{ModelError, OracleError};
pub use map::{iterate, step, DiscreteState, OverloadPolicy, StepCase, StepOutcome};
pub use params::LoopParams;
