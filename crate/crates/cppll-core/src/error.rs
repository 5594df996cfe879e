//! Error types shared by the model engines.

use core::fmt;

/// Errors reported by the discrete map and the overload extension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelError {
    /// A loop parameter or state invariant is violated.
    InvalidParams(&'static str),
    /// The state satisfies a VCO overload condition; the plain four-case map
    /// does not apply. Route to the overload step or stop.
    OverloadDetected,
    /// The discriminant of a case quadratic came out negative beyond the
    /// rounding guard. This cannot happen on valid inputs; it signals a bug.
    NegativeDiscriminant {
        /// Linear coefficient of the offending quadratic.
        b: f64,
        /// The negative discriminant value.
        discriminant: f64,
    },
    /// The overload dispatch reached the configuration that is provably
    /// unreachable (pulse positive, VCO frozen, next pulse negative).
    ImpossibleOverloadCase,
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::InvalidParams(what) => write!(f, "invalid parameters: {what}"),
            ModelError::OverloadDetected => write!(f, "VCO overload detected"),
            ModelError::NegativeDiscriminant { b, discriminant } => {
                write!(f, "negative discriminant {discriminant} (b = {b})")
            }
            ModelError::ImpossibleOverloadCase => {
                write!(f, "unreachable overload case reached")
            }
        }
    }
}

impl core::error::Error for ModelError {}

/// Errors reported by the event-driven oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleError {
    /// The requested initial state has no consistent physical configuration.
    InvalidInitialState(&'static str),
    /// Simulation time failed to advance between events.
    StalledSimulation {
        /// Time at which the simulation stopped making progress.
        t: f64,
    },
    /// The unclamped VCO frequency reached zero; rerun with the clamped law.
    VcoOverload {
        /// Time at which the frequency crossed zero.
        t: f64,
    },
    /// A loop parameter invariant is violated.
    InvalidParams(&'static str),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::InvalidInitialState(what) => {
                write!(f, "invalid initial state: {what}")
            }
            OracleError::StalledSimulation { t } => {
                write!(f, "simulation stalled at t = {t}")
            }
            OracleError::VcoOverload { t } => {
                write!(f, "VCO frequency reached zero at t = {t} (unclamped run)")
            }
            OracleError::InvalidParams(what) => write!(f, "invalid parameters: {what}"),
        }
    }
}

impl core::error::Error for OracleError {}
