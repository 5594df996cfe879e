//! Van Paemel's original flowchart algorithm, reproduced verbatim.
//!
//! This is the historical voltage-domain formulation (the VCO gain enters as
//! `1/K_v` terms). It is kept deliberately un-refactored: on several inputs
//! the algorithm produces a negative radicand or asks for filter history
//! that does not exist, and reproducing those failure modes is the point of
//! this module. Where the algorithm and the corrected map both apply (no
//! cycle slipping), they compute the same physics.
//!
//! The formulation assumes a zero free-running VCO frequency; callers must
//! pass `omega_free = 0`.
//!
//! Branch labels follow the flowchart: case 1 (positive pulse, quadratic),
//! case 3 (its negative-successor fallback), case 2 (negative pulse,
//! linear), case 5 (its positive-successor fallback), and case 6 (the
//! cycle-slip recursion entered when `τ_{k+1} < -T`).

use crate::map::DiscreteState;
use crate::math::{rem_nonneg, sqrt};
use crate::params::LoopParams;
use alloc::vec::Vec;
use core::fmt;

/// Flowchart branch taken by a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PaemelCase {
    Case1,
    Case2,
    Case3,
    Case5,
    Case6,
}

impl PaemelCase {
    /// Short stable token, used by trace files.
    pub fn token(&self) -> &'static str {
        match self {
            PaemelCase::Case1 => "P1",
            PaemelCase::Case2 => "P2",
            PaemelCase::Case3 => "P3",
            PaemelCase::Case5 => "P5",
            PaemelCase::Case6 => "P6",
        }
    }
}

impl fmt::Display for PaemelCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// How to supply the missing `v(k-1)` when case 6 triggers on the very
/// first step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistoryPolicy {
    /// Report [`PaemelErrorKind::MissingHistory`].
    #[default]
    Strict,
    /// Substitute the current hold voltage, `v(0)`.
    UseCurrent,
    /// Substitute `v(0) - (I_p/C) τ(0)`, extending the voltage-update
    /// identity one step into the past.
    BackExtrapolate,
}

/// Failure modes of the algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PaemelErrorKind {
    /// A step formula required the square root of a negative number.
    NegativeSquareRoot {
        /// The negative radicand (always < 0).
        radicand: f64,
    },
    /// Case 6 on the first step needs `v(-1)`, which does not exist.
    MissingHistory,
}

/// A terminated run: which flowchart box failed and how.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaemelError {
    pub kind: PaemelErrorKind,
    /// Flowchart case in which the failure occurred.
    pub location: PaemelCase,
}

impl PaemelError {
    fn neg_sqrt(radicand: f64, location: PaemelCase) -> Self {
        debug_assert!(radicand < 0.0);
        PaemelError {
            kind: PaemelErrorKind::NegativeSquareRoot { radicand },
            location,
        }
    }
}

impl fmt::Display for PaemelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PaemelErrorKind::NegativeSquareRoot { radicand } => {
                write!(
                    f,
                    "negative radicand {radicand} in flowchart case {}",
                    self.location
                )
            }
            PaemelErrorKind::MissingHistory => {
                write!(
                    f,
                    "v(-1) required by flowchart case {} does not exist",
                    self.location
                )
            }
        }
    }
}

impl core::error::Error for PaemelError {}

/// One step of the algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaemelOutcome {
    /// Successor state before any `τ >= T` folding (see [`paemel_iterate`]).
    pub next: DiscreteState,
    pub case: PaemelCase,
    /// Duration the PFD output spent at zero during this cycle (second).
    pub t_zero: f64,
}

/// One term of the case-6 discharge recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipTerm {
    /// VCO period `t_n` (second).
    pub t: f64,
    /// Hold voltage the term was computed from (`v_{n-1}`).
    pub v_before: f64,
}

/// Result of the case-6 recursion: the accepted terms, then either the
/// completed tail or the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct SlipRecursion {
    pub terms: Vec<SlipTerm>,
    pub result: Result<SlipTail, f64>,
}

/// Successful completion of the case-6 recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipTail {
    /// Residual interval inside the pulse after the last whole VCO period.
    pub t_a: f64,
    /// Hold voltage in effect during `t_a`.
    pub v_prev: f64,
}

/// Runs the case-6 VCO-period recursion: starting from `v_start`, stacks
/// whole VCO periods `t_n` until they cover the pulse width `pulse`
/// (`= |τ_k|`). `Err(radicand)` in `result` reports the first negative
/// radicand encountered.
pub fn case6_recursion(v_start: f64, pulse: f64, params: &LoopParams) -> SlipRecursion {
    let slew = params.slew();
    let drop = 2.0 * params.i_p / (params.c * params.k_vco);
    let mut terms = Vec::new();
    let mut v_n = v_start;
    let mut t_sum = 0.0;
    loop {
        let head = v_n - params.i_p * params.r;
        let radicand = head * head - drop;
        if radicand < 0.0 {
            return SlipRecursion {
                terms,
                result: Err(radicand),
            };
        }
        let t_n = (head - sqrt(radicand)) / slew;
        let v_before = v_n;
        t_sum += t_n;
        v_n -= slew * t_n;
        terms.push(SlipTerm { t: t_n, v_before });
        if t_sum >= pulse {
            let t_a = pulse - (t_sum - t_n);
            return SlipRecursion {
                terms,
                result: Ok(SlipTail {
                    t_a,
                    v_prev: v_before,
                }),
            };
        }
    }
}

/// One step of the flowchart. `prev_v` is `v(k-1)` when available; the
/// `policy` decides what happens if case 6 needs it on the first step.
pub fn paemel_step(
    state: DiscreteState,
    prev_v: Option<f64>,
    params: &LoopParams,
    policy: HistoryPolicy,
) -> Result<PaemelOutcome, PaemelError> {
    debug_assert!(params.validate().is_ok());
    debug_assert!(
        params.omega_free == 0.0,
        "the original algorithm assumes a zero free-running frequency"
    );
    let slew = params.slew();
    let (mut tau_next, mut case, mut t_zero);
    if state.tau >= 0.0 {
        // Case 1: positive pulse, try a positive successor.
        let a = params.i_p / (2.0 * params.c);
        let b = state.v + params.i_p * params.r;
        let c = (params.t_ref - state.tau) * state.v - 1.0 / params.k_vco;
        let radicand = b * b - 4.0 * a * c;
        if radicand < 0.0 {
            return Err(PaemelError::neg_sqrt(radicand, PaemelCase::Case1));
        }
        tau_next = (-b + sqrt(radicand)) / (2.0 * a);
        case = PaemelCase::Case1;
        t_zero = params.t_ref - state.tau;
        if tau_next < 0.0 {
            // Case 3: negative successor.
            tau_next = 1.0 / (params.k_vco * state.v) - params.t_ref + state.tau;
            case = PaemelCase::Case3;
            t_zero = 1.0 / (params.k_vco * state.v);
        }
    } else {
        // Case 2: negative pulse, linear relation.
        tau_next = (1.0 / params.k_vco - params.i_p * params.r * state.tau
            - params.i_p * state.tau * state.tau / (2.0 * params.c))
            / state.v
            - params.t_ref
            + state.tau;
        case = PaemelCase::Case2;
        let l_k = -state.tau;
        let s_lk = (params.k_vco * state.v - params.i_p * params.r * params.k_vco) * l_k
            + params.k_vco * params.i_p * l_k * l_k / (2.0 * params.c);
        t_zero = (1.0 - rem_nonneg(s_lk, 1.0)) / (params.k_vco * state.v);
        if tau_next > 0.0 {
            // Case 5: positive successor.
            let head = params.i_p * params.r + state.v;
            let radicand = head * head + 2.0 * slew * state.v * tau_next;
            if radicand < 0.0 {
                return Err(PaemelError::neg_sqrt(radicand, PaemelCase::Case5));
            }
            tau_next = (-head + sqrt(radicand)) / slew;
            case = PaemelCase::Case5;
            t_zero = params.t_ref;
        }
    }

    if tau_next < -params.t_ref {
        // Case 6: more than a whole reference period slipped. Reconstruct
        // the VCO periods inside the pulse from v(k-1).
        let v_hist = match (prev_v, policy) {
            (Some(v), _) => v,
            (None, HistoryPolicy::Strict) => {
                return Err(PaemelError {
                    kind: PaemelErrorKind::MissingHistory,
                    location: PaemelCase::Case6,
                })
            }
            (None, HistoryPolicy::UseCurrent) => state.v,
            (None, HistoryPolicy::BackExtrapolate) => state.v - slew * state.tau,
        };
        let rec = case6_recursion(v_hist, -state.tau, params);
        let tail = rec
            .result
            .map_err(|radicand| PaemelError::neg_sqrt(radicand, PaemelCase::Case6))?;
        let t_b = (1.0 / params.k_vco - tail.t_a * (tail.v_prev - params.i_p * params.r)
            + slew * tail.t_a * tail.t_a / 2.0)
            / state.v;
        tau_next = t_b - params.t_ref;
        case = PaemelCase::Case6;
        t_zero = t_b;
    }

    Ok(PaemelOutcome {
        next: DiscreteState {
            tau: tau_next,
            v: state.v + slew * tau_next,
        },
        case,
        t_zero,
    })
}

/// A finished (or terminated) run of the algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct PaemelRun {
    /// Outcomes of the completed steps.
    pub steps: Vec<PaemelOutcome>,
    /// First failure, with the index of the step that failed (0-based).
    pub error: Option<(usize, PaemelError)>,
}

/// Iterates the algorithm for `n_steps` cycles or until it terminates with
/// an error.
///
/// Successor pulse widths at or above `T_ref` are folded modulo `T_ref`
/// before the next step (the recorded outcome keeps the raw value); the
/// `τ < -T` direction goes through case 6 instead.
pub fn paemel_iterate(
    initial: DiscreteState,
    params: &LoopParams,
    n_steps: usize,
    policy: HistoryPolicy,
) -> PaemelRun {
    let mut steps = Vec::with_capacity(n_steps.min(1 << 20));
    let mut state = initial;
    let mut prev_v: Option<f64> = None;
    for k in 0..n_steps {
        match paemel_step(state, prev_v, params, policy) {
            Ok(outcome) => {
                prev_v = Some(state.v);
                state = outcome.next;
                if state.tau >= params.t_ref {
                    state.tau = rem_nonneg(state.tau, params.t_ref);
                }
                steps.push(outcome);
            }
            Err(err) => {
                return PaemelRun {
                    steps,
                    error: Some((k, err)),
                };
            }
        }
    }
    PaemelRun { steps, error: None }
}
