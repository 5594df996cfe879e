//! The closed-form discrete map of the CP-PLL.
//!
//! State is the pair `(τ_k, v_k)`: the signed PFD pulse width and the filter
//! hold voltage. One step advances the loop by one full PFD cycle (pulse plus
//! zero interval) and dispatches on exactly one of four cases:
//!
//! | case | condition                | next pulse        |
//! |------|--------------------------|-------------------|
//! | 1    | `τ_k >= 0`, `c <= 0`     | `τ_{k+1} >= 0`    |
//! | 2    | `τ_k >= 0`, `c > 0`      | `τ_{k+1} < 0`     |
//! | 3    | `τ_k < 0`, `l_b <= T`    | `τ_{k+1} <= 0`    |
//! | 4    | `τ_k < 0`, `l_b > T`     | `τ_{k+1} > 0`     |
//!
//! Cases 1 and 4 solve a quadratic phase-balance equation; 2 and 3 are
//! linear. The voltage update is always `v_{k+1} = v_k + (I_p/C) τ_{k+1}`.
//!
//! Pulse widths can exceed `T_ref` when the reference slips whole cycles
//! during one pulse; the state keeps the raw width and the case formulas
//! reduce it modulo `T_ref`. Negative widths never reach `-T_ref` because a
//! VCO-led pulse is always terminated by the next reference edge.
//!
//! Dispatch at the case boundaries (`c = 0`, `l_b = T_ref`) uses exact
//! comparisons: both adjacent formulas produce the same result there, so no
//! epsilon is needed and no hysteresis is introduced.

use crate::error::ModelError;
use crate::math::{rem_nonneg, sqrt};
use crate::overload::{detect_overload, step_overload};
use crate::params::LoopParams;
use alloc::vec::Vec;

/// Discrete state: signed PFD pulse width `tau` and hold voltage `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteState {
    /// Signed PFD pulse width (second). Negative when the VCO edge leads.
    pub tau: f64,
    /// Filter output voltage held while the PFD output is zero (volt).
    pub v: f64,
}

impl DiscreteState {
    /// Convenience constructor.
    pub fn new(tau: f64, v: f64) -> Self {
        Self { tau, v }
    }
}

/// Which branch produced a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepCase {
    Case1,
    Case2,
    Case3,
    Case4,
    O1,
    O2,
    O3,
    O4,
    O5,
    O6,
    O7,
    /// Overload detected under the `Halt` policy; the run stopped here.
    OverloadHalt,
}

impl StepCase {
    /// Short stable token, used by trace files.
    pub fn token(&self) -> &'static str {
        match self {
            StepCase::Case1 => "1",
            StepCase::Case2 => "2",
            StepCase::Case3 => "3",
            StepCase::Case4 => "4",
            StepCase::O1 => "O1",
            StepCase::O2 => "O2",
            StepCase::O3 => "O3",
            StepCase::O4 => "O4",
            StepCase::O5 => "O5",
            StepCase::O6 => "O6",
            StepCase::O7 => "O7",
            StepCase::OverloadHalt => "overload_halt",
        }
    }
}

impl core::fmt::Display for StepCase {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.token())
    }
}

/// Result of one map step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// The successor state `(τ_{k+1}, v_{k+1})`.
    pub next: DiscreteState,
    /// Branch that produced it.
    pub case: StepCase,
    /// Duration the PFD output spent at zero during this cycle (second).
    pub t_zero: f64,
}

/// What `iterate` does when a state satisfies an overload condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverloadPolicy {
    /// Stop the run, marking the last outcome [`StepCase::OverloadHalt`].
    Halt,
    /// Continue with the clamped-VCO step (cases O1–O7).
    #[default]
    Extended,
}

/// Case dispatch together with the intermediate scalars the step formulas
/// need. Scalars follow the conventional names: `a`, `b` are the quadratic
/// coefficients, `c` and `d` the constant terms, `s_lk`/`s_la` the VCO phase
/// swept during the previous pulse and its fractional part, and `l_b` the
/// time from pulse end to the next VCO edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CaseClass {
    Case1 { a: f64, b: f64, c: f64 },
    Case2 { c: f64 },
    Case3 { s_lk: f64, s_la: f64, l_b: f64 },
    Case4 { a: f64, b: f64, d: f64, s_lk: f64, s_la: f64, l_b: f64 },
}

impl CaseClass {
    /// The case label alone.
    pub fn label(&self) -> StepCase {
        match self {
            CaseClass::Case1 { .. } => StepCase::Case1,
            CaseClass::Case2 { .. } => StepCase::Case2,
            CaseClass::Case3 { .. } => StepCase::Case3,
            CaseClass::Case4 { .. } => StepCase::Case4,
        }
    }
}

fn validate_state(state: DiscreteState, params: &LoopParams) -> Result<(), ModelError> {
    if !state.tau.is_finite() || !state.v.is_finite() {
        return Err(ModelError::InvalidParams("state must be finite"));
    }
    if state.tau <= -params.t_ref {
        return Err(ModelError::InvalidParams("tau must be > -T_ref"));
    }
    Ok(())
}

/// Decides which of the four cases applies to `state` and returns the
/// scalars used by that case's formula.
///
/// Requires a positive hold-interval VCO frequency; a non-positive one is an
/// overload situation and is reported as [`ModelError::OverloadDetected`]
/// rather than dividing by zero.
pub fn classify_case(state: DiscreteState, params: &LoopParams) -> Result<CaseClass, ModelError> {
    params.validate()?;
    validate_state(state, params)?;
    let omega_hold = params.hold_rate(state.v);
    if omega_hold <= 0.0 {
        return Err(ModelError::OverloadDetected);
    }
    if state.tau >= 0.0 {
        let tau_m = rem_nonneg(state.tau, params.t_ref);
        let c = (params.t_ref - tau_m) * omega_hold - 1.0;
        if c <= 0.0 {
            Ok(CaseClass::Case1 {
                a: params.quad_coeff(),
                b: params.lin_coeff(state.v),
                c,
            })
        } else {
            Ok(CaseClass::Case2 { c })
        }
    } else {
        // τ_k < 0: S_lk is the VCO phase swept during the pulse of width
        // l_k = -τ_k, and S_la its fractional part.
        let l_k = -state.tau;
        let s_lk = (params.k_vco * state.v - params.i_p * params.r * params.k_vco
            + params.omega_free)
            * l_k
            + params.k_vco * params.i_p * l_k * l_k / (2.0 * params.c);
        let s_la = rem_nonneg(s_lk, 1.0);
        let l_b = (1.0 - s_la) / omega_hold;
        if l_b <= params.t_ref {
            Ok(CaseClass::Case3 { s_lk, s_la, l_b })
        } else {
            let d = s_la + params.t_ref * omega_hold - 1.0;
            Ok(CaseClass::Case4 {
                a: params.quad_coeff(),
                b: params.lin_coeff(state.v),
                d,
                s_lk,
                s_la,
                l_b,
            })
        }
    }
}

/// Positive root `(-b + sqrt(b² - 4ac)) / (2a)` of `a x² + b x + c = 0`.
///
/// For `c <= 0` (the case-1/case-4 configurations) the root is guaranteed
/// non-negative. Discriminants within `-1e-12 b²` of zero are clamped to
/// zero — rounding at the `c ≈ 0` dispatch boundary can push an analytically
/// zero discriminant slightly negative — and anything below that is a bug.
pub fn solve_positive_quadratic(a: f64, b: f64, c: f64) -> Result<f64, ModelError> {
    debug_assert!(a > 0.0);
    let mut disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        if disc >= -1e-12 * b * b {
            disc = 0.0;
        } else {
            return Err(ModelError::NegativeDiscriminant {
                b,
                discriminant: disc,
            });
        }
    }
    Ok((-b + sqrt(disc)) / (2.0 * a))
}

pub(crate) fn case1_step(
    state: DiscreteState,
    params: &LoopParams,
    a: f64,
    b: f64,
    c: f64,
) -> Result<StepOutcome, ModelError> {
    let tau_next = solve_positive_quadratic(a, b, c)?;
    let t_zero = params.t_ref - rem_nonneg(state.tau, params.t_ref);
    Ok(finish(state, params, tau_next, StepCase::Case1, t_zero))
}

pub(crate) fn case2_step(state: DiscreteState, params: &LoopParams) -> StepOutcome {
    let omega_hold = params.hold_rate(state.v);
    let tau_next = 1.0 / omega_hold - params.t_ref + rem_nonneg(state.tau, params.t_ref);
    finish(state, params, tau_next, StepCase::Case2, 1.0 / omega_hold)
}

pub(crate) fn finish(
    state: DiscreteState,
    params: &LoopParams,
    tau_next: f64,
    case: StepCase,
    t_zero: f64,
) -> StepOutcome {
    StepOutcome {
        next: DiscreteState {
            tau: tau_next,
            v: state.v + params.slew() * tau_next,
        },
        case,
        t_zero,
    }
}

/// Advances the state by one PFD cycle using the four-case map.
///
/// Errors with [`ModelError::OverloadDetected`] when the state satisfies an
/// overload condition; the caller routes to [`crate::overload::step_overload`]
/// or stops, which is what [`iterate`] does according to its policy.
pub fn step(state: DiscreteState, params: &LoopParams) -> Result<StepOutcome, ModelError> {
    params.validate()?;
    validate_state(state, params)?;
    if detect_overload(state, params) {
        return Err(ModelError::OverloadDetected);
    }
    match classify_case(state, params)? {
        CaseClass::Case1 { a, b, c } => case1_step(state, params, a, b, c),
        CaseClass::Case2 { .. } => Ok(case2_step(state, params)),
        CaseClass::Case3 { l_b, .. } => Ok(finish(
            state,
            params,
            l_b - params.t_ref,
            StepCase::Case3,
            l_b,
        )),
        CaseClass::Case4 { a, b, d, .. } => {
            let tau_next = solve_positive_quadratic(a, b, d)?;
            Ok(finish(state, params, tau_next, StepCase::Case4, params.t_ref))
        }
    }
}

fn overloaded(state: DiscreteState, params: &LoopParams) -> bool {
    detect_overload(state, params) || params.hold_rate(state.v) <= 0.0
}

/// Iterates the map for `n_steps` cycles.
///
/// Under [`OverloadPolicy::Halt`] the trace stops at the first state that
/// satisfies an overload condition, with the final outcome relabelled
/// [`StepCase::OverloadHalt`]. Under [`OverloadPolicy::Extended`] overloaded
/// states are advanced by the clamped-VCO cases O1–O7.
pub fn iterate(
    initial: DiscreteState,
    params: &LoopParams,
    n_steps: usize,
    policy: OverloadPolicy,
) -> Result<Vec<StepOutcome>, ModelError> {
    params.validate()?;
    let mut trace = Vec::with_capacity(n_steps.min(1 << 20));
    let mut state = initial;
    for _ in 0..n_steps {
        if overloaded(state, params) {
            match policy {
                OverloadPolicy::Halt => {
                    trace.push(StepOutcome {
                        next: state,
                        case: StepCase::OverloadHalt,
                        t_zero: 0.0,
                    });
                    break;
                }
                OverloadPolicy::Extended => {
                    let outcome = step_overload(state, params)?;
                    state = outcome.next;
                    trace.push(outcome);
                }
            }
        } else {
            let mut outcome = step(state, params)?;
            if policy == OverloadPolicy::Halt && overloaded(outcome.next, params) {
                outcome.case = StepCase::OverloadHalt;
                trace.push(outcome);
                break;
            }
            state = outcome.next;
            trace.push(outcome);
        }
    }
    Ok(trace)
}
