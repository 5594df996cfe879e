//! VCO overload: detection and the clamped-VCO step.
//!
//! When the filter output would drive the VCO frequency below zero, the VCO
//! law becomes `θ̇_vco = max(0, ω_free + K_vco v_F)` — the oscillator freezes
//! instead of running backwards. The plain four-case map integrates the
//! signed frequency and is wrong in that regime, so the step dispatches on
//! extended cases O1–O7 instead:
//!
//! * `τ_k < 0`, hold frequency positive: the frequency dipped to zero inside
//!   the previous pulse and recovered. O1 (`l_b < T_ref`, next pulse
//!   negative) and O2 (next pulse positive) redo the phase bookkeeping with
//!   the clamped area.
//! * `τ_k < 0`, hold frequency non-positive: the VCO is frozen through the
//!   whole zero interval. O3 splits the next (positive) pulse into a still
//!   frozen part and a charging ramp; O4 is the same without the frozen part.
//! * `τ_k >= 0`, hold frequency non-positive: O5 charges the frozen VCO from
//!   an exactly integer phase. The complementary sign combination (O5 with a
//!   negative next pulse) is impossible because a frozen VCO produces no
//!   trailing edge.
//! * `τ_k >= 0`, hold frequency positive: O6/O7 reduce exactly to cases 1/2.

use crate::error::ModelError;
use crate::map::{case1_step, case2_step, finish, solve_positive_quadratic};
use crate::map::{CaseClass, DiscreteState, StepCase, StepOutcome};
use crate::math::{rem_nonneg, sqrt};
use crate::params::LoopParams;

/// True when the state satisfies a VCO overload condition:
/// `τ > 0` with `v + ω_free/K_vco - (I_p/C) τ < 0`, or
/// `τ < 0` with `v + ω_free/K_vco - I_p R < 0`.
pub fn detect_overload(state: DiscreteState, params: &LoopParams) -> bool {
    let margin = state.v + params.omega_free / params.k_vco;
    (state.tau > 0.0 && margin - params.slew() * state.tau < 0.0)
        || (state.tau < 0.0 && margin - params.i_p * params.r < 0.0)
}

/// Instantaneous VCO frequency under the clamped law, `max(0, ω_free + K v_F)`.
pub fn clamped_vco_rate(v_f: f64, params: &LoopParams) -> f64 {
    (params.omega_free + params.k_vco * v_f).max(0.0)
}

/// Intermediate quantities of an overload step, for inspection and tests.
///
/// All fields are zero for the branches that do not use them.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OverloadContext {
    /// Duration of zero VCO frequency inside the previous pulse (second).
    pub l_x: f64,
    /// VCO phase swept before the frequency hit zero (cycles).
    pub s: f64,
    /// Fractional part of `s`, in `[0, 1)`.
    pub s_la: f64,
    /// Frozen-VCO sub-interval of the next pulse (second), case O3.
    pub l_b0: f64,
    /// Charging sub-interval of the next pulse (second), case O3.
    pub l_b_plus: f64,
}

/// Advances an overloaded state by one PFD cycle using cases O1–O7.
///
/// Callers normally reach this through
/// [`iterate`](crate::map::iterate) with
/// [`OverloadPolicy::Extended`](crate::map::OverloadPolicy).
pub fn step_overload(
    state: DiscreteState,
    params: &LoopParams,
) -> Result<StepOutcome, ModelError> {
    step_overload_detailed(state, params).map(|(outcome, _)| outcome)
}

/// Like [`step_overload`] but also returns the phase bookkeeping.
pub fn step_overload_detailed(
    state: DiscreteState,
    params: &LoopParams,
) -> Result<(StepOutcome, OverloadContext), ModelError> {
    params.validate()?;
    debug_assert!(
        detect_overload(state, params) || params.hold_rate(state.v) <= 0.0,
        "overload step on a non-overloaded state"
    );
    let omega_hold = params.hold_rate(state.v);
    let a = params.quad_coeff();
    let b = params.lin_coeff(state.v);
    let mut ctx = OverloadContext::default();

    if state.tau < 0.0 {
        // Phase swept during the previous pulse before the frequency froze:
        // l_x is the frozen tail of the pulse, capped at the pulse length.
        let clamp_time = -(params.c / params.i_p)
            * (state.v + params.omega_free / params.k_vco - params.i_p * params.r);
        ctx.l_x = clamp_time.min(-state.tau);
        debug_assert!(ctx.l_x >= 0.0);
        let ramp = state.tau + ctx.l_x; // non-positive: un-frozen pulse head
        ctx.s = params.k_vco * ramp * ramp * params.i_p / (2.0 * params.c);
        debug_assert!(ctx.s >= 0.0);
        ctx.s_la = rem_nonneg(ctx.s, 1.0);

        if omega_hold > 0.0 {
            let l_b = (1.0 - ctx.s_la) / omega_hold;
            if l_b < params.t_ref {
                // O1: VCO edge arrives before the next reference edge.
                let outcome = finish(state, params, l_b - params.t_ref, StepCase::O1, l_b);
                Ok((outcome, ctx))
            } else {
                // O2: reference edge first; positive pulse like case 4.
                let d = ctx.s_la + params.t_ref * omega_hold - 1.0;
                let tau_next = solve_positive_quadratic(a, b, d)?;
                let outcome = finish(state, params, tau_next, StepCase::O2, params.t_ref);
                Ok((outcome, ctx))
            }
        } else if state.v + params.omega_free / params.k_vco + params.i_p * params.r < 0.0 {
            // O3: even the pump-boosted output keeps the VCO frozen for
            // l_b0, then the ramp sweeps the remaining phase.
            ctx.l_b0 = params.c / params.i_p
                * (-params.omega_free / params.k_vco - params.i_p * params.r - state.v);
            ctx.l_b_plus = sqrt((1.0 - ctx.s_la) * 2.0 * params.c / (params.k_vco * params.i_p));
            let tau_next = ctx.l_b0 + ctx.l_b_plus;
            let outcome = finish(state, params, tau_next, StepCase::O3, params.t_ref);
            Ok((outcome, ctx))
        } else {
            // O4: frequency becomes positive as soon as the pump engages.
            let tau_next = solve_positive_quadratic(a, b, ctx.s_la - 1.0)?;
            let outcome = finish(state, params, tau_next, StepCase::O4, params.t_ref);
            Ok((outcome, ctx))
        }
    } else if omega_hold <= 0.0 {
        // O5: VCO frozen at integer phase through the zero interval; the
        // positive pulse sweeps one full cycle.
        let tau_next = solve_positive_quadratic(a, b, -1.0)?;
        if tau_next <= 0.0 {
            // O5*: a frozen VCO cannot emit the edge a negative pulse needs.
            return Err(ModelError::ImpossibleOverloadCase);
        }
        let t_zero = params.t_ref - rem_nonneg(state.tau, params.t_ref);
        let outcome = finish(state, params, tau_next, StepCase::O5, t_zero);
        Ok((outcome, ctx))
    } else {
        // O6/O7: the overload lay strictly in the past (inside the previous
        // pulse); this cycle is bit-identical to case 1 or case 2.
        match crate::map::classify_case(state, params)? {
            CaseClass::Case1 { a, b, c } => {
                let mut outcome = case1_step(state, params, a, b, c)?;
                outcome.case = StepCase::O6;
                Ok((outcome, ctx))
            }
            CaseClass::Case2 { .. } => {
                let mut outcome = case2_step(state, params);
                outcome.case = StepCase::O7;
                Ok((outcome, ctx))
            }
            other => {
                debug_assert!(false, "τ >= 0 classified as {other:?}");
                Err(ModelError::ImpossibleOverloadCase)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{iterate, OverloadPolicy};

    fn ex1_params() -> LoopParams {
        LoopParams {
            r: 0.2,
            c: 0.01,
            k_vco: 20.0,
            i_p: 0.1,
            t_ref: 0.125,
            omega_free: 0.0,
        }
    }

    fn overload_demo_params() -> LoopParams {
        LoopParams {
            r: 1000.0,
            c: 1e-6,
            k_vco: 1000.0,
            i_p: 1e-3,
            t_ref: 1e-3,
            omega_free: 0.0,
        }
    }

    #[test]
    fn detect_ex2_successor() {
        let params = ex1_params();
        assert!(detect_overload(
            DiscreteState::new(-0.11906, -0.1906),
            &params
        ));
    }

    #[test]
    fn detect_lock_state_is_clean() {
        let params = ex1_params();
        assert!(!detect_overload(
            DiscreteState::new(0.0, params.lock_voltage()),
            &params
        ));
    }

    #[test]
    fn detect_positive_pulse_direct_evaluation() {
        // v - (I_p/C) τ = 0.5 - 10·0.01 = 0.4 > 0: no overload.
        assert!(!detect_overload(
            DiscreteState::new(0.01, 0.5),
            &ex1_params()
        ));
    }

    #[test]
    fn clamped_rate() {
        let params = LoopParams {
            k_vco: 500.0,
            ..ex1_params()
        };
        assert_eq!(clamped_vco_rate(1.0, &params), 500.0);
        assert_eq!(clamped_vco_rate(-10.0, &params), 0.0);
        assert_eq!(
            clamped_vco_rate(-params.omega_free / params.k_vco, &params),
            0.0
        );
    }

    #[test]
    fn o5_unit_coefficients() {
        // a = K I_p / 2C = 1 and b = ω + K v + K I_p R = 0 gives τ' = 1.
        let params = LoopParams {
            r: 1.0,
            c: 1.0,
            k_vco: 2.0,
            i_p: 1.0,
            t_ref: 10.0,
            omega_free: 0.0,
        };
        assert_eq!(params.quad_coeff(), 1.0);
        let state = DiscreteState::new(0.0, -1.0);
        assert_eq!(params.lin_coeff(state.v), 0.0);
        let (out, _) = step_overload_detailed(state, &params).unwrap();
        assert_eq!(out.case, StepCase::O5);
        assert_eq!(out.next.tau, 1.0);
    }

    #[test]
    fn o3_split_matches_closed_form() {
        let params = overload_demo_params();
        // v_k + I_p R < 0 forces the O3 branch (ω_free = 0).
        let state = DiscreteState::new(-0.4e-3, -2.5);
        assert!(params.hold_rate(state.v) <= 0.0);
        assert!(state.v + params.i_p * params.r < 0.0);
        let (out, ctx) = step_overload_detailed(state, &params).unwrap();
        assert_eq!(out.case, StepCase::O3);
        let expected_plus = sqrt((1.0 - ctx.s_la) * 2.0 * params.c / (params.k_vco * params.i_p));
        assert_eq!(ctx.l_b_plus, expected_plus);
        assert!((out.next.tau - (ctx.l_b0 + ctx.l_b_plus)).abs() < 1e-18);
        // Phase accounting: S_la + a·l_b+² = 1.
        let residual = ctx.s_la + params.quad_coeff() * ctx.l_b_plus * ctx.l_b_plus;
        assert!((residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn o6_o7_bit_identical_to_cases_1_2() {
        // τ_k > 0 with an overloaded history: v_{k-1} = v - (I_p/C) τ < -ω/K,
        // but hold rate positive so the step itself is a plain case 1/2.
        let params = overload_demo_params();
        for &(tau, v) in &[(0.9e-3, 0.5), (0.2e-3, 0.15)] {
            let state = DiscreteState::new(tau, v);
            assert!(detect_overload(state, &params), "tau={tau} v={v}");
            assert!(params.hold_rate(state.v) > 0.0);
            let (out, _) = step_overload_detailed(state, &params).unwrap();
            let plain = match crate::map::classify_case(state, &params).unwrap() {
                CaseClass::Case1 { a, b, c } => {
                    assert_eq!(out.case, StepCase::O6);
                    case1_step(state, &params, a, b, c).unwrap()
                }
                CaseClass::Case2 { .. } => {
                    assert_eq!(out.case, StepCase::O7);
                    case2_step(state, &params)
                }
                other => panic!("unexpected {other:?}"),
            };
            assert_eq!(out.next.tau.to_bits(), plain.next.tau.to_bits());
            assert_eq!(out.next.v.to_bits(), plain.next.v.to_bits());
            assert_eq!(out.t_zero.to_bits(), plain.t_zero.to_bits());
        }
    }

    #[test]
    fn o1_o2_phase_accounting() {
        let params = overload_demo_params();
        // Hold rate positive but the pulse dipped below zero frequency:
        // 0 < v_k < I_p R.
        for i in 0..40 {
            let v = 0.02 + 0.9 * (i as f64) / 40.0;
            let tau = -params.t_ref * (0.05 + 0.9 * (i as f64) / 41.0);
            let state = DiscreteState::new(tau, v);
            assert!(detect_overload(state, &params));
            let omega_hold = params.hold_rate(state.v);
            assert!(omega_hold > 0.0);
            let (out, ctx) = step_overload_detailed(state, &params).unwrap();
            assert!(ctx.s_la >= 0.0 && ctx.s_la < 1.0);
            let residual = match out.case {
                StepCase::O1 => ctx.s_la + (out.next.tau + params.t_ref) * omega_hold,
                StepCase::O2 => {
                    let tn = out.next.tau;
                    ctx.s_la
                        + params.t_ref * omega_hold
                        + tn * params.lin_coeff(state.v)
                        + params.quad_coeff() * tn * tn
                }
                other => panic!("unexpected {other:?}"),
            };
            assert!((residual - 1.0).abs() < 1e-12, "residual {residual}");
        }
    }

    #[test]
    fn o1_o2_boundary_continuity() {
        // At l_b = T_ref both formulas give τ' = 0. Construct v so that
        // (1 - S_la)/ω = T with S_la determined by the frozen pulse.
        let params = overload_demo_params();
        let tau = -0.3e-3;
        // Damped iteration to a fixed point of
        // v ↦ ((1 - S_la(v)) / T - ω_free)/K, staying inside the overload
        // region (v < I_p R) throughout.
        let mut v = 0.9;
        for _ in 0..200 {
            let state = DiscreteState::new(tau, v);
            let (_, ctx) = step_overload_detailed(state, &params).unwrap();
            let target = ((1.0 - ctx.s_la) / params.t_ref - params.omega_free) / params.k_vco;
            v += 0.5 * (target - v);
        }
        let state = DiscreteState::new(tau, v);
        let (out, ctx) = step_overload_detailed(state, &params).unwrap();
        let l_b = (1.0 - ctx.s_la) / params.hold_rate(v);
        assert!((l_b - params.t_ref).abs() < 1e-12 * params.t_ref);
        assert!(out.next.tau.abs() < 1e-10 * params.t_ref, "τ' = {}", out.next.tau);
    }

    #[test]
    fn extended_iteration_runs_through_overload_demo() {
        // Second overload demo configuration: v₁ = 4, τ₁ = -0.2 T_ref.
        let params = overload_demo_params();
        let trace = iterate(
            DiscreteState::new(-0.2e-3, 4.0),
            &params,
            200,
            OverloadPolicy::Extended,
        )
        .unwrap();
        assert_eq!(trace.len(), 200);
        // The run must visit overload cases and stay physical.
        assert!(trace.iter().any(|o| matches!(
            o.case,
            StepCase::O1
                | StepCase::O2
                | StepCase::O3
                | StepCase::O4
                | StepCase::O5
                | StepCase::O6
                | StepCase::O7
        )));
        for o in &trace {
            assert!(o.next.tau > -params.t_ref);
            assert!(o.next.tau.is_finite() && o.next.v.is_finite());
        }
    }

    #[test]
    fn first_demo_starts_overloaded() {
        let params = overload_demo_params();
        let state = DiscreteState::new(-0.1e-3, 0.0);
        assert!(detect_overload(state, &params));
        let (out, _) = step_overload_detailed(state, &params).unwrap();
        assert_eq!(out.case, StepCase::O4);
    }
}
