//! Event-driven simulator of the continuous signal-space CP-PLL model.
//!
//! Between trailing edges the model is exactly integrable: the capacitor
//! voltage is affine in time, so the VCO phase is piecewise linear or
//! quadratic. The simulator therefore advances event to event, solving each
//! phase crossing in closed form — there is no step size and no integration
//! error, which is what makes this engine trustworthy as a ground-truth
//! oracle for the discrete map.
//!
//! PFD transition law (trailing edges only): a reference edge switches the
//! output up unless it is already `+I_p`; a VCO edge switches it down unless
//! already `-I_p`; coinciding edges switch it to zero. Two edges closer than
//! `1e-12 * T_ref` are treated as coincident — at lock, reference and VCO
//! edges collide up to rounding.
//!
//! With `clamp_vco` the VCO law is `θ̇ = max(0, ω_free + K_vco v_F)`: the
//! oscillator freezes instead of running backwards, and the frozen
//! sub-intervals are handled analytically too. Without it, any state that
//! drives the frequency to zero is reported as [`OracleError::VcoOverload`].
//!
//! The discrete states `(τ_k, v_k)` are measured off the event stream
//! exactly as the map defines them: `τ_k` is the signed width of the k-th
//! PFD pulse and `v_k` the filter output after it returns to zero.

use crate::error::OracleError;
use crate::map::DiscreteState;
use crate::math::{floor, sqrt};
use crate::params::LoopParams;
use alloc::vec::Vec;

/// PFD output state; the output current is `level * I_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfdState {
    Minus,
    Zero,
    Plus,
}

impl PfdState {
    /// Output level in {-1, 0, +1}.
    pub fn level(&self) -> f64 {
        match self {
            PfdState::Minus => -1.0,
            PfdState::Zero => 0.0,
            PfdState::Plus => 1.0,
        }
    }
}

/// Which signal produced a trailing edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeSource {
    Ref,
    Vco,
    /// Reference and VCO edges coincided (within tolerance).
    Both,
}

/// A trailing-edge event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeEvent {
    pub t: f64,
    pub source: EdgeSource,
}

/// Continuous state snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleState {
    /// Current time (second).
    pub t: f64,
    /// Capacitor voltage (volt); continuous across events.
    pub v_c: f64,
    /// VCO phase (cycles); non-decreasing.
    pub theta_vco: f64,
    /// Reference phase (cycles); non-decreasing.
    pub theta_ref: f64,
    /// PFD output state.
    pub pfd: PfdState,
}

/// One measured discrete step: the k-th pulse and its hold voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSample {
    /// Step index, starting at 0 for the initial state's own pulse.
    pub index: usize,
    /// Pulse start `t_k` (second).
    pub t_start: f64,
    /// Pulse end `t_k^middle` (second); equals `t_start` for τ = 0.
    pub t_mid: f64,
    /// Signed pulse width `τ_k` (second).
    pub tau: f64,
    /// Hold voltage `v_k` (volt).
    pub v: f64,
}

/// Completed run: the edge events, the extracted discrete sequence, and the
/// final continuous state.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub events: Vec<EdgeEvent>,
    pub samples: Vec<PulseSample>,
    pub final_state: OracleState,
}

/// Relative tolerance (in units of `T_ref`) under which two edge times are
/// treated as one coincident event.
pub const EDGE_COINCIDENCE_TOL: f64 = 1e-12;

enum VcoCrossing {
    At(f64),
    /// No crossing while the current PFD level persists.
    Never,
    /// Unclamped frequency reaches zero after `dt` without crossing first.
    FreqZeroAt(f64),
}

/// Event-driven simulator. Construct with [`EventSimulator::from_discrete`],
/// then call [`step_event`](EventSimulator::step_event) or one of the run
/// helpers.
#[derive(Debug, Clone)]
pub struct EventSimulator {
    params: LoopParams,
    clamp: bool,
    t: f64,
    v_c: f64,
    /// VCO phase since the last VCO trailing edge, in [0, 1).
    vco_frac: f64,
    vco_cycles: u64,
    /// θ_ref(0); reference edges occur at θ_ref ∈ ℤ.
    ref_phase0: f64,
    /// Next reference edge index (θ_ref target).
    ref_next: i64,
    pfd: PfdState,
    /// Start time and sign of the pulse in progress.
    pulse: Option<(f64, i8)>,
    events: Vec<EdgeEvent>,
    samples: Vec<PulseSample>,
}

impl EventSimulator {
    /// Sets up the simulator so that the discrete engines and the oracle
    /// start from the same physical configuration: the initial pulse of
    /// width `|τ₀|` runs over `[0, |τ₀|)`, and the filter holds `v₀` right
    /// after it.
    ///
    /// For `τ₀ >= 0` the VCO phase is back-computed so its trailing edge
    /// lands exactly at `τ₀`; under the clamped law the back-computation
    /// accounts for a frozen interval inside the pulse. Initial states with
    /// no consistent phase (more than one VCO cycle inside the pulse, or a
    /// pulse that cannot end) are rejected.
    pub fn from_discrete(
        initial: DiscreteState,
        params: &LoopParams,
        clamp: bool,
    ) -> Result<Self, OracleError> {
        params
            .validate()
            .map_err(|_| OracleError::InvalidParams("loop parameters"))?;
        if !initial.tau.is_finite() || !initial.v.is_finite() {
            return Err(OracleError::InvalidInitialState("state must be finite"));
        }
        if initial.tau <= -params.t_ref {
            return Err(OracleError::InvalidInitialState("tau0 must be > -T_ref"));
        }
        let slew = params.slew();
        let v_c0 = initial.v - slew * initial.tau;
        let mut sim = EventSimulator {
            params: *params,
            clamp,
            t: 0.0,
            v_c: v_c0,
            vco_frac: 0.0,
            vco_cycles: 0,
            ref_phase0: 0.0,
            ref_next: 1,
            pfd: PfdState::Zero,
            pulse: None,
            events: Vec::new(),
            samples: Vec::new(),
        };
        if initial.tau == 0.0 {
            // Coincident edges at t = 0; the PFD is already zero.
            sim.events.push(EdgeEvent {
                t: 0.0,
                source: EdgeSource::Both,
            });
            sim.samples.push(PulseSample {
                index: 0,
                t_start: 0.0,
                t_mid: 0.0,
                tau: 0.0,
                v: initial.v,
            });
        } else if initial.tau > 0.0 {
            // Reference edge at t = 0 opened the pulse; the VCO edge must
            // land at τ₀. Sweep the required phase backwards.
            let tau0 = initial.tau;
            let f_end = params.lin_coeff(initial.v);
            let f_start = f_end - params.k_vco * slew * tau0;
            let ramp_slope = params.k_vco * slew;
            let advance = if f_start < 0.0 {
                if !clamp {
                    return Err(OracleError::VcoOverload { t: 0.0 });
                }
                if f_end < 0.0 {
                    return Err(OracleError::InvalidInitialState(
                        "v0 too small: the initial pulse cannot end",
                    ));
                }
                // Frequency frozen at zero until the ramp lifts it; only the
                // final triangle contributes phase.
                f_end * f_end / (2.0 * ramp_slope)
            } else {
                (f_start + f_end) * 0.5 * tau0
            };
            if advance > 1.0 {
                return Err(OracleError::InvalidInitialState(
                    "tau0 or v0 too big: several VCO cycles inside the initial pulse",
                ));
            }
            if advance <= 0.0 {
                return Err(OracleError::InvalidInitialState(
                    "initial pulse sweeps no VCO phase; it cannot end with a VCO edge",
                ));
            }
            sim.vco_frac = 1.0 - advance;
            sim.pfd = PfdState::Plus;
            sim.pulse = Some((0.0, 1));
            sim.events.push(EdgeEvent {
                t: 0.0,
                source: EdgeSource::Ref,
            });
        } else {
            // VCO edge at t = 0 opened the pulse; the reference edge lands
            // at -τ₀.
            sim.vco_frac = 0.0;
            sim.ref_phase0 = 1.0 + initial.tau / params.t_ref;
            sim.pfd = PfdState::Minus;
            sim.pulse = Some((0.0, -1));
            sim.events.push(EdgeEvent {
                t: 0.0,
                source: EdgeSource::Vco,
            });
        }
        Ok(sim)
    }

    /// Current continuous state.
    pub fn state(&self) -> OracleState {
        OracleState {
            t: self.t,
            v_c: self.v_c,
            theta_vco: self.vco_cycles as f64 + self.vco_frac,
            theta_ref: self.theta_ref(),
            pfd: self.pfd,
        }
    }

    fn theta_ref(&self) -> f64 {
        self.ref_phase0 + self.t / self.params.t_ref
    }

    /// Extracted discrete samples so far.
    pub fn samples(&self) -> &[PulseSample] {
        &self.samples
    }

    /// Edge events so far.
    pub fn events(&self) -> &[EdgeEvent] {
        &self.events
    }

    fn next_ref_time(&self) -> f64 {
        (self.ref_next as f64 - self.ref_phase0) * self.params.t_ref
    }

    /// Solves for the time to the next VCO integer crossing, assuming the
    /// PFD level stays constant.
    fn solve_vco(&self) -> Result<VcoCrossing, OracleError> {
        let p = &self.params;
        let sigma = self.pfd.level();
        let omega0 = p.hold_rate(self.v_c + sigma * p.i_p * p.r);
        let s = p.k_vco * p.slew(); // frequency ramp magnitude during a pulse
        let delta = 1.0 - self.vco_frac;
        debug_assert!(delta > 0.0);
        if sigma == 0.0 {
            if omega0 > 0.0 {
                Ok(VcoCrossing::At(delta / omega0))
            } else if self.clamp {
                Ok(VcoCrossing::Never)
            } else {
                Err(OracleError::VcoOverload { t: self.t })
            }
        } else if sigma > 0.0 {
            if omega0 >= 0.0 {
                Ok(VcoCrossing::At((-omega0 + sqrt(omega0 * omega0 + 2.0 * s * delta)) / s))
            } else if self.clamp {
                let freeze = -omega0 / s;
                Ok(VcoCrossing::At(freeze + sqrt(2.0 * delta / s)))
            } else {
                Err(OracleError::VcoOverload { t: self.t })
            }
        } else {
            if omega0 <= 0.0 {
                return if self.clamp {
                    Ok(VcoCrossing::Never)
                } else {
                    Err(OracleError::VcoOverload { t: self.t })
                };
            }
            let disc = omega0 * omega0 - 2.0 * s * delta;
            if disc >= 0.0 {
                Ok(VcoCrossing::At((omega0 - sqrt(disc)) / s))
            } else if self.clamp {
                Ok(VcoCrossing::Never)
            } else {
                Ok(VcoCrossing::FreqZeroAt(omega0 / s))
            }
        }
    }

    /// Advances capacitor voltage and VCO phase by `dt` under the current
    /// PFD level.
    fn advance(&mut self, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        let p = &self.params;
        let sigma = self.pfd.level();
        let omega0 = p.hold_rate(self.v_c + sigma * p.i_p * p.r);
        let s = p.k_vco * p.slew();
        let dphi = if sigma == 0.0 {
            if self.clamp {
                omega0.max(0.0) * dt
            } else {
                omega0 * dt
            }
        } else if sigma > 0.0 {
            if self.clamp && omega0 < 0.0 {
                let active = (dt + omega0 / s).max(0.0);
                0.5 * s * active * active
            } else {
                omega0 * dt + 0.5 * s * dt * dt
            }
        } else if self.clamp {
            if omega0 <= 0.0 {
                0.0
            } else if dt <= omega0 / s {
                omega0 * dt - 0.5 * s * dt * dt
            } else {
                omega0 * omega0 / (2.0 * s)
            }
        } else {
            omega0 * dt - 0.5 * s * dt * dt
        };
        debug_assert!(dphi >= -1e-15);
        self.vco_frac += dphi.max(0.0);
        self.v_c += sigma * p.slew() * dt;
        self.t += dt;
    }

    fn end_pulse(&mut self, t: f64) {
        if let Some((start, sign)) = self.pulse.take() {
            let width = t - start;
            self.samples.push(PulseSample {
                index: self.samples.len(),
                t_start: start,
                t_mid: t,
                tau: sign as f64 * width,
                v: self.v_c,
            });
        }
    }

    fn apply_edges(&mut self, t: f64, source: EdgeSource) {
        match source {
            EdgeSource::Ref => match self.pfd {
                PfdState::Minus => {
                    self.pfd = PfdState::Zero;
                    self.end_pulse(t);
                }
                PfdState::Zero => {
                    self.pfd = PfdState::Plus;
                    self.pulse = Some((t, 1));
                }
                PfdState::Plus => {}
            },
            EdgeSource::Vco => match self.pfd {
                PfdState::Plus => {
                    self.pfd = PfdState::Zero;
                    self.end_pulse(t);
                }
                PfdState::Zero => {
                    self.pfd = PfdState::Minus;
                    self.pulse = Some((t, -1));
                }
                PfdState::Minus => {}
            },
            EdgeSource::Both => match self.pfd {
                PfdState::Zero => {
                    // Zero-width pulse: the edges cancelled exactly.
                    self.samples.push(PulseSample {
                        index: self.samples.len(),
                        t_start: t,
                        t_mid: t,
                        tau: 0.0,
                        v: self.v_c,
                    });
                }
                _ => {
                    self.pfd = PfdState::Zero;
                    self.end_pulse(t);
                }
            },
        }
        self.events.push(EdgeEvent { t, source });
    }

    /// Advances to the next trailing-edge event, applying it. Returns the
    /// event.
    pub fn step_event(&mut self) -> Result<EdgeEvent, OracleError> {
        let t_ref_next = self.next_ref_time();
        let tol = EDGE_COINCIDENCE_TOL * self.params.t_ref;
        let crossing = self.solve_vco()?;
        let t_vco = match crossing {
            VcoCrossing::At(dt) => Some(self.t + dt),
            VcoCrossing::Never => None,
            VcoCrossing::FreqZeroAt(dt) => {
                // Unclamped run: valid only if the reference edge arrives
                // before the frequency reaches zero.
                if t_ref_next <= self.t + dt + tol {
                    None
                } else {
                    return Err(OracleError::VcoOverload { t: self.t + dt });
                }
            }
        };
        let (t_event, source) = match t_vco {
            Some(tv) if (tv - t_ref_next).abs() <= tol => (t_ref_next, EdgeSource::Both),
            Some(tv) if tv < t_ref_next => (tv, EdgeSource::Vco),
            _ => (t_ref_next, EdgeSource::Ref),
        };
        if t_event <= self.t {
            return Err(OracleError::StalledSimulation { t: self.t });
        }
        self.advance(t_event - self.t);
        self.t = t_event;
        match source {
            EdgeSource::Ref => {
                self.ref_next += 1;
            }
            EdgeSource::Vco => {
                self.vco_cycles += 1;
                self.vco_frac = 0.0;
            }
            EdgeSource::Both => {
                self.ref_next += 1;
                self.vco_cycles += 1;
                self.vco_frac = 0.0;
            }
        }
        self.apply_edges(t_event, source);
        Ok(EdgeEvent { t: t_event, source })
    }

    /// Runs until `t_end`, then advances the continuous state to exactly
    /// `t_end`.
    pub fn run_until(&mut self, t_end: f64) -> Result<(), OracleError> {
        if t_end <= self.t {
            return Err(OracleError::InvalidParams("t_end must exceed start time"));
        }
        while self.t < t_end {
            // Peek at the next event time without applying it.
            let t_ref_next = self.next_ref_time();
            let tol = EDGE_COINCIDENCE_TOL * self.params.t_ref;
            let t_next = match self.solve_vco()? {
                VcoCrossing::At(dt) => (self.t + dt).min(t_ref_next),
                VcoCrossing::Never => t_ref_next,
                VcoCrossing::FreqZeroAt(dt) => {
                    if t_ref_next <= self.t + dt + tol {
                        t_ref_next
                    } else {
                        return Err(OracleError::VcoOverload { t: self.t + dt });
                    }
                }
            };
            if t_next > t_end {
                self.advance(t_end - self.t);
                self.t = t_end;
                break;
            }
            self.step_event()?;
        }
        Ok(())
    }

    /// Runs until `n` discrete samples have been extracted (or errors).
    pub fn run_until_samples(&mut self, n: usize) -> Result<(), OracleError> {
        let mut guard = 0usize;
        let max_events = 64 * n.max(1) + 1024;
        while self.samples.len() < n {
            self.step_event()?;
            guard += 1;
            if guard > max_events {
                return Err(OracleError::StalledSimulation { t: self.t });
            }
        }
        Ok(())
    }

    /// Consumes the simulator into its run record.
    pub fn into_run(self) -> OracleRun {
        OracleRun {
            final_state: self.state(),
            events: self.events,
            samples: self.samples,
        }
    }
}

/// Time of the next reference trailing edge strictly after `state.t`.
pub fn next_ref_edge(state: &OracleState, params: &LoopParams) -> f64 {
    let m = floor(state.theta_ref) + 1.0;
    state.t + (m - state.theta_ref) * params.t_ref
}

/// Time of the next VCO trailing edge strictly after `state.t`, assuming
/// the PFD level stays constant. `Ok(None)` means the (clamped) frequency
/// never lifts the phase to the next integer under the current level.
pub fn next_vco_edge(
    state: &OracleState,
    params: &LoopParams,
    clamp: bool,
) -> Result<Option<f64>, OracleError> {
    let sim = EventSimulator {
        params: *params,
        clamp,
        t: state.t,
        v_c: state.v_c,
        vco_frac: state.theta_vco - floor(state.theta_vco),
        vco_cycles: 0,
        ref_phase0: state.theta_ref - state.t / params.t_ref,
        ref_next: 0,
        pfd: state.pfd,
        pulse: None,
        events: Vec::new(),
        samples: Vec::new(),
    };
    match sim.solve_vco()? {
        VcoCrossing::At(dt) => Ok(Some(state.t + dt)),
        VcoCrossing::Never => Ok(None),
        VcoCrossing::FreqZeroAt(dt) => Err(OracleError::VcoOverload { t: state.t + dt }),
    }
}

/// Runs the oracle from a discrete initial state until `t_end`.
pub fn simulate(
    initial: DiscreteState,
    params: &LoopParams,
    t_end: f64,
    clamp_vco: bool,
) -> Result<OracleRun, OracleError> {
    let mut sim = EventSimulator::from_discrete(initial, params, clamp_vco)?;
    sim.run_until(t_end)?;
    Ok(sim.into_run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{iterate, OverloadPolicy};

    fn ex5_params() -> LoopParams {
        LoopParams {
            r: 1000.0,
            c: 1e-6,
            k_vco: 500.0,
            i_p: 1e-3,
            t_ref: 1e-3,
            omega_free: 0.0,
        }
    }

    fn overload_demo_params() -> LoopParams {
        LoopParams {
            k_vco: 1000.0,
            ..ex5_params()
        }
    }

    #[test]
    fn next_ref_edge_closed_form() {
        let params = ex5_params();
        let mk = |t: f64, theta: f64| OracleState {
            t,
            v_c: 0.0,
            theta_vco: 0.0,
            theta_ref: theta,
            pfd: PfdState::Zero,
        };
        assert_eq!(next_ref_edge(&mk(0.0, 0.0), &params), params.t_ref);
        // θ_ref = 2.5 at t = 2.5 T: next edge at 3 T.
        let t = 2.5 * params.t_ref;
        assert!((next_ref_edge(&mk(t, 2.5), &params) - 3.0 * params.t_ref).abs() < 1e-18);
        // Just below an integer: the upcoming integer, not the one after.
        let theta = 3.0 - 1e-15;
        let t3 = theta * params.t_ref;
        let e = next_ref_edge(&mk(t3, theta), &params);
        assert!((e - 3.0 * params.t_ref).abs() <= 1e-12 * params.t_ref);
    }

    #[test]
    fn next_vco_edge_linear() {
        let params = LoopParams {
            k_vco: 8.0,
            t_ref: 1.0,
            r: 1.0,
            c: 1.0,
            i_p: 1.0,
            omega_free: 0.0,
        };
        // pfd = Zero, ω = K v_c = 8 Hz, half a cycle to go: 1/16 s.
        let state = OracleState {
            t: 0.0,
            v_c: 1.0,
            theta_vco: 0.5,
            theta_ref: 0.0,
            pfd: PfdState::Zero,
        };
        let t = next_vco_edge(&state, &params, false).unwrap().unwrap();
        assert!((t - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn next_vco_edge_quadratic_matches_bisection() {
        let params = LoopParams {
            r: 0.2,
            c: 0.01,
            k_vco: 20.0,
            i_p: 0.1,
            t_ref: 0.125,
            omega_free: 0.0,
        };
        let state = OracleState {
            t: 0.0,
            v_c: 0.37,
            theta_vco: 0.9,
            theta_ref: 0.25,
            pfd: PfdState::Plus,
        };
        let t = next_vco_edge(&state, &params, false).unwrap().unwrap();
        // Bisection on the analytic phase function.
        let omega0 = params.hold_rate(state.v_c + params.i_p * params.r);
        let s = params.k_vco * params.slew();
        let phase = |dt: f64| 0.9 + omega0 * dt + 0.5 * s * dt * dt;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        assert!(phase(hi) > 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phase(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((t - 0.5 * (lo + hi)).abs() < 1e-12);
    }

    #[test]
    fn next_vco_edge_clamped_frozen() {
        let params = ex5_params();
        let state = OracleState {
            t: 0.0,
            v_c: -1.0,
            theta_vco: 0.3,
            theta_ref: 0.0,
            pfd: PfdState::Zero,
        };
        assert_eq!(next_vco_edge(&state, &params, true).unwrap(), None);
        assert!(next_vco_edge(&state, &params, false).is_err());
    }

    #[test]
    fn lock_state_stays_locked() {
        let params = ex5_params();
        let lock = DiscreteState::new(0.0, params.lock_voltage());
        let run = simulate(lock, &params, 20.5 * params.t_ref, false).unwrap();
        assert!(run.samples.len() >= 20);
        for s in &run.samples {
            assert_eq!(s.tau, 0.0, "sample {:?}", s);
            assert!((s.v - lock.v).abs() < 1e-12);
        }
        // All events are coincident edges.
        assert!(run.events.iter().all(|e| e.source == EdgeSource::Both));
    }

    #[test]
    fn ex5_matches_discrete_map() {
        let params = ex5_params();
        let initial = DiscreteState::new(0.0, 10.0);
        let n = 60;
        let map_trace = iterate(initial, &params, n, OverloadPolicy::Extended).unwrap();
        let mut sim = EventSimulator::from_discrete(initial, &params, false).unwrap();
        sim.run_until_samples(n + 1).unwrap();
        let samples = sim.samples();
        // samples[0] is the initial state itself.
        assert!((samples[0].tau - initial.tau).abs() <= 1e-12 * params.t_ref);
        assert!((samples[0].v - initial.v).abs() <= 1e-9);
        for (k, out) in map_trace.iter().enumerate() {
            let s = &samples[k + 1];
            let tau_scale = out.next.tau.abs().max(params.t_ref);
            assert!(
                (s.tau - out.next.tau).abs() <= 1e-9 * tau_scale,
                "step {k}: oracle τ {} vs map {}",
                s.tau,
                out.next.tau
            );
            let v_scale = out.next.v.abs().max(1.0);
            assert!(
                (s.v - out.next.v).abs() <= 1e-9 * v_scale,
                "step {k}: oracle v {} vs map {}",
                s.v,
                out.next.v
            );
        }
    }

    #[test]
    fn nonzero_initial_pulse_reproduced() {
        // τ₀ ≠ 0 handshake: the first extracted sample is (τ₀, v₀) itself.
        let params = ex5_params();
        for &(tau0, v0) in &[(0.2e-3, 4.0), (-0.4e-3, 7.0)] {
            let initial = DiscreteState::new(tau0, v0);
            let mut sim = EventSimulator::from_discrete(initial, &params, false).unwrap();
            sim.run_until_samples(3).unwrap();
            let s0 = sim.samples()[0];
            assert!((s0.tau - tau0).abs() <= 1e-15, "tau {}", s0.tau);
            assert!((s0.v - v0).abs() <= 1e-12, "v {}", s0.v);
        }
    }

    #[test]
    fn overload_demo_matches_extended_map() {
        let params = overload_demo_params();
        for &(tau0, v0) in &[(-0.1e-3, 0.0), (-0.2e-3, 4.0)] {
            let initial = DiscreteState::new(tau0, v0);
            let n = 120;
            let map_trace = iterate(initial, &params, n, OverloadPolicy::Extended).unwrap();
            let mut sim = EventSimulator::from_discrete(initial, &params, true).unwrap();
            sim.run_until_samples(n + 1).unwrap();
            for (k, out) in map_trace.iter().enumerate() {
                let s = &sim.samples()[k + 1];
                let tau_scale = out.next.tau.abs().max(params.t_ref);
                assert!(
                    (s.tau - out.next.tau).abs() <= 1e-9 * tau_scale,
                    "(τ₀={tau0}, v₀={v0}) step {k}: oracle τ {} vs map {} (case {:?})",
                    s.tau,
                    out.next.tau,
                    out.case
                );
                let v_scale = out.next.v.abs().max(1.0);
                assert!(
                    (s.v - out.next.v).abs() <= 1e-9 * v_scale,
                    "(τ₀={tau0}, v₀={v0}) step {k}: oracle v {} vs map {}",
                    s.v,
                    out.next.v
                );
            }
        }
    }

    #[test]
    fn capacitor_is_conserved_across_replay() {
        // Replaying the event stream (PFD transition rule only) reproduces
        // the final capacitor voltage from the level durations alone.
        let params = ex5_params();
        let initial = DiscreteState::new(0.2e-3, 4.0);
        let run = simulate(initial, &params, 30.0 * params.t_ref, false).unwrap();
        let mut pfd = PfdState::Plus; // τ₀ > 0 preload
        let mut t_prev = 0.0;
        let mut v = initial.v - params.slew() * initial.tau;
        for e in run.events.iter().skip(1) {
            v += pfd.level() * params.slew() * (e.t - t_prev);
            t_prev = e.t;
            pfd = match (e.source, pfd) {
                (EdgeSource::Ref, PfdState::Minus) => PfdState::Zero,
                (EdgeSource::Ref, PfdState::Zero) => PfdState::Plus,
                (EdgeSource::Ref, PfdState::Plus) => PfdState::Plus,
                (EdgeSource::Vco, PfdState::Plus) => PfdState::Zero,
                (EdgeSource::Vco, PfdState::Zero) => PfdState::Minus,
                (EdgeSource::Vco, PfdState::Minus) => PfdState::Minus,
                (EdgeSource::Both, _) => PfdState::Zero,
            };
        }
        v += pfd.level() * params.slew() * (run.final_state.t - t_prev);
        assert!(
            (v - run.final_state.v_c).abs() <= 1e-9 * v.abs().max(1.0),
            "replayed {v} vs simulated {}",
            run.final_state.v_c
        );
    }

    #[test]
    fn one_vco_edge_per_negative_pulse_cycle() {
        // In the τ < 0 regime each extracted step carries exactly one VCO
        // edge between consecutive pulse starts.
        let params = ex5_params();
        let initial = DiscreteState::new(-0.2e-3, 3.0);
        let run = simulate(initial, &params, 10.0 * params.t_ref, false).unwrap();
        for pair in run.samples.windows(2) {
            if pair[0].tau < 0.0 && pair[1].tau < 0.0 {
                let vco_edges = run
                    .events
                    .iter()
                    .filter(|e| {
                        e.t > pair[0].t_start
                            && e.t <= pair[1].t_start
                            && matches!(e.source, EdgeSource::Vco | EdgeSource::Both)
                    })
                    .count();
                assert_eq!(vco_edges, 1, "between {:?} and {:?}", pair[0], pair[1]);
            }
        }
    }

    #[test]
    fn clamped_handshake_with_frozen_pulse_head() {
        // τ₀ > 0 with the frequency negative at pulse start: the handshake
        // must account only the final triangle of phase, and the extended
        // map must then agree with the clamped oracle.
        let params = overload_demo_params();
        let initial = DiscreteState::new(1e-3, -0.5);
        assert!(crate::overload::detect_overload(initial, &params));
        let n = 50;
        let map_trace = iterate(initial, &params, n, OverloadPolicy::Extended).unwrap();
        let mut sim = EventSimulator::from_discrete(initial, &params, true).unwrap();
        sim.run_until_samples(n + 1).unwrap();
        for (k, out) in map_trace.iter().enumerate() {
            let s = &sim.samples()[k + 1];
            assert!(
                (s.tau - out.next.tau).abs() <= 1e-9 * out.next.tau.abs().max(params.t_ref),
                "step {k}: {} vs {} ({:?})",
                s.tau,
                out.next.tau,
                out.case
            );
        }
        // Unclamped, the same initial state has no consistent configuration.
        assert!(EventSimulator::from_discrete(initial, &params, false).is_err());
    }

    #[test]
    fn vco_phase_nondecreasing_under_clamp() {
        let params = overload_demo_params();
        let mut sim =
            EventSimulator::from_discrete(DiscreteState::new(-0.2e-3, 4.0), &params, true)
                .unwrap();
        let mut theta_prev = sim.state().theta_vco;
        for _ in 0..400 {
            sim.step_event().unwrap();
            let theta = sim.state().theta_vco;
            assert!(theta >= theta_prev, "phase decreased: {theta_prev} -> {theta}");
            theta_prev = theta;
        }
    }

    #[test]
    fn invalid_initial_states_rejected() {
        let params = ex5_params();
        assert!(matches!(
            EventSimulator::from_discrete(DiscreteState::new(-2.0 * params.t_ref, 1.0), &params, false),
            Err(OracleError::InvalidInitialState(_))
        ));
        // Pulse sweeping more than one VCO cycle: v0 and tau0 both large.
        assert!(matches!(
            EventSimulator::from_discrete(DiscreteState::new(0.9e-3, 4000.0), &params, true),
            Err(OracleError::InvalidInitialState(_))
        ));
        // Pulse that can never end under clamping.
        let p2 = overload_demo_params();
        assert!(matches!(
            EventSimulator::from_discrete(DiscreteState::new(0.5e-3, -3.0), &p2, true),
            Err(OracleError::InvalidInitialState(_))
        ));
    }
}
