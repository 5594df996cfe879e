//! Lock detection, pull-in-time estimation, classical design numbers, and
//! parameter-sweep classification.

use crate::error::ModelError;
use crate::map::{iterate, DiscreteState, OverloadPolicy};
use crate::normalized::{
    check_period_p, detect_overload_normalized, step_normalized, to_normalized_params,
    to_normalized_state, NormalizedParams, NormalizedState,
};
use crate::oracle::EventSimulator;
use crate::params::LoopParams;
use crate::{math, OracleError};
use alloc::vec::Vec;
use core::f64::consts::PI;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Classical normalized design numbers of the loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignNumbers {
    /// Loop gain `I_p R K_vco T_ref`.
    pub k_n: f64,
    /// Filter time constant in reference periods, `R C / T_ref`.
    pub tau_2n: f64,
    /// Natural frequency `(1/2π) sqrt(K_N / τ_2N)`.
    pub f_n: f64,
    /// Damping factor `sqrt(K_N τ_2N) / 2`.
    pub zeta: f64,
}

/// Evaluates the four classical design numbers.
pub fn design_numbers(params: &LoopParams) -> DesignNumbers {
    let k_n = params.i_p * params.r * params.k_vco * params.t_ref;
    let tau_2n = params.r * params.c / params.t_ref;
    DesignNumbers {
        k_n,
        tau_2n,
        f_n: math::sqrt(k_n / tau_2n) / (2.0 * PI),
        zeta: math::sqrt(k_n * tau_2n) / 2.0,
    }
}

/// Verdict of the classical allowed-area check, with the two bounds and the
/// margin left under each (`bound - F_N`; negative means violated).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllowedArea {
    pub inside: bool,
    /// `(sqrt(1 + ζ²) - ζ) / π`.
    pub curve_bound: f64,
    /// `1 / (4π ζ)`.
    pub damping_bound: f64,
    pub curve_margin: f64,
    pub damping_margin: f64,
}

/// Checks `F_N < (sqrt(1+ζ²)-ζ)/π` and `F_N < 1/(4πζ)`.
pub fn in_allowed_area(d: &DesignNumbers) -> AllowedArea {
    let curve_bound = (math::sqrt(1.0 + d.zeta * d.zeta) - d.zeta) / PI;
    let damping_bound = 1.0 / (4.0 * PI * d.zeta);
    AllowedArea {
        inside: d.f_n < curve_bound && d.f_n < damping_bound,
        curve_bound,
        damping_bound,
        curve_margin: curve_bound - d.f_n,
        damping_margin: damping_bound - d.f_n,
    }
}

/// Thresholds that define the locked state: small relative pulse width and
/// a VCO frequency close to the reference, held for several cycles.
///
/// The thresholds are engineering choices; the defaults make the reference
/// configurations lock robustly while rejecting slow transients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockCriterion {
    /// Threshold on `|τ_k / T_ref|`.
    pub tau_lock: f64,
    /// Threshold on `|ω_free + K_vco v_k - 1/T_ref|` (Hz).
    pub omega_lock: f64,
    /// Consecutive cycles both conditions must hold.
    pub hold_steps: usize,
}

impl LockCriterion {
    /// Defaults for the given reference period: `τ_lock = 1e-4`,
    /// `ω_lock = 1e-3 / T_ref`, 10 cycles.
    pub fn default_for(params: &LoopParams) -> Self {
        LockCriterion {
            tau_lock: 1e-4,
            omega_lock: 1e-3 / params.t_ref,
            hold_steps: 10,
        }
    }
}

/// First index `k` such that the lock conditions hold at `k` and the
/// following `hold_steps - 1` states.
pub fn detect_lock(
    states: &[DiscreteState],
    params: &LoopParams,
    criterion: &LockCriterion,
) -> Option<usize> {
    if criterion.hold_steps == 0 {
        return None;
    }
    let mut run_start = None;
    let mut run_len = 0usize;
    for (k, s) in states.iter().enumerate() {
        let tau_ok = math::abs(s.tau / params.t_ref) <= criterion.tau_lock;
        let omega_ok =
            math::abs(params.hold_rate(s.v) - 1.0 / params.t_ref) < criterion.omega_lock;
        if tau_ok && omega_ok {
            if run_len == 0 {
                run_start = Some(k);
            }
            run_len += 1;
            if run_len >= criterion.hold_steps {
                return run_start;
            }
        } else {
            run_len = 0;
            run_start = None;
        }
    }
    None
}

/// Time to reacquire lock for one sampled initial phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockTime {
    /// Elapsed time from the frequency switch to the locked state (second).
    pub seconds: f64,
    /// The same interval in units of the new reference period.
    pub cycles: f64,
    /// Index of the first locked state in the run.
    pub state_index: usize,
}

/// Pull-in measurement across sampled initial phases.
#[derive(Debug, Clone, PartialEq)]
pub struct PullInReport {
    /// One entry per sampled phase offset; `None` = no lock within budget.
    pub per_phase: Vec<Option<LockTime>>,
}

impl PullInReport {
    /// The pull-in-time estimate: the worst lock time over the sampled
    /// phases, or `None` if any phase failed to lock within budget.
    ///
    /// This maximizes over a phase sample, not over all states, so it is an
    /// estimate of the true supremum.
    pub fn max_lock_time(&self) -> Option<LockTime> {
        let mut worst: Option<LockTime> = None;
        for entry in &self.per_phase {
            let lt = (*entry)?;
            worst = Some(match worst {
                Some(w) if w.seconds >= lt.seconds => w,
                _ => lt,
            });
        }
        worst
    }
}

/// Switch-moment fractions used by the pull-in estimators: `n` midpoints of
/// a uniform partition of one locked cycle.
///
/// A period switch at cycle fraction `u` leaves the capacitor voltage and
/// edge alignment untouched, so the first pulse of the new regime has width
/// `u (T_1 - T_2)`: the old and new edge schedules drift apart by the period
/// difference over the remainder of the cycle.
fn switch_fractions(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| (i as f64 + 0.5) / n as f64)
}

fn switched_params(params: &LoopParams, to_freq: f64) -> Result<LoopParams, ModelError> {
    if to_freq <= 0.0 || to_freq.is_nan() {
        return Err(ModelError::InvalidParams("frequencies must be positive"));
    }
    Ok(LoopParams {
        t_ref: 1.0 / to_freq,
        ..*params
    })
}

/// Verifies the loop locks at `from_freq` from the stationary point, then
/// returns the hold voltage it locks at.
fn locked_voltage_at(
    params: &LoopParams,
    from_freq: f64,
    criterion: &LockCriterion,
) -> Result<f64, ModelError> {
    let p1 = switched_params(params, from_freq)?;
    let v_lock = p1.lock_voltage();
    let trace = iterate(
        DiscreteState::new(0.0, v_lock),
        &p1,
        criterion.hold_steps,
        OverloadPolicy::Extended,
    )?;
    let mut states = Vec::with_capacity(trace.len() + 1);
    states.push(DiscreteState::new(0.0, v_lock));
    states.extend(trace.iter().map(|o| o.next));
    let crit1 = LockCriterion {
        omega_lock: criterion.omega_lock * from_freq * params.t_ref,
        ..*criterion
    };
    if detect_lock(&states, &p1, &crit1) != Some(0) {
        return Err(ModelError::InvalidParams(
            "loop is not locked at the starting frequency",
        ));
    }
    Ok(v_lock)
}

/// Pull-in time measured with the discrete map.
///
/// The loop is locked at `from_freq`, the reference period switches to
/// `1/to_freq`, and the elapsed time to the first state satisfying the
/// criterion is measured. The switch can land anywhere in a cycle, so
/// `n_phases` initial pulse offsets spread over one period are sampled and
/// the report carries all of them.
pub fn pull_in_time_map(
    params: &LoopParams,
    from_freq: f64,
    to_freq: f64,
    criterion: &LockCriterion,
    n_phases: usize,
    budget: usize,
) -> Result<PullInReport, ModelError> {
    params.validate()?;
    let v0 = locked_voltage_at(params, from_freq, criterion)?;
    let p2 = switched_params(params, to_freq)?;
    let crit2 = LockCriterion {
        omega_lock: criterion.omega_lock * to_freq * params.t_ref,
        ..*criterion
    };
    let p1_t_ref = 1.0 / from_freq;
    let mut per_phase = Vec::with_capacity(n_phases);
    for u in switch_fractions(n_phases) {
        let initial = DiscreteState::new(u * (p1_t_ref - p2.t_ref), v0);
        let trace = iterate(initial, &p2, budget, OverloadPolicy::Extended)?;
        let mut states = Vec::with_capacity(trace.len() + 1);
        states.push(initial);
        states.extend(trace.iter().map(|o| o.next));
        let entry = detect_lock(&states, &p2, &crit2).map(|idx| {
            let mut elapsed = 0.0;
            for k in 0..idx {
                elapsed += math::abs(states[k].tau) + trace[k].t_zero;
            }
            LockTime {
                seconds: elapsed,
                cycles: elapsed / p2.t_ref,
                state_index: idx,
            }
        });
        per_phase.push(entry);
    }
    Ok(PullInReport { per_phase })
}

/// Pull-in time measured with the event-driven oracle (clamped VCO law, so
/// overload transients are survived rather than reported).
pub fn pull_in_time_oracle(
    params: &LoopParams,
    from_freq: f64,
    to_freq: f64,
    criterion: &LockCriterion,
    n_phases: usize,
    budget: usize,
) -> Result<PullInReport, OracleError> {
    params
        .validate()
        .map_err(|_| OracleError::InvalidParams("loop parameters"))?;
    let v0 = locked_voltage_at(params, from_freq, criterion)
        .map_err(|_| OracleError::InvalidParams("loop is not locked at the starting frequency"))?;
    let p2 = switched_params(params, to_freq)
        .map_err(|_| OracleError::InvalidParams("frequencies must be positive"))?;
    let crit2 = LockCriterion {
        omega_lock: criterion.omega_lock * to_freq * params.t_ref,
        ..*criterion
    };
    let p1_t_ref = 1.0 / from_freq;
    let mut per_phase = Vec::with_capacity(n_phases);
    for u in switch_fractions(n_phases) {
        let initial = DiscreteState::new(u * (p1_t_ref - p2.t_ref), v0);
        let mut sim = EventSimulator::from_discrete(initial, &p2, true)?;
        let mut entry = None;
        let mut consumed = 0usize;
        'run: while consumed < budget {
            let want = (consumed + 4096).min(budget) + 1;
            sim.run_until_samples(want)?;
            let samples = sim.samples();
            let states: Vec<DiscreteState> = samples
                .iter()
                .map(|s| DiscreteState::new(s.tau, s.v))
                .collect();
            if let Some(idx) = detect_lock(&states, &p2, &crit2) {
                entry = Some(LockTime {
                    seconds: samples[idx].t_start,
                    cycles: samples[idx].t_start / p2.t_ref,
                    state_index: idx,
                });
                break 'run;
            }
            consumed = samples.len();
        }
        per_phase.push(entry);
    }
    Ok(PullInReport { per_phase })
}

/// Inclusive linear axis: `n` points from `min` to `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl AxisSpec {
    /// The i-th grid value.
    pub fn value(&self, i: usize) -> f64 {
        debug_assert!(i < self.n);
        if self.n <= 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.n - 1) as f64
        }
    }
}

/// Which loop constant a dimensional sweep axis varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamField {
    R,
    C,
    KVco,
    IP,
    TRef,
    OmegaFree,
}

impl ParamField {
    /// Stable lower-case name, used by sweep files.
    pub fn name(&self) -> &'static str {
        match self {
            ParamField::R => "r",
            ParamField::C => "c",
            ParamField::KVco => "k_vco",
            ParamField::IP => "i_p",
            ParamField::TRef => "t_ref",
            ParamField::OmegaFree => "omega_free",
        }
    }

    /// Parses [`name`](Self::name) back.
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "r" => ParamField::R,
            "c" => ParamField::C,
            "k_vco" => ParamField::KVco,
            "i_p" => ParamField::IP,
            "t_ref" => ParamField::TRef,
            "omega_free" => ParamField::OmegaFree,
            _ => return None,
        })
    }

    /// Returns `base` with this field set to `value`.
    pub fn apply(&self, base: &LoopParams, value: f64) -> LoopParams {
        let mut p = *base;
        match self {
            ParamField::R => p.r = value,
            ParamField::C => p.c = value,
            ParamField::KVco => p.k_vco = value,
            ParamField::IP => p.i_p = value,
            ParamField::TRef => p.t_ref = value,
            ParamField::OmegaFree => p.omega_free = value,
        }
        p
    }
}

/// The plane a sweep covers.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepSpace {
    /// The dimensionless `(α, β)` plane.
    AlphaBeta { alpha: AxisSpec, beta: AxisSpec },
    /// Two loop constants varied around a base parameter set.
    Dimensional {
        base: LoopParams,
        x: ParamField,
        x_axis: AxisSpec,
        y: ParamField,
        y_axis: AxisSpec,
    },
}

impl SweepSpace {
    /// Grid extent `(nx, ny)`.
    pub fn shape(&self) -> (usize, usize) {
        match self {
            SweepSpace::AlphaBeta { alpha, beta } => (alpha.n, beta.n),
            SweepSpace::Dimensional { x_axis, y_axis, .. } => (x_axis.n, y_axis.n),
        }
    }

    /// Axis names `(x, y)`.
    pub fn axis_names(&self) -> (&'static str, &'static str) {
        match self {
            SweepSpace::AlphaBeta { .. } => ("alpha", "beta"),
            SweepSpace::Dimensional { x, y, .. } => (x.name(), y.name()),
        }
    }

    fn cell(&self, ix: usize, iy: usize) -> (f64, f64, NormalizedParams) {
        match self {
            SweepSpace::AlphaBeta { alpha, beta } => {
                let a = alpha.value(ix);
                let b = beta.value(iy);
                (a, b, NormalizedParams { alpha: a, beta: b })
            }
            SweepSpace::Dimensional {
                base,
                x,
                x_axis,
                y,
                y_axis,
            } => {
                let xv = x_axis.value(ix);
                let yv = y_axis.value(iy);
                let p = y.apply(&x.apply(base, xv), yv);
                (xv, yv, to_normalized_params(&p))
            }
        }
    }
}

/// Initial conditions for each sweep cell, in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialSpec {
    /// One fixed start per cell.
    Fixed { tau: f64, omega: f64 },
    /// `count` uniform draws per cell from the given ranges, seeded
    /// deterministically per cell.
    Sampled {
        count: usize,
        tau_range: (f64, f64),
        omega_range: (f64, f64),
    },
}

/// Full sweep description. Given equal configs (including `seed`), the
/// classification is bit-reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub space: SweepSpace,
    pub initial: InitialSpec,
    /// Map iterations per run.
    pub budget: usize,
    /// Threshold on `|τ'|` (pulse width in reference periods).
    pub tau_lock: f64,
    /// Threshold on `|ω'|` (relative frequency offset).
    pub omega_lock: f64,
    /// Consecutive cycles the lock conditions must hold.
    pub hold_steps: usize,
    /// Largest orbit period the classifier looks for.
    pub max_period: usize,
    pub seed: u64,
}

impl SweepConfig {
    /// Defaults matching [`LockCriterion::default_for`]: budget `1e5`,
    /// `τ_lock = 1e-4`, `ω_lock = 1e-3`, 10 hold cycles, periods up to 8.
    pub fn new(space: SweepSpace, initial: InitialSpec, seed: u64) -> Self {
        SweepConfig {
            space,
            initial,
            budget: 100_000,
            tau_lock: 1e-4,
            omega_lock: 1e-3,
            hold_steps: 10,
            max_period: 8,
            seed,
        }
    }
}

/// Classification of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellOutcome {
    /// Locked; index of the first locked state (worst over samples).
    Locked { index: usize },
    /// Sustained orbit of the given period at the end of the budget.
    Periodic { period: usize },
    /// An overload condition was reached.
    Overload,
    /// Neither locked nor recognizably periodic within the budget.
    NoLock,
}

impl CellOutcome {
    /// Stable token for sweep files.
    pub fn token(&self) -> &'static str {
        match self {
            CellOutcome::Locked { .. } => "lock",
            CellOutcome::Periodic { .. } => "period",
            CellOutcome::Overload => "overload",
            CellOutcome::NoLock => "no_lock",
        }
    }

    // Severity for the per-cell aggregate: a cell is only as good as its
    // worst sampled initial condition.
    fn rank(&self) -> u8 {
        match self {
            CellOutcome::Locked { .. } => 0,
            CellOutcome::Overload => 1,
            CellOutcome::Periodic { .. } => 2,
            CellOutcome::NoLock => 3,
        }
    }
}

fn classify_run(
    nparams: &NormalizedParams,
    initial: NormalizedState,
    config: &SweepConfig,
) -> CellOutcome {
    if nparams.validate().is_err() {
        return CellOutcome::Overload;
    }
    let window = (4 * config.max_period).max(64) + 1;
    let mut tail: Vec<NormalizedState> = Vec::with_capacity(window);
    let mut state = initial;
    let mut run_len = 0usize;
    let mut run_start = 0usize;
    for k in 0..=config.budget {
        let tau_ok = math::abs(state.tau) <= config.tau_lock;
        let omega_ok = math::abs(state.omega) < config.omega_lock;
        if tau_ok && omega_ok {
            if run_len == 0 {
                run_start = k;
            }
            run_len += 1;
            if run_len >= config.hold_steps {
                return CellOutcome::Locked { index: run_start };
            }
        } else {
            run_len = 0;
        }
        if k == config.budget {
            break;
        }
        if detect_overload_normalized(state, nparams) || state.omega <= -1.0 {
            return CellOutcome::Overload;
        }
        state = match step_normalized(state, nparams) {
            Ok(out) => out.next,
            Err(ModelError::OverloadDetected) => return CellOutcome::Overload,
            Err(_) => return CellOutcome::NoLock,
        };
        if tail.len() == window {
            tail.remove(0);
        }
        tail.push(state);
    }
    for p in 2..=config.max_period {
        if tail.len() < 2 * p + 1 {
            break;
        }
        // The orbit must recur across the whole retained tail.
        let hits = check_period_p(&tail, p, 1e-6);
        let needed = tail.len() - p;
        if hits.len() == needed {
            return CellOutcome::Periodic { period: p };
        }
    }
    CellOutcome::NoLock
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    range.0 + (range.1 - range.0) * u
}

/// Classifies one grid cell. Pure and deterministic: sampled initial
/// conditions are drawn from a stream seeded by `(config.seed, ix, iy)`.
pub fn classify_cell(config: &SweepConfig, ix: usize, iy: usize) -> CellOutcome {
    let (_, _, nparams) = config.space.cell(ix, iy);
    match config.initial {
        InitialSpec::Fixed { tau, omega } => {
            classify_run(&nparams, NormalizedState::new(tau, omega), config)
        }
        InitialSpec::Sampled {
            count,
            tau_range,
            omega_range,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(((ix as u64) << 32) ^ iy as u64 ^ 0x5eed);
            let mut worst = CellOutcome::Locked { index: 0 };
            for _ in 0..count.max(1) {
                let tau = uniform(&mut rng, tau_range).max(-0.999);
                let omega = uniform(&mut rng, omega_range).max(-0.999);
                let outcome = classify_run(&nparams, NormalizedState::new(tau, omega), config);
                worst = match (worst, outcome) {
                    (CellOutcome::Locked { index: a }, CellOutcome::Locked { index: b }) => {
                        CellOutcome::Locked { index: a.max(b) }
                    }
                    (w, o) if o.rank() > w.rank() => o,
                    (w, _) => w,
                };
            }
            worst
        }
    }
}

/// One classified cell with its grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRecord {
    pub ix: usize,
    pub iy: usize,
    pub x: f64,
    pub y: f64,
    pub outcome: CellOutcome,
}

/// Runs the whole sweep row-major. Cells are independent; callers that want
/// parallelism can fan [`classify_cell`] out instead and reassemble in index
/// order.
pub fn run_sweep(config: &SweepConfig) -> Vec<CellRecord> {
    let (nx, ny) = config.space.shape();
    let mut cells = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let (x, y, _) = config.space.cell(ix, iy);
            cells.push(CellRecord {
                ix,
                iy,
                x,
                y,
                outcome: classify_cell(config, ix, iy),
            });
        }
    }
    cells
}

/// Normalized-state view of a dimensional trace, for lock checks in
/// normalized terms.
pub fn normalized_trace(params: &LoopParams, states: &[DiscreteState]) -> Vec<NormalizedState> {
    states
        .iter()
        .map(|s| to_normalized_state(params, s))
        .collect()
}
