//! Unified engine runner: drives the corrected map, the original Paemel
//! algorithm, or the event-driven oracle from one `RunConfig` and produces
//! a common per-step trace.

use crate::config::{Engine, OverloadOpt, RunConfig};
use cppll_core::analysis::{detect_lock, LockCriterion};
use cppll_core::map::{iterate, DiscreteState, StepCase};
use cppll_core::oracle::EventSimulator;
use cppll_core::paemel::paemel_iterate;
use serde::Serialize;

/// One discrete step as written to trace files: the state `(τ_k, v_k)` it
/// produced, the branch taken, and the pulse timing `t_k`, `t_k^middle`.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub k: usize,
    pub tau: f64,
    pub v: f64,
    pub case: String,
    pub t_k: f64,
    pub t_mid: f64,
}

/// What stopped an engine early.
#[derive(Debug, Clone, Serialize)]
pub struct EngineStop {
    /// Step index at which the engine stopped (0-based step count reached).
    pub step: usize,
    pub message: String,
}

/// A finished engine run.
#[derive(Debug, Clone, Serialize)]
pub struct EngineTrace {
    pub engine: &'static str,
    pub rows: Vec<TraceRow>,
    /// Set when the engine terminated before completing the request.
    pub stop: Option<EngineStop>,
    pub lock_index: Option<usize>,
    pub final_tau: f64,
    pub final_v: f64,
}

impl EngineTrace {
    /// True when the stop is an engine-reported model condition (exit 3).
    pub fn stopped_by_model(&self) -> bool {
        self.stop.is_some()
    }
}

fn timing_accumulator(initial_tau: f64) -> impl FnMut(f64, f64) -> (f64, f64) {
    // t_{k+1} = t_k^middle + t_zero; t_{k+1}^middle = t_{k+1} + |τ_{k+1}|.
    let mut t_mid_prev = initial_tau.abs();
    move |tau: f64, t_zero: f64| {
        let t_k = t_mid_prev + t_zero;
        let t_mid = t_k + tau.abs();
        t_mid_prev = t_mid;
        (t_k, t_mid)
    }
}

fn lock_index_of(rows: &[TraceRow], config: &RunConfig, criterion: &LockCriterion) -> Option<usize> {
    let params = config.params();
    let mut states = Vec::with_capacity(rows.len() + 1);
    states.push(config.initial());
    states.extend(rows.iter().map(|r| DiscreteState::new(r.tau, r.v)));
    detect_lock(&states, &params, criterion)
}

/// Runs one engine (not `All`) according to the config.
pub fn run_engine(engine: Engine, config: &RunConfig) -> Result<EngineTrace, crate::CliError> {
    let params = config.params();
    let initial = config.initial();
    let criterion = config.criterion();
    match engine {
        Engine::Corrected => {
            let n = config.steps.unwrap_or(0);
            let trace = iterate(initial, &params, n, config.overload.into())
                .map_err(|e| crate::CliError::Engine(e.to_string()))?;
            let mut timing = timing_accumulator(initial.tau);
            let mut rows = Vec::with_capacity(trace.len());
            let mut stop = None;
            for (i, out) in trace.iter().enumerate() {
                let (t_k, t_mid) = timing(out.next.tau, out.t_zero);
                rows.push(TraceRow {
                    k: i + 1,
                    tau: out.next.tau,
                    v: out.next.v,
                    case: out.case.token().to_string(),
                    t_k,
                    t_mid,
                });
                if out.case == StepCase::OverloadHalt {
                    stop = Some(EngineStop {
                        step: i + 1,
                        message: format!(
                            "overload halt: v + omega_free/K_vco - I_p R = {}",
                            out.next.v + params.omega_free / params.k_vco
                                - params.i_p * params.r
                        ),
                    });
                }
            }
            let (final_tau, final_v) = rows
                .last()
                .map(|r| (r.tau, r.v))
                .unwrap_or((initial.tau, initial.v));
            Ok(EngineTrace {
                engine: "corrected",
                lock_index: lock_index_of(&rows, config, &criterion),
                rows,
                stop,
                final_tau,
                final_v,
            })
        }
        Engine::Paemel => {
            let n = config.steps.unwrap_or(0);
            let run = paemel_iterate(initial, &params, n, config.history.into());
            let mut timing = timing_accumulator(initial.tau);
            let rows: Vec<TraceRow> = run
                .steps
                .iter()
                .enumerate()
                .map(|(i, out)| {
                    let (t_k, t_mid) = timing(out.next.tau, out.t_zero);
                    TraceRow {
                        k: i + 1,
                        tau: out.next.tau,
                        v: out.next.v,
                        case: out.case.token().to_string(),
                        t_k,
                        t_mid,
                    }
                })
                .collect();
            let stop = run.error.map(|(step, err)| EngineStop {
                step,
                message: err.to_string(),
            });
            let (final_tau, final_v) = rows
                .last()
                .map(|r| (r.tau, r.v))
                .unwrap_or((initial.tau, initial.v));
            Ok(EngineTrace {
                engine: "paemel",
                lock_index: lock_index_of(&rows, config, &criterion),
                rows,
                stop,
                final_tau,
                final_v,
            })
        }
        Engine::Oracle => {
            let clamp = config.overload == OverloadOpt::Extended;
            let mut sim = EventSimulator::from_discrete(initial, &params, clamp)
                .map_err(|e| crate::CliError::Engine(e.to_string()))?;
            let mut stop = None;
            if let Some(n) = config.steps {
                if let Err(e) = sim.run_until_samples(n + 1) {
                    stop = Some(EngineStop {
                        step: sim.samples().len().saturating_sub(1),
                        message: e.to_string(),
                    });
                }
            } else {
                let t_end = config.t_end.expect("validated");
                if let Err(e) = sim.run_until(t_end) {
                    stop = Some(EngineStop {
                        step: sim.samples().len().saturating_sub(1),
                        message: e.to_string(),
                    });
                }
            }
            let rows: Vec<TraceRow> = sim
                .samples()
                .iter()
                .skip(1)
                .map(|s| TraceRow {
                    k: s.index,
                    tau: s.tau,
                    v: s.v,
                    case: "-".to_string(),
                    t_k: s.t_start,
                    t_mid: s.t_mid,
                })
                .collect();
            let (final_tau, final_v) = rows
                .last()
                .map(|r| (r.tau, r.v))
                .unwrap_or((initial.tau, initial.v));
            Ok(EngineTrace {
                engine: "oracle",
                lock_index: lock_index_of(&rows, config, &criterion),
                rows,
                stop,
                final_tau,
                final_v,
            })
        }
        Engine::All => Err(crate::CliError::Internal(
            "run_engine takes a single engine".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_run_config;

    fn ex1_config(extra: &str) -> RunConfig {
        let text = format!(
            "r = 0.2\nc = 0.01\nk_vco = 20\ni_p = 0.1\nt_ref = 0.125\n\
             tau0 = 0.0125\nv0 = 1\nsteps = 1\n{extra}"
        );
        parse_run_config(&text).unwrap()
    }

    #[test]
    fn corrected_single_step_row() {
        let config = ex1_config("");
        let trace = run_engine(Engine::Corrected, &config).unwrap();
        assert_eq!(trace.rows.len(), 1);
        let row = &trace.rows[0];
        assert!((row.tau - (-0.0625)).abs() < 1e-12);
        assert!((row.v - 0.3750).abs() < 1e-12);
        assert_eq!(row.case, "2");
        // t_1 = |τ₀| + t_zero = 0.0125 + 1/(K v) = 0.0625.
        assert!((row.t_k - 0.0625).abs() < 1e-12);
        assert!((row.t_mid - 0.125).abs() < 1e-12);
    }

    #[test]
    fn paemel_stop_recorded() {
        let config = ex1_config("engine = paemel\n");
        let trace = run_engine(Engine::Paemel, &config).unwrap();
        assert!(trace.rows.is_empty());
        let stop = trace.stop.expect("terminates");
        assert_eq!(stop.step, 0);
        assert!(stop.message.contains("-0.2096"), "{}", stop.message);
    }

    #[test]
    fn oracle_and_map_rows_agree() {
        let text = "r = 1000\nc = 1e-6\nk_vco = 500\ni_p = 1e-3\nt_ref = 1e-3\n\
                    tau0 = 0\nv0 = 10\nsteps = 50\n";
        let config = parse_run_config(text).unwrap();
        let map = run_engine(Engine::Corrected, &config).unwrap();
        let oracle = run_engine(Engine::Oracle, &config).unwrap();
        assert_eq!(map.rows.len(), oracle.rows.len());
        for (a, b) in map.rows.iter().zip(&oracle.rows) {
            assert!((a.tau - b.tau).abs() <= 1e-9 * a.tau.abs().max(1e-3));
            assert!((a.t_k - b.t_k).abs() <= 1e-9 * b.t_k.max(1e-3));
        }
    }
}
