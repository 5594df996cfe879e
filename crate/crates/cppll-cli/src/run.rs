//! Subcommand implementations: `sim`, `compare`, `sweep`, `pullin`,
//! `design`.

use crate::config::{
    fmt_full, parse_kv, Engine, OutputFormat, RunConfig,
};
use crate::engines::{run_engine, EngineTrace};
use crate::output;
use crate::CliError;
use cppll_core::analysis::{
    classify_cell, design_numbers, in_allowed_area, pull_in_time_map, pull_in_time_oracle,
    AxisSpec, CellOutcome, InitialSpec, LockTime, ParamField, PullInReport, SweepConfig,
    SweepSpace,
};
use cppll_core::params::LoopParams;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    config: &'a RunConfig,
    engine: &'a str,
    steps_completed: usize,
    lock_index: Option<usize>,
    final_state: FinalState,
    error: Option<&'a crate::engines::EngineStop>,
}

#[derive(Debug, Serialize)]
struct FinalState {
    tau: f64,
    v: f64,
}

fn write_engine_outputs(
    dir: &Path,
    config: &RunConfig,
    trace: &EngineTrace,
    name_prefix: &str,
) -> Result<(), CliError> {
    match config.format {
        OutputFormat::Csv => {
            output::write_trace_csv(&dir.join(format!("{name_prefix}trace.csv")), &trace.rows)?
        }
        OutputFormat::Json => {
            output::write_trace_json(&dir.join(format!("{name_prefix}trace.json")), &trace.rows)?
        }
    }
    let pts = output::pfd_waveform(config.tau0, &trace.rows);
    output::write_pfd_csv(&output::pfd_path(dir, trace), &pts)?;
    Ok(())
}

/// `sim`: run one engine, write the trace, PFD waveform, and summary.
/// Returns the engine stop condition, if any (exit code 3).
pub fn cmd_sim(config: &RunConfig, out_dir: &Path) -> Result<Option<String>, CliError> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let engine = config.engine;
    if engine == Engine::All {
        return Err(CliError::Config(
            "sim runs a single engine; use `compare` for all three".into(),
        ));
    }
    let trace = run_engine(engine, config)?;
    write_engine_outputs(out_dir, config, &trace, "")?;
    let summary = RunSummary {
        config,
        engine: trace.engine,
        steps_completed: trace.rows.len(),
        lock_index: trace.lock_index,
        final_state: FinalState {
            tau: trace.final_tau,
            v: trace.final_v,
        },
        error: trace.stop.as_ref(),
    };
    output::write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(trace.stop.as_ref().map(|s| s.message.clone()))
}

#[derive(Debug, Serialize)]
struct CompareSummary<'a> {
    config: &'a RunConfig,
    engines: Vec<EngineStatus<'a>>,
    aligned_steps: usize,
    max_abs_dtau_paemel: Option<f64>,
    max_abs_dv_paemel: Option<f64>,
    max_rel_dtau_paemel: Option<f64>,
    max_abs_dtau_oracle: Option<f64>,
    max_abs_dv_oracle: Option<f64>,
    max_rel_dtau_oracle: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EngineStatus<'a> {
    engine: &'a str,
    steps_completed: usize,
    lock_index: Option<usize>,
    error: Option<&'a crate::engines::EngineStop>,
}

fn max_opt(acc: &mut Option<f64>, v: f64) {
    *acc = Some(acc.map_or(v, |m: f64| m.max(v)));
}

/// `compare`: run all three engines on the same configuration and report
/// per-step deviations. Engine-reported stops are part of the report, not
/// process errors.
pub fn cmd_compare(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let mut config = config.clone();
    config.engine = Engine::All;
    config.validate()?;
    if config.steps.is_none() {
        return Err(CliError::Config("compare requires steps".into()));
    }
    std::fs::create_dir_all(out_dir)?;

    let single = |engine: Engine| -> Result<EngineTrace, CliError> {
        let mut c = config.clone();
        c.engine = engine;
        run_engine(engine, &c)
    };
    let corrected = single(Engine::Corrected)?;
    let paemel = single(Engine::Paemel)?;
    // The oracle side of a comparison always runs the clamped VCO law so it
    // survives overloads that halt the discrete engines; the divergence is
    // part of the report.
    let oracle_run = {
        let mut c = config.clone();
        c.engine = Engine::Oracle;
        c.overload = crate::config::OverloadOpt::Extended;
        run_engine(Engine::Oracle, &c)
    };
    let oracle = match oracle_run {
        Ok(t) => t,
        Err(CliError::Engine(msg)) => EngineTrace {
            engine: "oracle",
            rows: Vec::new(),
            stop: Some(crate::engines::EngineStop {
                step: 0,
                message: msg,
            }),
            lock_index: None,
            final_tau: config.tau0,
            final_v: config.v0,
        },
        Err(e) => return Err(e),
    };

    for trace in [&corrected, &paemel, &oracle] {
        let pts = output::pfd_waveform(config.tau0, &trace.rows);
        output::write_pfd_csv(&output::pfd_path(out_dir, trace), &pts)?;
    }

    let aligned = corrected
        .rows
        .len()
        .min(paemel.rows.len())
        .min(oracle.rows.len());
    let aligned_pm = corrected.rows.len().min(paemel.rows.len());
    let aligned_or = corrected.rows.len().min(oracle.rows.len());

    let mut f = std::io::BufWriter::new(std::fs::File::create(out_dir.join("compare.csv"))?);
    writeln!(
        f,
        "k,tau_corrected,v_corrected,tau_paemel,v_paemel,tau_oracle,v_oracle,\
         dtau_paemel,dv_paemel,dtau_oracle,dv_oracle"
    )?;
    let mut summary = CompareSummary {
        config: &config,
        engines: Vec::new(),
        aligned_steps: aligned,
        max_abs_dtau_paemel: None,
        max_abs_dv_paemel: None,
        max_rel_dtau_paemel: None,
        max_abs_dtau_oracle: None,
        max_abs_dv_oracle: None,
        max_rel_dtau_oracle: None,
    };
    let blank = String::new();
    let n_rows = corrected
        .rows
        .len()
        .max(paemel.rows.len())
        .max(oracle.rows.len());
    for k in 0..n_rows {
        let c = corrected.rows.get(k);
        let p = paemel.rows.get(k);
        let o = oracle.rows.get(k);
        let cell = |v: Option<f64>| v.map(fmt_full).unwrap_or_else(|| blank.clone());
        let (dtau_p, dv_p) = match (c, p) {
            (Some(c), Some(p)) => {
                let dt = (c.tau - p.tau).abs();
                let dv = (c.v - p.v).abs();
                if k < aligned_pm {
                    max_opt(&mut summary.max_abs_dtau_paemel, dt);
                    max_opt(&mut summary.max_abs_dv_paemel, dv);
                    max_opt(
                        &mut summary.max_rel_dtau_paemel,
                        dt / c.tau.abs().max(config.t_ref),
                    );
                }
                (Some(dt), Some(dv))
            }
            _ => (None, None),
        };
        let (dtau_o, dv_o) = match (c, o) {
            (Some(c), Some(o)) => {
                let dt = (c.tau - o.tau).abs();
                let dv = (c.v - o.v).abs();
                if k < aligned_or {
                    max_opt(&mut summary.max_abs_dtau_oracle, dt);
                    max_opt(&mut summary.max_abs_dv_oracle, dv);
                    max_opt(
                        &mut summary.max_rel_dtau_oracle,
                        dt / c.tau.abs().max(config.t_ref),
                    );
                }
                (Some(dt), Some(dv))
            }
            _ => (None, None),
        };
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{}",
            k + 1,
            cell(c.map(|r| r.tau)),
            cell(c.map(|r| r.v)),
            cell(p.map(|r| r.tau)),
            cell(p.map(|r| r.v)),
            cell(o.map(|r| r.tau)),
            cell(o.map(|r| r.v)),
            cell(dtau_p),
            cell(dv_p),
            cell(dtau_o),
            cell(dv_o),
        )?;
    }
    f.flush()?;

    for trace in [&corrected, &paemel, &oracle] {
        summary.engines.push(EngineStatus {
            engine: trace.engine,
            steps_completed: trace.rows.len(),
            lock_index: trace.lock_index,
            error: trace.stop.as_ref(),
        });
    }
    output::write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(())
}

/// Sweep description parsed from a key-value file; see `parse_sweep_config`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFileConfig {
    pub space: SweepSpaceFile,
    pub initial: InitialFile,
    pub budget: usize,
    pub tau_lock: f64,
    pub omega_lock: f64,
    pub hold_steps: usize,
    pub max_period: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepSpaceFile {
    AlphaBeta {
        alpha_min: f64,
        alpha_max: f64,
        alpha_n: usize,
        beta_min: f64,
        beta_max: f64,
        beta_n: usize,
    },
    Dimensional {
        r: f64,
        c: f64,
        k_vco: f64,
        i_p: f64,
        t_ref: f64,
        omega_free: f64,
        x_field: String,
        x_min: f64,
        x_max: f64,
        x_n: usize,
        y_field: String,
        y_min: f64,
        y_max: f64,
        y_n: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialFile {
    Fixed {
        tau0_n: f64,
        omega0_n: f64,
    },
    Sampled {
        samples: usize,
        tau_min: f64,
        tau_max: f64,
        omega_min: f64,
        omega_max: f64,
    },
}

fn kv_f64(map: &mut BTreeMap<String, String>, key: &str, default: Option<f64>) -> Result<f64, CliError> {
    match map.remove(key) {
        Some(v) => v
            .parse()
            .map_err(|_| CliError::Config(format!("{key}: `{v}` is not a number"))),
        None => default.ok_or_else(|| CliError::Config(format!("missing key `{key}`"))),
    }
}

fn kv_usize(
    map: &mut BTreeMap<String, String>,
    key: &str,
    default: Option<usize>,
) -> Result<usize, CliError> {
    match map.remove(key) {
        Some(v) => v
            .parse()
            .map_err(|_| CliError::Config(format!("{key}: `{v}` is not a count"))),
        None => default.ok_or_else(|| CliError::Config(format!("missing key `{key}`"))),
    }
}

/// Parses a sweep config file.
pub fn parse_sweep_config(text: &str) -> Result<SweepFileConfig, CliError> {
    let mut map = parse_kv(text)?;
    let space = match map.remove("space").as_deref() {
        None | Some("alpha_beta") => SweepSpaceFile::AlphaBeta {
            alpha_min: kv_f64(&mut map, "alpha_min", None)?,
            alpha_max: kv_f64(&mut map, "alpha_max", None)?,
            alpha_n: kv_usize(&mut map, "alpha_n", None)?,
            beta_min: kv_f64(&mut map, "beta_min", None)?,
            beta_max: kv_f64(&mut map, "beta_max", None)?,
            beta_n: kv_usize(&mut map, "beta_n", None)?,
        },
        Some("dimensional") => SweepSpaceFile::Dimensional {
            r: kv_f64(&mut map, "r", None)?,
            c: kv_f64(&mut map, "c", None)?,
            k_vco: kv_f64(&mut map, "k_vco", None)?,
            i_p: kv_f64(&mut map, "i_p", None)?,
            t_ref: kv_f64(&mut map, "t_ref", None)?,
            omega_free: kv_f64(&mut map, "omega_free", Some(0.0))?,
            x_field: map
                .remove("x_field")
                .ok_or_else(|| CliError::Config("missing key `x_field`".into()))?,
            x_min: kv_f64(&mut map, "x_min", None)?,
            x_max: kv_f64(&mut map, "x_max", None)?,
            x_n: kv_usize(&mut map, "x_n", None)?,
            y_field: map
                .remove("y_field")
                .ok_or_else(|| CliError::Config("missing key `y_field`".into()))?,
            y_min: kv_f64(&mut map, "y_min", None)?,
            y_max: kv_f64(&mut map, "y_max", None)?,
            y_n: kv_usize(&mut map, "y_n", None)?,
        },
        Some(other) => {
            return Err(CliError::Config(format!(
                "space: `{other}` is not one of alpha_beta|dimensional"
            )))
        }
    };
    let initial = match map.remove("initial").as_deref() {
        None | Some("fixed") => InitialFile::Fixed {
            tau0_n: kv_f64(&mut map, "tau0_n", Some(1e-3))?,
            omega0_n: kv_f64(&mut map, "omega0_n", Some(1e-3))?,
        },
        Some("sampled") => InitialFile::Sampled {
            samples: kv_usize(&mut map, "samples", Some(8))?,
            tau_min: kv_f64(&mut map, "tau_min", Some(-0.5))?,
            tau_max: kv_f64(&mut map, "tau_max", Some(0.5))?,
            omega_min: kv_f64(&mut map, "omega_min", Some(-0.5))?,
            omega_max: kv_f64(&mut map, "omega_max", Some(2.0))?,
        },
        Some(other) => {
            return Err(CliError::Config(format!(
                "initial: `{other}` is not one of fixed|sampled"
            )))
        }
    };
    let config = SweepFileConfig {
        space,
        initial,
        budget: kv_usize(&mut map, "budget", Some(100_000))?,
        tau_lock: kv_f64(&mut map, "tau_lock", Some(1e-4))?,
        omega_lock: kv_f64(&mut map, "omega_lock", Some(1e-3))?,
        hold_steps: kv_usize(&mut map, "hold_steps", Some(10))?,
        max_period: kv_usize(&mut map, "max_period", Some(8))?,
        seed: match map.remove("seed") {
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Config(format!("seed: `{v}` is not an integer")))?,
            None => 0,
        },
    };
    if let Some(key) = map.keys().next() {
        return Err(CliError::Config(format!("unknown key `{key}`")));
    }
    Ok(config)
}

fn to_core_sweep(file: &SweepFileConfig, seed_override: Option<u64>) -> Result<SweepConfig, CliError> {
    let space = match &file.space {
        SweepSpaceFile::AlphaBeta {
            alpha_min,
            alpha_max,
            alpha_n,
            beta_min,
            beta_max,
            beta_n,
        } => SweepSpace::AlphaBeta {
            alpha: AxisSpec {
                min: *alpha_min,
                max: *alpha_max,
                n: *alpha_n,
            },
            beta: AxisSpec {
                min: *beta_min,
                max: *beta_max,
                n: *beta_n,
            },
        },
        SweepSpaceFile::Dimensional {
            r,
            c,
            k_vco,
            i_p,
            t_ref,
            omega_free,
            x_field,
            x_min,
            x_max,
            x_n,
            y_field,
            y_min,
            y_max,
            y_n,
        } => {
            let base = LoopParams {
                r: *r,
                c: *c,
                k_vco: *k_vco,
                i_p: *i_p,
                t_ref: *t_ref,
                omega_free: *omega_free,
            };
            base.validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
            let x = ParamField::parse(x_field)
                .ok_or_else(|| CliError::Config(format!("x_field: unknown field `{x_field}`")))?;
            let y = ParamField::parse(y_field)
                .ok_or_else(|| CliError::Config(format!("y_field: unknown field `{y_field}`")))?;
            SweepSpace::Dimensional {
                base,
                x,
                x_axis: AxisSpec {
                    min: *x_min,
                    max: *x_max,
                    n: *x_n,
                },
                y,
                y_axis: AxisSpec {
                    min: *y_min,
                    max: *y_max,
                    n: *y_n,
                },
            }
        }
    };
    let initial = match &file.initial {
        InitialFile::Fixed { tau0_n, omega0_n } => InitialSpec::Fixed {
            tau: *tau0_n,
            omega: *omega0_n,
        },
        InitialFile::Sampled {
            samples,
            tau_min,
            tau_max,
            omega_min,
            omega_max,
        } => InitialSpec::Sampled {
            count: *samples,
            tau_range: (*tau_min, *tau_max),
            omega_range: (*omega_min, *omega_max),
        },
    };
    Ok(SweepConfig {
        space,
        initial,
        budget: file.budget,
        tau_lock: file.tau_lock,
        omega_lock: file.omega_lock,
        hold_steps: file.hold_steps,
        max_period: file.max_period,
        seed: seed_override.unwrap_or(file.seed),
    })
}

#[derive(Debug, Serialize)]
struct SweepMeta<'a> {
    config: &'a SweepFileConfig,
    seed: u64,
    x_axis: &'static str,
    y_axis: &'static str,
    nx: usize,
    ny: usize,
}

/// `sweep`: classify the grid (cells in parallel, output in row-major
/// order) and write `sweep.csv` plus `sweep_meta.json`. Output bytes are a
/// function of the config and seed only.
pub fn cmd_sweep(
    file: &SweepFileConfig,
    seed_override: Option<u64>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let config = to_core_sweep(file, seed_override)?;
    let (nx, ny) = config.space.shape();
    if nx == 0 || ny == 0 {
        return Err(CliError::Config("sweep grid must be non-empty".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let outcomes: Vec<CellOutcome> = (0..nx * ny)
        .into_par_iter()
        .map(|i| classify_cell(&config, i % nx, i / nx))
        .collect();

    let (x_name, y_name) = config.space.axis_names();
    let mut f = std::io::BufWriter::new(std::fs::File::create(out_dir.join("sweep.csv"))?);
    writeln!(f, "ix,iy,{x_name},{y_name},outcome,detail")?;
    for iy in 0..ny {
        for ix in 0..nx {
            let outcome = outcomes[iy * nx + ix];
            let (x, y) = cell_coords(&config.space, ix, iy);
            let detail = match outcome {
                CellOutcome::Locked { index } => index.to_string(),
                CellOutcome::Periodic { period } => period.to_string(),
                _ => String::new(),
            };
            writeln!(
                f,
                "{ix},{iy},{},{},{},{detail}",
                fmt_full(x),
                fmt_full(y),
                outcome.token()
            )?;
        }
    }
    f.flush()?;

    let meta = SweepMeta {
        config: file,
        seed: config.seed,
        x_axis: x_name,
        y_axis: y_name,
        nx,
        ny,
    };
    output::write_json(&out_dir.join("sweep_meta.json"), &meta)?;
    Ok(())
}

fn cell_coords(space: &SweepSpace, ix: usize, iy: usize) -> (f64, f64) {
    match space {
        SweepSpace::AlphaBeta { alpha, beta } => (alpha.value(ix), beta.value(iy)),
        SweepSpace::Dimensional { x_axis, y_axis, .. } => (x_axis.value(ix), y_axis.value(iy)),
    }
}

#[derive(Debug, Serialize)]
struct PullInSummary<'a> {
    config: &'a RunConfig,
    from_freq: f64,
    to_freq: f64,
    phases: usize,
    budget: usize,
    map: PullInSide,
    oracle: PullInSide,
    /// |map - oracle| of the worst-case lock time, in seconds.
    max_abs_difference: Option<f64>,
}

#[derive(Debug, Serialize)]
struct PullInSide {
    per_phase: Vec<Option<LockEntry>>,
    max: Option<LockEntry>,
}

#[derive(Debug, Serialize, Clone, Copy)]
struct LockEntry {
    seconds: f64,
    cycles: f64,
    state_index: usize,
}

impl From<LockTime> for LockEntry {
    fn from(lt: LockTime) -> Self {
        LockEntry {
            seconds: lt.seconds,
            cycles: lt.cycles,
            state_index: lt.state_index,
        }
    }
}

fn side(report: &PullInReport) -> PullInSide {
    PullInSide {
        per_phase: report
            .per_phase
            .iter()
            .map(|e| e.map(LockEntry::from))
            .collect(),
        max: report.max_lock_time().map(LockEntry::from),
    }
}

/// `pullin`: measure the re-lock time after a reference-frequency step with
/// both engines and report the per-phase results and worst cases.
pub fn cmd_pullin(
    config: &RunConfig,
    from_freq: f64,
    to_freq: f64,
    phases: usize,
    budget: usize,
    out_dir: &Path,
) -> Result<(), CliError> {
    let params = config.params();
    params
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    if !(from_freq > 0.0 && to_freq > 0.0) {
        return Err(CliError::Config("frequencies must be positive".into()));
    }
    let criterion = config.criterion();
    std::fs::create_dir_all(out_dir)?;
    let map_report = pull_in_time_map(&params, from_freq, to_freq, &criterion, phases, budget)
        .map_err(|e| CliError::Engine(e.to_string()))?;
    let oracle_report =
        pull_in_time_oracle(&params, from_freq, to_freq, &criterion, phases, budget)
            .map_err(|e| CliError::Engine(e.to_string()))?;
    let max_abs_difference = match (map_report.max_lock_time(), oracle_report.max_lock_time()) {
        (Some(m), Some(o)) => Some((m.seconds - o.seconds).abs()),
        _ => None,
    };
    let summary = PullInSummary {
        config,
        from_freq,
        to_freq,
        phases,
        budget,
        map: side(&map_report),
        oracle: side(&oracle_report),
        max_abs_difference,
    };
    output::write_json(&out_dir.join("pullin.json"), &summary)?;
    match (map_report.max_lock_time(), oracle_report.max_lock_time()) {
        (Some(m), Some(o)) => println!(
            "pull-in estimate: map {} s ({:.1} cycles), oracle {} s ({:.1} cycles)",
            fmt_full(m.seconds),
            m.cycles,
            fmt_full(o.seconds),
            o.cycles
        ),
        _ => println!("pull-in: no lock within budget for at least one phase"),
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct DesignReport {
    k_n: f64,
    tau_2n: f64,
    f_n: f64,
    zeta: f64,
    inside_allowed_area: bool,
    curve_bound: f64,
    damping_bound: f64,
    curve_margin: f64,
    damping_margin: f64,
}

/// `design`: print the classical design numbers and the allowed-area
/// verdict.
pub fn cmd_design(params: &LoopParams, format: OutputFormat) -> Result<(), CliError> {
    params
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let d = design_numbers(params);
    let area = in_allowed_area(&d);
    match format {
        OutputFormat::Json => {
            let report = DesignReport {
                k_n: d.k_n,
                tau_2n: d.tau_2n,
                f_n: d.f_n,
                zeta: d.zeta,
                inside_allowed_area: area.inside,
                curve_bound: area.curve_bound,
                damping_bound: area.damping_bound,
                curve_margin: area.curve_margin,
                damping_margin: area.damping_margin,
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        OutputFormat::Csv => {
            println!("K_N     = {:.6}", d.k_n);
            println!("tau_2N  = {:.6}", d.tau_2n);
            println!("F_N     = {:.6}", d.f_n);
            println!("zeta    = {:.6}", d.zeta);
            println!(
                "allowed area: {} (F_N < {:.4} and F_N < {:.4})",
                if area.inside { "inside" } else { "OUTSIDE" },
                area.curve_bound,
                area.damping_bound
            );
        }
    }
    Ok(())
}
