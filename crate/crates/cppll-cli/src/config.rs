//! Run configuration: a flat `key = value` text file plus flag overrides.
//!
//! Every physical quantity is in SI units (seconds and hertz only). Blank
//! lines and `#` comments are ignored. Unknown keys are rejected so typos
//! surface as configuration errors instead of silently using defaults.

use crate::CliError;
use cppll_core::analysis::LockCriterion;
use cppll_core::map::{DiscreteState, OverloadPolicy};
use cppll_core::paemel::HistoryPolicy;
use cppll_core::params::LoopParams;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Corrected,
    Paemel,
    Oracle,
    All,
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::Corrected => "corrected",
            Engine::Paemel => "paemel",
            Engine::Oracle => "oracle",
            Engine::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OverloadOpt {
    Halt,
    Extended,
}

impl From<OverloadOpt> for OverloadPolicy {
    fn from(o: OverloadOpt) -> Self {
        match o {
            OverloadOpt::Halt => OverloadPolicy::Halt,
            OverloadOpt::Extended => OverloadPolicy::Extended,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum HistoryOpt {
    Strict,
    UseCurrent,
    BackExtrapolate,
}

impl From<HistoryOpt> for HistoryPolicy {
    fn from(h: HistoryOpt) -> Self {
        match h {
            HistoryOpt::Strict => HistoryPolicy::Strict,
            HistoryOpt::UseCurrent => HistoryPolicy::UseCurrent,
            HistoryOpt::BackExtrapolate => HistoryPolicy::BackExtrapolate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// A fully resolved run: parameters, initial state, horizon, policies,
/// lock criterion, and output format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub engine: Engine,
    pub r: f64,
    pub c: f64,
    pub k_vco: f64,
    pub i_p: f64,
    pub t_ref: f64,
    pub omega_free: f64,
    pub tau0: f64,
    pub v0: f64,
    pub steps: Option<usize>,
    pub t_end: Option<f64>,
    pub overload: OverloadOpt,
    pub history: HistoryOpt,
    pub tau_lock: f64,
    /// Absolute frequency threshold (Hz). Defaults to `1e-3 / t_ref`.
    pub omega_lock: Option<f64>,
    pub hold_steps: usize,
    pub seed: u64,
    pub format: OutputFormat,
}

impl RunConfig {
    pub fn params(&self) -> LoopParams {
        LoopParams {
            r: self.r,
            c: self.c,
            k_vco: self.k_vco,
            i_p: self.i_p,
            t_ref: self.t_ref,
            omega_free: self.omega_free,
        }
    }

    pub fn initial(&self) -> DiscreteState {
        DiscreteState::new(self.tau0, self.v0)
    }

    pub fn criterion(&self) -> LockCriterion {
        LockCriterion {
            tau_lock: self.tau_lock,
            omega_lock: self.omega_lock.unwrap_or(1e-3 / self.t_ref),
            hold_steps: self.hold_steps,
        }
    }

    /// Validates the cross-field invariants.
    pub fn validate(&self) -> Result<(), CliError> {
        self.params()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !self.tau0.is_finite() || !self.v0.is_finite() {
            return Err(CliError::Config("tau0 and v0 must be finite".into()));
        }
        if self.tau0 <= -self.t_ref {
            return Err(CliError::Config("tau0 must be > -t_ref".into()));
        }
        match (self.steps, self.t_end) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "exactly one of steps / t_end may be given".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Config("one of steps / t_end is required".into()))
            }
            (None, Some(_)) if self.engine != Engine::Oracle => {
                return Err(CliError::Config(
                    "t_end applies to the oracle engine only; discrete engines take steps".into(),
                ))
            }
            _ => {}
        }
        if matches!(self.engine, Engine::Paemel | Engine::All) && self.omega_free != 0.0 {
            return Err(CliError::Config(
                "the paemel engine is defined for omega_free = 0 only".into(),
            ));
        }
        if self.hold_steps == 0 {
            return Err(CliError::Config("hold_steps must be >= 1".into()));
        }
        let positive = |x: f64| x > 0.0;
        if !positive(self.tau_lock) || !self.omega_lock.is_none_or(positive) {
            return Err(CliError::Config(
                "lock thresholds must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Serializes back to the flat key-value format; `parse_str` of the
    /// result reproduces the config exactly.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "engine = {}", self.engine.name());
        for (k, v) in [
            ("r", self.r),
            ("c", self.c),
            ("k_vco", self.k_vco),
            ("i_p", self.i_p),
            ("t_ref", self.t_ref),
            ("omega_free", self.omega_free),
            ("tau0", self.tau0),
            ("v0", self.v0),
        ] {
            let _ = writeln!(s, "{k} = {}", fmt_full(v));
        }
        if let Some(n) = self.steps {
            let _ = writeln!(s, "steps = {n}");
        }
        if let Some(t) = self.t_end {
            let _ = writeln!(s, "t_end = {}", fmt_full(t));
        }
        let overload = match self.overload {
            OverloadOpt::Halt => "halt",
            OverloadOpt::Extended => "extended",
        };
        let _ = writeln!(s, "overload = {overload}");
        let history = match self.history {
            HistoryOpt::Strict => "strict",
            HistoryOpt::UseCurrent => "use_current",
            HistoryOpt::BackExtrapolate => "back_extrapolate",
        };
        let _ = writeln!(s, "history = {history}");
        let _ = writeln!(s, "tau_lock = {}", fmt_full(self.tau_lock));
        if let Some(w) = self.omega_lock {
            let _ = writeln!(s, "omega_lock = {}", fmt_full(w));
        }
        let _ = writeln!(s, "hold_steps = {}", self.hold_steps);
        let _ = writeln!(s, "seed = {}", self.seed);
        let format = match self.format {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        };
        let _ = writeln!(s, "format = {format}");
        s
    }
}

/// Full-roundtrip decimal formatting: 17 significant digits.
pub fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses the flat `key = value` format into a key→value map.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "line {}: expected `key = value`, got `{raw}`",
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            return Err(CliError::Config(format!(
                "line {}: duplicate key `{key}`",
                lineno + 1
            )));
        }
    }
    Ok(map)
}

fn take_f64(map: &mut BTreeMap<String, String>, key: &str) -> Result<Option<f64>, CliError> {
    match map.remove(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<f64>()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{key}: `{v}` is not a number"))),
    }
}

fn take_usize(map: &mut BTreeMap<String, String>, key: &str) -> Result<Option<usize>, CliError> {
    match map.remove(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{key}: `{v}` is not a count"))),
    }
}

fn take_u64(map: &mut BTreeMap<String, String>, key: &str) -> Result<Option<u64>, CliError> {
    match map.remove(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{key}: `{v}` is not an integer"))),
    }
}

/// Parses a run config from the key-value text. Required keys: the five
/// loop constants and `t_ref`; everything else has defaults.
pub fn parse_run_config(text: &str) -> Result<RunConfig, CliError> {
    let mut map = parse_kv(text)?;
    let mut need = |key: &str| -> Result<f64, CliError> {
        take_f64(&mut map, key)?.ok_or_else(|| CliError::Config(format!("missing key `{key}`")))
    };
    let r = need("r")?;
    let c = need("c")?;
    let k_vco = need("k_vco")?;
    let i_p = need("i_p")?;
    let t_ref = need("t_ref")?;
    let omega_free = take_f64(&mut map, "omega_free")?.unwrap_or(0.0);
    let tau0 = take_f64(&mut map, "tau0")?.unwrap_or(0.0);
    let v0 = take_f64(&mut map, "v0")?.unwrap_or(0.0);
    let steps = take_usize(&mut map, "steps")?;
    let t_end = take_f64(&mut map, "t_end")?;
    let engine = match map.remove("engine").as_deref() {
        None | Some("corrected") => Engine::Corrected,
        Some("paemel") => Engine::Paemel,
        Some("oracle") => Engine::Oracle,
        Some("all") => Engine::All,
        Some(other) => {
            return Err(CliError::Config(format!(
                "engine: `{other}` is not one of corrected|paemel|oracle|all"
            )))
        }
    };
    let overload = match map.remove("overload").as_deref() {
        None | Some("extended") => OverloadOpt::Extended,
        Some("halt") => OverloadOpt::Halt,
        Some(other) => {
            return Err(CliError::Config(format!(
                "overload: `{other}` is not one of halt|extended"
            )))
        }
    };
    let history = match map.remove("history").as_deref() {
        None | Some("strict") => HistoryOpt::Strict,
        Some("use_current") => HistoryOpt::UseCurrent,
        Some("back_extrapolate") => HistoryOpt::BackExtrapolate,
        Some(other) => {
            return Err(CliError::Config(format!(
                "history: `{other}` is not one of strict|use_current|back_extrapolate"
            )))
        }
    };
    let format = match map.remove("format").as_deref() {
        None | Some("csv") => OutputFormat::Csv,
        Some("json") => OutputFormat::Json,
        Some(other) => {
            return Err(CliError::Config(format!(
                "format: `{other}` is not one of csv|json"
            )))
        }
    };
    let tau_lock = take_f64(&mut map, "tau_lock")?.unwrap_or(1e-4);
    let omega_lock = take_f64(&mut map, "omega_lock")?;
    let hold_steps = take_usize(&mut map, "hold_steps")?.unwrap_or(10);
    let seed = take_u64(&mut map, "seed")?.unwrap_or(0);
    if let Some(key) = map.keys().next() {
        return Err(CliError::Config(format!("unknown key `{key}`")));
    }
    Ok(RunConfig {
        engine,
        r,
        c,
        k_vco,
        i_p,
        t_ref,
        omega_free,
        tau0,
        v0,
        steps,
        t_end,
        overload,
        history,
        tau_lock,
        omega_lock,
        hold_steps,
        seed,
        format,
    })
}
