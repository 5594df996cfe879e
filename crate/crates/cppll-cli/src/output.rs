//! Trace, summary, and waveform writers.
//!
//! Numeric CSV fields carry 17 significant digits so files re-ingest
//! losslessly. The PFD waveform format is a two-column `time,level` list of
//! step-function vertices with levels normalized to {-1, 0, +1}; plotting it
//! directly reproduces the detector output.

use crate::config::fmt_full;
use crate::engines::{EngineTrace, TraceRow};
use std::io::Write;
use std::path::Path;

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "k,tau,v,case,t_k,t_k_middle")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.k,
            fmt_full(r.tau),
            fmt_full(r.v),
            r.case,
            fmt_full(r.t_k),
            fmt_full(r.t_mid)
        )?;
    }
    f.flush()
}

pub fn write_trace_json(path: &Path, rows: &[TraceRow]) -> Result<(), crate::CliError> {
    let text = serde_json::to_string_pretty(rows)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Step-function vertices of the PFD output over the run, built from the
/// pulse timing: `[t_k, 0] [t_k, s] [t_mid, s] [t_mid, 0]` per nonzero
/// pulse, starting with the initial pulse at t = 0.
pub fn pfd_waveform(initial_tau: f64, rows: &[TraceRow]) -> Vec<(f64, f64)> {
    let mut pts = vec![(0.0, 0.0)];
    if initial_tau != 0.0 {
        let s = initial_tau.signum();
        pts.push((0.0, s));
        pts.push((initial_tau.abs(), s));
        pts.push((initial_tau.abs(), 0.0));
    }
    for r in rows {
        pts.push((r.t_k, 0.0));
        if r.tau != 0.0 {
            let s = r.tau.signum();
            pts.push((r.t_k, s));
            pts.push((r.t_mid, s));
            pts.push((r.t_mid, 0.0));
        }
    }
    pts
}

pub fn write_pfd_csv(path: &Path, points: &[(f64, f64)]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "time,level")?;
    for (t, level) in points {
        writeln!(f, "{},{}", fmt_full(*t), level)?;
    }
    f.flush()
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), crate::CliError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Per-engine file suffix for comparison outputs.
pub fn pfd_path(dir: &Path, trace: &EngineTrace) -> std::path::PathBuf {
    dir.join(format!("pfd_{}.csv", trace.engine))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waveform_vertices_match_pulse_timing() {
        let rows = vec![
            TraceRow {
                k: 1,
                tau: -0.0625,
                v: 0.375,
                case: "2".into(),
                t_k: 0.0625,
                t_mid: 0.125,
            },
            TraceRow {
                k: 2,
                tau: 0.0,
                v: 0.375,
                case: "1".into(),
                t_k: 0.25,
                t_mid: 0.25,
            },
        ];
        let pts = pfd_waveform(0.0125, &rows);
        assert_eq!(pts[0], (0.0, 0.0));
        assert_eq!(pts[1], (0.0, 1.0));
        assert_eq!(pts[2], (0.0125, 1.0));
        assert_eq!(pts[3], (0.0125, 0.0));
        assert_eq!(pts[4], (0.0625, 0.0));
        assert_eq!(pts[5], (0.0625, -1.0));
        assert_eq!(pts[6], (0.125, -1.0));
        assert_eq!(pts[7], (0.125, 0.0));
        // Zero pulse adds only the return-to-zero vertex.
        assert_eq!(pts[8], (0.25, 0.0));
        assert_eq!(pts.len(), 9);
    }
}
