//! Columnar text output for traces and metrics.

use std::io::Write;

use super::episode::EpisodeTrace;
use super::metrics::TrialMetrics;
use crate::error::Result;

pub const TRACE_COLUMNS: [&str; 18] = [
    "n", "uav_px", "uav_py", "uav_vx", "uav_vy", "tgt_px", "tgt_py", "tgt_vx", "tgt_vy", "est_px", "est_py", "est_vx",
    "est_vy", "u_x", "u_y", "rate", "echo_snr", "status",
];

pub const METRICS_COLUMNS: [&str; 4] = ["n", "rms_e", "rmse_p", "rmse_v"];

/// One row per slot, floats in shortest round-trip form.
pub fn write_trace_csv<W: Write>(trace: &EpisodeTrace, mut out: W) -> Result<()> {
    writeln!(out, "{}", TRACE_COLUMNS.join(","))?;
    for r in &trace.records {
        let nums = [
            r.uav.p.x,
            r.uav.p.y,
            r.uav.v.x,
            r.uav.v.y,
            r.target.p.x,
            r.target.p.y,
            r.target.v.x,
            r.target.v.y,
            r.estimate[0],
            r.estimate[1],
            r.estimate[2],
            r.estimate[3],
            r.control.x,
            r.control.y,
            r.rate,
            r.echo_snr,
        ];
        write!(out, "{}", r.n)?;
        for x in nums {
            write!(out, ",{x}")?;
        }
        writeln!(out, ",{}", r.status.as_str())?;
    }
    Ok(())
}

pub fn write_metrics_csv<W: Write>(metrics: &TrialMetrics, mut out: W) -> Result<()> {
    writeln!(out, "{}", METRICS_COLUMNS.join(","))?;
    for k in 0..metrics.slots() {
        writeln!(out, "{},{},{},{}", k + 1, metrics.rms_e[k], metrics.rmse_p[k], metrics.rmse_v[k])?;
    }
    Ok(())
}

pub fn trace_to_string(trace: &EpisodeTrace) -> Result<String> {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf)?;
    Ok(String::from_utf8(buf).expect("ASCII output"))
}
