//! Per-tick trace export: one row per (tick, vehicle), tick-major order,
//! with a header row. Values are written with shortest-round-trip float
//! formatting, so identical runs produce identical bytes.

use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRow {
    pub tick: usize,
    pub time_s: f64,
    pub vehicle_id: usize,
    pub kind: String,
    pub role: String,
    pub lane: usize,
    pub mode: String,
    pub s: f64,
    pub e_y: f64,
    pub e_psi: f64,
    pub v: f64,
    pub a: f64,
    pub delta_f: f64,
    pub slack_max: f64,
    pub solve_status: String,
    pub solve_ms: f64,
}

pub const TRACE_HEADER: &str = "tick,time_s,vehicle_id,kind,role,lane,mode,s,e_y,e_psi,v,a,delta_f,slack_max,solve_status,solve_ms";

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.tick,
            r.time_s,
            r.vehicle_id,
            r.kind,
            r.role,
            r.lane,
            r.mode,
            r.s,
            r.e_y,
            r.e_psi,
            r.v,
            r.a,
            r.delta_f,
            r.slack_max,
            r.solve_status,
            r.solve_ms
        )?;
    }
    Ok(())
}

pub fn trace_to_string(rows: &[TraceRow]) -> String {
    let mut buf = Vec::new();
    write_trace_csv(rows, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("trace rows are valid utf-8")
}
