//! Development probe: zoom into the facilitator's lane-change episodes.

use lanesim_core::config::SimConfig;
use lanesim_core::fsm::Strategy;
use lanesim_core::scenario::demo_scenario;
use lanesim_core::sim::{run, SimOptions};

fn main() {
    let cfg = SimConfig::default();
    let scenario = demo_scenario("facilitator_demo", &cfg).expect("known demo");
    let opts = SimOptions::new(Strategy::Proposed, 8.0);
    let result = run(&scenario, &cfg, &opts);

    for row in &result.trace {
        let interesting = (row.vehicle_id == 0 && row.tick % 4 == 0)
            || (row.kind == "cav" && row.solve_status != "converged" && row.solve_status != "-");
        if interesting {
            println!(
                "t={:5.2} veh{} lane={} mode={:2} s={:7.2} e_y={:6.3} e_psi={:6.3} v={:6.3} a={:6.2} d={:6.3} st={}",
                row.time_s,
                row.vehicle_id,
                row.lane,
                row.mode,
                row.s,
                row.e_y,
                row.e_psi,
                row.v,
                row.a,
                row.delta_f,
                row.solve_status
            );
        }
    }
    for (i, seq) in result.mode_sequences.iter().enumerate() {
        let s: Vec<&str> = seq.iter().map(|m| m.short()).collect();
        println!("cav {i}: {}", s.join(" -> "));
    }
}
