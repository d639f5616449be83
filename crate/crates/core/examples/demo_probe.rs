//! Development probe: run a crafted scenario and print the coordination
//! timeline. `cargo run -p lanesim-core --example demo_probe [name] [strategy]`

use lanesim_core::config::SimConfig;
use lanesim_core::fsm::Strategy;
use lanesim_core::scenario::demo_scenario;
use lanesim_core::sim::{run, SimOptions};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("facilitator_demo");
    let strategy = match args.get(2).map(String::as_str) {
        Some("baseline") => Strategy::Baseline,
        _ => Strategy::Proposed,
    };
    let cfg = SimConfig::default();
    let scenario = demo_scenario(name, &cfg).expect("known demo");
    let opts = SimOptions::new(strategy, 25.0);
    let t0 = std::time::Instant::now();
    let result = run(&scenario, &cfg, &opts);
    let wall = t0.elapsed().as_secs_f64();

    println!("scenario {name} strategy {strategy:?} wall {wall:.1}s");
    println!("completed: {:?} at {:?}", result.platoon_completed, result.platoon_complete_time);
    println!("per-cav completions: {:?}", result.completion_times);
    println!("collisions: {}", result.collisions.len());
    println!(
        "planner: {} solves, {} failures",
        result.planner_solves, result.planner_failures
    );
    for (i, seq) in result.mode_sequences.iter().enumerate() {
        let s: Vec<&str> = seq.iter().map(|m| m.short()).collect();
        println!("cav {i}: {}", s.join(" -> "));
    }

    // Compact timeline of the platoon's states every second.
    let n_veh = result.trace.iter().map(|r| r.vehicle_id).max().unwrap_or(0) + 1;
    for row in &result.trace {
        if row.kind == "cav" && row.tick % 40 == 0 {
            println!(
                "t={:5.1} cav{} lane={} mode={} s={:7.2} e_y={:5.2} v={:5.2} a={:5.2} st={}",
                row.time_s, row.vehicle_id, row.lane, row.mode, row.s, row.e_y, row.v, row.a, row.solve_status
            );
        }
    }
    let _ = n_veh;
}
