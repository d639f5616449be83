//! Batch Monte-Carlo evaluation: paired runs of both strategies over seeded
//! scenario ensembles, per-run metrics, and aggregate reports.

use crate::config::SimConfig;
use crate::fsm::Strategy;
use crate::scenario::ngsim::{generate_scene, load_trajectories};
use crate::scenario::synth::{synth_scene, SynthParams};
use crate::scenario::{Scenario, ScenarioError};
use crate::sim::{run, SimOptions, SimResult};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("scenario count must be at least 1")]
    ZeroCount,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Ingest(#[from] crate::scenario::ngsim::IngestError),
}

/// Per-run outcome record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario_id: usize,
    pub seed: u64,
    pub strategy: String,
    pub platoon_completed: bool,
    /// Defined when the whole platoon completed [s].
    pub completion_time: Option<f64>,
    pub cav_completion_times: Vec<Option<f64>>,
    pub collision_count: usize,
    pub planner_failures: usize,
    pub mean_solve_ms: f64,
}

impl MetricsRecord {
    pub fn from_result(scenario_id: usize, seed: u64, strategy: Strategy, r: &SimResult) -> Self {
        MetricsRecord {
            scenario_id,
            seed,
            strategy: strategy_name(strategy).to_string(),
            platoon_completed: r.platoon_completed,
            completion_time: r.platoon_complete_time,
            cav_completion_times: r.completion_times.clone(),
            collision_count: r.collisions.len(),
            planner_failures: r.planner_failures,
            mean_solve_ms: r.mean_solve_ms(),
        }
    }
}

pub fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Baseline => "baseline",
        Strategy::Proposed => "proposed",
    }
}

/// Aggregates over the completed subset of one strategy's runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyAggregate {
    pub strategy: String,
    pub runs: usize,
    pub completions: usize,
    /// Mean over completed runs only.
    pub avg_completion_time: Option<f64>,
    pub collision_count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchReport {
    pub seed: u64,
    pub scenario_count: usize,
    pub duration_s: f64,
    pub source: String,
    pub aggregates: Vec<StrategyAggregate>,
    pub records: Vec<MetricsRecord>,
    /// Scenario ids whose generation failed, with the error text.
    pub generation_failures: Vec<(usize, String)>,
    pub config_echo: SimConfig,
}

impl BatchReport {
    pub fn aggregate_for(&self, strategy: &str) -> Option<&StrategyAggregate> {
        self.aggregates.iter().find(|a| a.strategy == strategy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<BatchReport, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Flat per-record table for plotting.
    pub fn records_csv(&self) -> String {
        let mut out = String::from(
            "scenario_id,seed,strategy,platoon_completed,completion_time_s,collisions,planner_failures,mean_solve_ms\n",
        );
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.scenario_id,
                r.seed,
                r.strategy,
                r.platoon_completed,
                r.completion_time.map_or(String::from("-"), |t| t.to_string()),
                r.collision_count,
                r.planner_failures,
                r.mean_solve_ms
            ));
        }
        out
    }
}

fn aggregate(records: &[MetricsRecord], strategy: Strategy) -> StrategyAggregate {
    let name = strategy_name(strategy);
    let mine: Vec<&MetricsRecord> = records.iter().filter(|r| r.strategy == name).collect();
    let completions = mine.iter().filter(|r| r.platoon_completed).count();
    let avg = if completions > 0 {
        Some(
            mine.iter()
                .filter_map(|r| r.completion_time)
                .sum::<f64>()
                / completions as f64,
        )
    } else {
        None
    };
    StrategyAggregate {
        strategy: name.to_string(),
        runs: mine.len(),
        completions,
        avg_completion_time: avg,
        collision_count: mine.iter().map(|r| r.collision_count).sum(),
    }
}

/// Scenario source for a batch.
#[derive(Clone, Debug)]
pub enum BatchSource {
    Synthetic(SynthParams),
    NgsimFile(PathBuf),
}

impl BatchSource {
    fn label(&self) -> String {
        match self {
            BatchSource::Synthetic(_) => "synthetic".to_string(),
            BatchSource::NgsimFile(p) => format!("ngsim:{}", p.display()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BatchOptions {
    pub count: usize,
    pub strategies: Vec<Strategy>,
    pub duration: f64,
    pub seed: u64,
    pub measure_timing: bool,
}

/// Generate `count` seeded scenarios and run every strategy on each (paired
/// design: same scenario, same seed). Scenario runs execute in parallel;
/// results are order-stable, so reports do not depend on scheduling.
pub fn run_batch(source: &BatchSource, cfg: &SimConfig, opts: &BatchOptions) -> Result<BatchReport, BatchError> {
    if opts.count == 0 {
        return Err(BatchError::ZeroCount);
    }

    // Pre-generate scenarios sequentially (dataset sampling shares one rng).
    let mut scenarios: Vec<(usize, Result<Scenario, String>)> = Vec::with_capacity(opts.count);
    match source {
        BatchSource::Synthetic(params) => {
            for i in 0..opts.count {
                let seed = opts.seed.wrapping_add(i as u64);
                let sc = synth_scene(seed, params, cfg).map_err(|e| e.to_string());
                scenarios.push((i, sc));
            }
        }
        BatchSource::NgsimFile(path) => {
            let frames = load_trajectories(path)?;
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let label = path.display().to_string();
            for i in 0..opts.count {
                let sc = generate_scene(&frames, &mut rng, cfg, &label, cfg.resample_budget)
                    .map_err(|e| e.to_string());
                scenarios.push((i, sc));
            }
        }
    }

    let jobs: Vec<(usize, &Scenario, Strategy)> = scenarios
        .iter()
        .filter_map(|(i, sc)| sc.as_ref().ok().map(|s| (*i, s)))
        .flat_map(|(i, s)| opts.strategies.iter().map(move |&st| (i, s, st)))
        .collect();

    let mut records: Vec<MetricsRecord> = jobs
        .par_iter()
        .map(|&(i, sc, strategy)| {
            let mut sim_opts = SimOptions::new(strategy, opts.duration);
            sim_opts.measure_timing = opts.measure_timing;
            let result = run(sc, cfg, &sim_opts);
            MetricsRecord::from_result(i, opts.seed.wrapping_add(i as u64), strategy, &result)
        })
        .collect();
    records.sort_by(|a, b| (a.scenario_id, &a.strategy).cmp(&(b.scenario_id, &b.strategy)));

    let aggregates = opts
        .strategies
        .iter()
        .map(|&s| aggregate(&records, s))
        .collect();

    Ok(BatchReport {
        seed: opts.seed,
        scenario_count: opts.count,
        duration_s: opts.duration,
        source: source.label(),
        aggregates,
        records,
        generation_failures: scenarios
            .iter()
            .filter_map(|(i, sc)| sc.as_ref().err().map(|e| (*i, e.clone())))
            .collect(),
        config_echo: *cfg,
    })
}
