//! A short simulation run: model A, independent censoring, both overlap
//! settings, OW against IPW for treatment 2 vs 3.
//!
//! cargo run --release --example simulation_study -- 200

use pseudoweight::sim::{run_study, Overlap, SimulationConfig};

fn main() -> pseudoweight::Result<()> {
    let reps: usize = std::env::args().nth(1).map_or(200, |s| s.parse().expect("replicates"));
    for overlap in [Overlap::Good, Overlap::Poor] {
        let config = SimulationConfig {
            overlap,
            replicates: reps,
            truth_draws: 200_000,
            ..Default::default()
        };
        let result = run_study(&config)?;
        println!("{} (N = {}, {} replicates)", config.scenario_label(), config.n, reps);
        for r in &result.rows {
            println!(
                "  {:<9} {:<4} bias {:7.4}  rmse {:7.4}  coverage {}",
                r.estimand,
                r.method,
                r.abs_bias,
                r.rmse,
                r.coverage.map_or("-".into(), |c| format!("{c:.3}"))
            );
        }
    }
    Ok(())
}
