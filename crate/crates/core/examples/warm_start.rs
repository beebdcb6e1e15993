//! Sweep savings from warm-starting state and adjoint solves with the
//! previous optimizer iterate's trajectories.
//!
//! `cargo run --release --example warm_start`

use pfasst_oc::harness::{run_experiment, ExperimentConfig};
use pfasst_oc::optimizer::OptimizerConfig;

fn main() -> pfasst_oc::Result<()> {
    let mut totals = Vec::new();
    for warm in [false, true] {
        let c = ExperimentConfig {
            name: if warm { "warm".into() } else { "cold".into() },
            num_workers: 4,
            atol: 1e-11,
            rtol: 1e-11,
            warm,
            optimizer: OptimizerConfig::steepest_descent(20),
            output_dir: std::env::temp_dir().join("pfasst-oc-warm"),
            ..ExperimentConfig::default()
        };
        let s = run_experiment(&c)?.summary;
        println!("{:<5} state sweeps {:>6}  adjoint sweeps {:>6}  J = {:.6e}", s.name, s.state_sweeps, s.adjoint_sweeps, s.objective);
        totals.push((s.state_sweeps as f64, s.adjoint_sweeps as f64));
    }
    println!(
        "reduction: state {:.1}%, adjoint {:.1}%",
        100.0 * (1.0 - totals[1].0 / totals[0].0),
        100.0 * (1.0 - totals[1].1 / totals[0].1)
    );
    Ok(())
}
