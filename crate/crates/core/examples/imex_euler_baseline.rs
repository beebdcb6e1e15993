//! Sequential first-order IMEX Euler reference for the Nagumo problem.
//!
//! `cargo run --release --example imex_euler_baseline [dt] [iterations]`

use pfasst_oc::field::GridSpec;
use pfasst_oc::harness::run_imex_euler_baseline;
use pfasst_oc::optimizer::{BetaRule, OptimizerConfig};
use pfasst_oc::problems::NAGUMO_LENGTH;

fn main() -> pfasst_oc::Result<()> {
    let mut args = std::env::args().skip(1);
    let dt: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let iters: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);
    let grid = GridSpec::periodic_1d(128, NAGUMO_LENGTH)?;
    let result = run_imex_euler_baseline(grid, 1.0, 1e-6, dt, &OptimizerConfig::ncg(BetaRule::DaiYuan, iters))?;
    let last = result.history.last().expect("at least one row");
    println!(
        "dt = {}: {} iterations, J = {:.6e}, control error {:.4}, {} state steps, {}",
        dt,
        last.iteration,
        last.objective,
        last.control_error.unwrap_or(f64::NAN),
        last.state_sweeps,
        result.termination.name()
    );
    Ok(())
}
