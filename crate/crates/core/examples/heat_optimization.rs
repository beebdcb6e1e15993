//! Steepest descent on the 3-D heat problem, distributed over four workers,
//! and the distance to the manufactured optimum after every iteration.
//!
//! `cargo run --release --example heat_optimization`

use pfasst_oc::gradient::{GradientEvaluator, GradientSettings, GradientStrategy};
use pfasst_oc::optimizer::{optimize, OptimizerConfig};
use pfasst_oc::pfasst::SolverSettings;
use pfasst_oc::problems::{heat_hierarchy, make_heat_problem};
use pfasst_oc::sweeper::SweeperKind;

fn main() -> pfasst_oc::Result<()> {
    let hierarchy = heat_hierarchy(&[8, 16], &[3, 5], SweeperKind::Imex)?;
    let problem = make_heat_problem(hierarchy, 20, 0.05, 2.0)?;
    let settings = GradientSettings::new(GradientStrategy::FirstStateThenAdjoint, 4, SolverSettings::with_tol(1e-10));
    let mut eval = GradientEvaluator::new(&problem, settings)?;

    let u0 = problem.zero_control(4)?;
    let result = optimize(&u0, &mut eval, &OptimizerConfig::steepest_descent(20))?;

    println!("{:>4} {:>14} {:>12} {:>12}", "iter", "objective", "|grad|", "ctrl error");
    for row in &result.history {
        println!(
            "{:>4} {:>14.6e} {:>12.4e} {:>12.4e}",
            row.iteration,
            row.objective,
            row.grad_norm,
            row.control_error.unwrap_or(f64::NAN)
        );
    }
    let c = eval.counters();
    println!("{} state sweeps, {} adjoint sweeps, {}", c.state_sweeps, c.adjoint_sweeps, result.termination.name());
    Ok(())
}
