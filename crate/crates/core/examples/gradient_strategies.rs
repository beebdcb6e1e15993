//! The three parallel gradient strategies on the heat problem: same
//! gradient, different sweep counts.
//!
//! `cargo run --release --example gradient_strategies`

use pfasst_oc::gradient::{GradientEvaluator, GradientSettings, GradientStrategy};
use pfasst_oc::optimizer::{time_norm, TimeQuadrature};
use pfasst_oc::pfasst::SolverSettings;
use pfasst_oc::problems::{heat_hierarchy, make_heat_problem};
use pfasst_oc::sweeper::SweeperKind;

fn main() -> pfasst_oc::Result<()> {
    let n = 10;
    let problem = make_heat_problem(heat_hierarchy(&[8, 16], &[3, 5], SweeperKind::Imex)?, n, 0.05, 1.0)?;
    let u = problem.zero_control(n)?;
    let solver = SolverSettings::with_tol(1e-11);

    let mut reference = None;
    for strategy in [
        GradientStrategy::SequentialReference,
        GradientStrategy::FirstStateThenAdjoint,
        GradientStrategy::Mixed,
        GradientStrategy::Simultaneous,
    ] {
        let workers = if strategy == GradientStrategy::SequentialReference { 1 } else { n };
        let mut eval = GradientEvaluator::new(&problem, GradientSettings::new(strategy, workers, solver))?;
        let e = eval.evaluate(&u)?;
        let g = e.gradient.with_workers(1)?;
        let diff = match &reference {
            None => 0.0,
            Some(r) => time_norm(&g.minus(r)?, TimeQuadrature::Collocation)? / time_norm(r, TimeQuadrature::Collocation)?,
        };
        let c = eval.counters();
        println!(
            "{:<26} J = {:.12e}  rel. diff {:.2e}  state sweeps {:>4}  adjoint sweeps {:>4}",
            strategy.name(),
            e.objective,
            diff,
            c.state_sweeps,
            c.adjoint_sweeps
        );
        reference.get_or_insert(g);
    }
    Ok(())
}
