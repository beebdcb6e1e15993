//! PFASST iteration counts of the IMEX and MISDC sweeps for the Nagumo state
//! and adjoint at `u = 0`.
//!
//! `cargo run --release --example sweeper_comparison [gamma]`

use pfasst_oc::gradient::GradientEvaluator;
use pfasst_oc::harness::{build_problem, gradient_settings, preset};
use pfasst_oc::sweeper::SweeperKind;

fn main() -> pfasst_oc::Result<()> {
    let gamma: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    println!("{:<14} {:>5} {:>10} {:>10}", "sweeper", "N", "state", "adjoint");
    for n in [32, 64] {
        for kind in [SweeperKind::Imex, SweeperKind::MisdcLagged, SweeperKind::MisdcNewton] {
            let mut c = preset("nagumo-gamma1-n32-imex").expect("shipped preset");
            c.gamma = gamma;
            c.num_steps = n;
            c.sweeper = kind;
            let p = build_problem(&c)?;
            let mut ev = GradientEvaluator::new(&p, gradient_settings(&c))?;
            let s = ev.solve_state(&p.zero_control(1)?)?;
            let (_, a) = ev.adjoint_pipeline(&s)?;
            let mark = |conv: bool| if conv { "" } else { " (not converged)" };
            println!(
                "{:<14} {:>5} {:>10.2} {:>10.2}{}",
                kind.name(),
                n,
                s.report.mean_iterations(),
                a.mean_iterations(),
                mark(s.report.converged() && a.converged())
            );
        }
    }
    Ok(())
}
