//! Directional derivatives against central differences on both problems.
//!
//! `cargo run --release --example gradient_check`

use pfasst_oc::gradient::GradientEvaluator;
use pfasst_oc::harness::{build_problem, gradient_check, gradient_settings, preset, ExperimentConfig};

fn check(c: &ExperimentConfig) -> pfasst_oc::Result<()> {
    let p = build_problem(c)?;
    let mut ev = GradientEvaluator::new(&p, gradient_settings(c))?;
    let u = p.zero_control(c.num_workers)?;
    for row in gradient_check(&mut ev, &u, 3, 1e-3, c.seed)? {
        println!(
            "{:<7} direction {}: (g, v) = {:+.10e}  fd = {:+.10e}  rel. error {:.2e}",
            p.name(),
            row.direction,
            row.derivative,
            row.finite_difference,
            row.relative_error
        );
    }
    Ok(())
}

fn main() -> pfasst_oc::Result<()> {
    let heat = ExperimentConfig {
        atol: 1e-11,
        rtol: 1e-11,
        num_workers: 4,
        ..ExperimentConfig::default()
    };
    check(&heat)?;
    let mut nagumo = preset("nagumo-gamma1-n32-misdc_lagged").expect("shipped preset");
    nagumo.points = vec![32, 64];
    nagumo.nodes = vec![3, 5];
    check(&nagumo)
}
