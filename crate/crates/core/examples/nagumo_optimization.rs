//! Dai-Yuan nonlinear CG with a strong Wolfe line search on the Nagumo
//! front-stopping problem, at a reduced resolution and iteration count.
//!
//! `cargo run --release --example nagumo_optimization [iterations]`

use pfasst_oc::harness::{preset, run_experiment};

fn main() -> pfasst_oc::Result<()> {
    let iters: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let mut c = preset("nagumo-scaling-cold").expect("shipped preset");
    c.points = vec![32, 64];
    c.nodes = vec![3, 5];
    c.optimizer.max_iters = iters;
    c.output_dir = std::env::temp_dir().join("pfasst-oc-nagumo");
    let out = run_experiment(&c)?;
    for row in out.history.iter().step_by(5) {
        println!(
            "{:>4}  J = {:.6e}  |g| = {:.3e}  error = {:.4}",
            row.iteration,
            row.objective,
            row.grad_norm,
            row.control_error.unwrap_or(f64::NAN)
        );
    }
    println!("{}", out.summary.csv_row());
    println!("files in {}", c.output_dir.display());
    Ok(())
}
