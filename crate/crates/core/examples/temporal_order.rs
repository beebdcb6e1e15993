//! Observed order of the 5-node collocation solver on free heat decay.
//!
//! `cargo run --release --example temporal_order`

use pfasst_oc::harness::{preset, run_study};

fn main() -> pfasst_oc::Result<()> {
    let mut c = preset("heat-order").expect("shipped preset");
    c.output_dir = std::env::temp_dir().join("pfasst-oc-order");
    let (study, _) = run_study(&c)?;
    print!("{}", study.to_csv());
    if let Some(p) = study.fitted_order {
        println!("fitted order {:.3}", p);
    }
    Ok(())
}
