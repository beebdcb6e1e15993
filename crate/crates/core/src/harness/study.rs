//! Temporal convergence of the state solver.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::field::SpatialField;
use crate::gradient::{GradientEvaluator, GradientSettings, GradientStrategy};
use crate::pfasst::SolverSettings;
use crate::problems::ProblemDefinition;

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub num_steps: usize,
    pub dt: f64,
    /// Relative error of the final state.
    pub error: f64,
    /// Order against the previous row kept in the fit.
    pub order: Option<f64>,
    /// Error at or below the floor; excluded from orders and the fit.
    pub at_floor: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of `log error` over `log dt` for rows above the floor.
    pub fitted_order: Option<f64>,
}

impl StudyResult {
    /// Smallest pairwise order above the floor.
    pub fn min_order(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.order).reduce(f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("num_steps,dt,error,observed_order,at_floor\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{},{}",
                r.num_steps,
                r.dt,
                r.error,
                r.order.map_or(String::new(), |o| format!("{:.4}", o)),
                r.at_floor
            );
        }
        s
    }
}

/// Solves the uncontrolled state equation on `build(n)` for every `n` in
/// `steps` and compares the final value with `exact_end`.
pub fn convergence_study<F>(
    build: F,
    steps: &[usize],
    exact_end: &SpatialField,
    settings: &SolverSettings,
    floor: f64,
) -> Result<StudyResult>
where
    F: Fn(usize) -> Result<ProblemDefinition>,
{
    if steps.is_empty() {
        return Err(Error::Config("empty step list".into()));
    }
    let ref_norm = exact_end.norm();
    if !(ref_norm > 0.0) {
        return Err(Error::Config("reference solution vanishes".into()));
    }
    let mut rows: Vec<StudyRow> = Vec::with_capacity(steps.len());
    for &n in steps {
        let p = build(n)?;
        let gs = GradientSettings::new(GradientStrategy::SequentialReference, 1, *settings);
        let mut ev = GradientEvaluator::new(&p, gs)?;
        let archive = ev.solve_state(&p.zero_control(1)?)?;
        let error = archive.end_value().minus(exact_end).norm() / ref_norm;
        let at_floor = !(error > floor);
        let order = match rows.iter().rev().find(|r| !r.at_floor) {
            Some(prev) if !at_floor => Some((prev.error / error).ln() / (prev.dt / p.dt).ln()),
            _ => None,
        };
        rows.push(StudyRow {
            num_steps: n,
            dt: p.dt,
            error,
            order,
            at_floor,
        });
    }
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| !r.at_floor).map(|r| (r.dt.ln(), r.error.ln())).collect();
    let fitted_order = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    Ok(StudyResult { rows, fitted_order })
}
