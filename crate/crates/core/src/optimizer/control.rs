//! Time-distributed controls and the time-space inner product.

use crate::error::{Error, Result};
use crate::field::{GridSpec, SpatialField};
use crate::pfasst::TimeDecomposition;
use crate::quadrature::QuadratureRule;

/// Time quadrature used for `∫ (v(t), w(t)) dt`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TimeQuadrature {
    /// Per step trapezoid over the step-boundary values.
    #[default]
    Trapezoid,
    /// Lobatto weights over all nodes of the step.
    Collocation,
}

impl TimeQuadrature {
    pub fn name(self) -> &'static str {
        match self {
            TimeQuadrature::Trapezoid => "trapezoid",
            TimeQuadrature::Collocation => "collocation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "trapezoid" => Some(TimeQuadrature::Trapezoid),
            "collocation" => Some(TimeQuadrature::Collocation),
            _ => None,
        }
    }

    /// Weights over the nodes of one step of length `dt`.
    pub fn step_weights(self, num_nodes: usize, dt: f64) -> Result<Vec<f64>> {
        match self {
            TimeQuadrature::Trapezoid => {
                if num_nodes < 2 {
                    return Err(Error::NodeCount(num_nodes));
                }
                let mut w = vec![0.0; num_nodes];
                w[0] = 0.5 * dt;
                w[num_nodes - 1] = 0.5 * dt;
                Ok(w)
            }
            TimeQuadrature::Collocation => {
                let rule = QuadratureRule::lobatto(num_nodes)?;
                Ok(rule.weights().iter().map(|w| w * dt).collect())
            }
        }
    }
}

/// Field values at every fine node of every step.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlTrajectory {
    dec: TimeDecomposition,
    steps: Vec<Vec<SpatialField>>,
}

impl ControlTrajectory {
    pub fn new(dec: TimeDecomposition, steps: Vec<Vec<SpatialField>>) -> Result<Self> {
        if steps.len() != dec.num_steps {
            return Err(Error::Decomposition(format!(
                "{} steps of data for {} time steps",
                steps.len(),
                dec.num_steps
            )));
        }
        let m = steps[0].len();
        let grid = steps[0].first().map(|f| *f.grid()).ok_or(Error::NodeCount(0))?;
        for s in &steps {
            if s.len() != m {
                return Err(Error::Decomposition("node count varies between steps".into()));
            }
            if s.iter().any(|f| *f.grid() != grid) {
                return Err(Error::GridMismatch("control grids differ".into()));
            }
        }
        Ok(Self { dec, steps })
    }

    pub fn zeros(dec: TimeDecomposition, grid: GridSpec, num_nodes: usize) -> Self {
        let steps = vec![vec![SpatialField::zeros(grid); num_nodes]; dec.num_steps];
        Self { dec, steps }
    }

    /// Samples `f(t, x)` at the nodes of `rule`. Step `j` is sampled on its
    /// own interval, so a function with a jump at a step boundary keeps the
    /// left value at the end of step `j - 1` and the right value at the start
    /// of step `j` when `f` distinguishes them through `step`.
    pub fn from_fn<F>(dec: TimeDecomposition, grid: GridSpec, rule: &QuadratureRule, f: F) -> Self
    where
        F: Fn(usize, f64, [f64; 3]) -> f64,
    {
        let steps = (0..dec.num_steps)
            .map(|j| {
                rule.nodes()
                    .iter()
                    .map(|tau| {
                        let t = (j as f64 + tau) * dec.dt;
                        SpatialField::from_fn(grid, |x| f(j, t, x))
                    })
                    .collect()
            })
            .collect();
        Self { dec, steps }
    }

    pub fn decomposition(&self) -> &TimeDecomposition {
        &self.dec
    }

    /// Same data, reductions done as if distributed over `num_workers`.
    pub fn with_workers(&self, num_workers: usize) -> Result<Self> {
        Ok(Self {
            dec: self.dec.with_workers(num_workers)?,
            steps: self.steps.clone(),
        })
    }

    pub fn steps(&self) -> &[Vec<SpatialField>] {
        &self.steps
    }

    pub fn step(&self, j: usize) -> &[SpatialField] {
        &self.steps[j]
    }

    pub fn into_steps(self) -> Vec<Vec<SpatialField>> {
        self.steps
    }

    pub fn num_nodes(&self) -> usize {
        self.steps[0].len()
    }

    pub fn grid(&self) -> &GridSpec {
        self.steps[0][0].grid()
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dec.num_steps != other.dec.num_steps || self.dec.dt != other.dec.dt {
            return Err(Error::Decomposition("time decompositions differ".into()));
        }
        if self.num_nodes() != other.num_nodes() {
            return Err(Error::Decomposition("node counts differ".into()));
        }
        if self.grid() != other.grid() {
            return Err(Error::GridMismatch("control grids differ".into()));
        }
        Ok(())
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Self) -> Result<()> {
        self.check_compatible(x)?;
        for (s, xs) in self.steps.iter_mut().zip(&x.steps) {
            for (f, xf) in s.iter_mut().zip(xs) {
                f.axpy(a, xf);
            }
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.steps {
            for f in s {
                f.scale(a);
            }
        }
        out
    }

    pub fn minus(&self, x: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, x)?;
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.steps.iter().flatten().all(|f| f.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.steps.iter().flatten().map(|f| f.max_abs()).fold(0.0, f64::max)
    }
}

/// Sum of per-step contributions, grouped by owning worker and reduced in
/// worker order, so the result depends on the decomposition only through
/// that order.
pub fn reduce_by_worker<F>(dec: &TimeDecomposition, mut step_value: F) -> Result<f64>
where
    F: FnMut(usize) -> Result<f64>,
{
    let mut partials = Vec::with_capacity(dec.num_workers);
    for w in 0..dec.num_workers {
        let mut s = 0.0;
        for j in dec.steps_of(w) {
            s += step_value(j)?;
        }
        partials.push(s);
    }
    Ok(partials.iter().sum())
}

/// Trapezoidal `(v, w) = Σ_j ∫ (v(t), w(t)) dt`.
pub fn time_inner(v: &ControlTrajectory, w: &ControlTrajectory) -> Result<f64> {
    time_inner_with(v, w, TimeQuadrature::Trapezoid)
}

pub fn time_inner_with(v: &ControlTrajectory, w: &ControlTrajectory, quad: TimeQuadrature) -> Result<f64> {
    v.check_compatible(w)?;
    let weights = quad.step_weights(v.num_nodes(), v.dec.dt)?;
    reduce_by_worker(&v.dec, |j| {
        let mut s = 0.0;
        for (m, &wm) in weights.iter().enumerate() {
            if wm != 0.0 {
                s += wm * v.steps[j][m].inner(&w.steps[j][m])?;
            }
        }
        Ok(s)
    })
}

pub fn time_norm(v: &ControlTrajectory, quad: TimeQuadrature) -> Result<f64> {
    Ok(time_inner_with(v, v, quad)?.max(0.0).sqrt())
}
