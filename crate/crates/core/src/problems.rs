//! Benchmark control problems: 3-D heat with a known optimum and 1-D Nagumo
//! tracking of a frozen front.
//!
//! Both are posed as `y_t = κΔy − R(y) + u` with tracking objective
//! `J = ½∫‖y − y_d‖² + λ/2 ∫‖u‖² + σ/2 ‖y(T) − y_d^T‖²`. The adjoint runs in
//! reflected time `s = T − t` as `p_s = κΔp − R'(ȳ) p − (ȳ − y_d)` with
//! initial value `−σ(y(T) − y_d^T)`, and the reduced gradient is `λu − p`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::Snapshot;
use crate::field::{sine_product, Basis, GridSpec, SpatialField};
use crate::optimizer::control::{reduce_by_worker, time_norm, ControlTrajectory, TimeQuadrature};
use crate::pfasst::{sequential_solve, Hierarchy, PipelineProblem, SolverSettings, TimeDecomposition};
use crate::sweeper::{Reaction, RhsSplit, StepForcing, SweeperKind};

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveSpec {
    pub lambda: f64,
    pub sigma: f64,
    /// Tracking target at every fine node of every step.
    pub target: Vec<Vec<SpatialField>>,
    pub terminal_target: Option<SpatialField>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProblemKind {
    Heat,
    Nagumo { gamma: f64 },
}

/// Initial value for the heat problem.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HeatInitial {
    /// `y*(0)` of the manufactured optimum.
    #[default]
    Consistent,
    /// `(1 − T)/(ωλ) · S`, as printed in the original problem statement. It
    /// does not match the manufactured optimum, so no exact solution is
    /// attached when it is used.
    Published,
}

#[derive(Clone, Debug)]
pub struct ProblemDefinition {
    pub kind: ProblemKind,
    pub hierarchy: Hierarchy,
    pub rhs: RhsSplit,
    pub objective: ObjectiveSpec,
    pub y0: SpatialField,
    pub num_steps: usize,
    pub dt: f64,
    pub exact_control: Option<ControlTrajectory>,
    pub exact_state: Option<Vec<Vec<SpatialField>>>,
    pub exact_adjoint: Option<Vec<Vec<SpatialField>>>,
}

impl ProblemDefinition {
    pub fn name(&self) -> &'static str {
        match self.kind {
            ProblemKind::Heat => "heat",
            ProblemKind::Nagumo { .. } => "nagumo",
        }
    }

    pub fn end_time(&self) -> f64 {
        self.num_steps as f64 * self.dt
    }

    pub fn grid(&self) -> &GridSpec {
        &self.hierarchy.finest().grid
    }

    pub fn num_nodes(&self) -> usize {
        self.hierarchy.finest().rule.num_nodes()
    }

    pub fn node_time(&self, step: usize, m: usize) -> f64 {
        (step as f64 + self.hierarchy.finest().rule.nodes()[m]) * self.dt
    }

    pub fn decomposition(&self, num_workers: usize) -> Result<TimeDecomposition> {
        TimeDecomposition::new(self.num_steps, num_workers, self.dt)
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.rhs.reaction, Reaction::None)
    }

    pub fn zero_control(&self, num_workers: usize) -> Result<ControlTrajectory> {
        Ok(ControlTrajectory::zeros(self.decomposition(num_workers)?, *self.grid(), self.num_nodes()))
    }

    /// Right-hand side of the adjoint in reflected time.
    pub fn adjoint_rhs(&self) -> RhsSplit {
        match self.rhs.reaction {
            Reaction::None => RhsSplit {
                kappa: self.rhs.kappa,
                shift: self.rhs.shift,
                reaction: Reaction::None,
            },
            _ => RhsSplit {
                shift: self.rhs.shift,
                ..RhsSplit::linear_coefficient(self.rhs.kappa)
            },
        }
    }

    fn check_control(&self, u: &ControlTrajectory) -> Result<()> {
        let d = u.decomposition();
        if d.num_steps != self.num_steps || d.dt != self.dt || u.num_nodes() != self.num_nodes() {
            return Err(Error::Problem("control does not match the problem's time grid".into()));
        }
        if u.grid() != self.grid() {
            return Err(Error::GridMismatch("control grids differ".into()));
        }
        Ok(())
    }

    fn check_state(&self, state: &[Vec<SpatialField>]) -> Result<()> {
        if state.len() != self.num_steps || state.iter().any(|s| s.len() != self.num_nodes()) {
            return Err(Error::Problem(format!(
                "state archive has {} steps, need {} steps of {} nodes",
                state.len(),
                self.num_steps,
                self.num_nodes()
            )));
        }
        Ok(())
    }

    /// State forcing per step: the control as a source at the fine nodes.
    pub fn state_forcing(&self, u: &ControlTrajectory) -> Result<Vec<StepForcing>> {
        self.check_control(u)?;
        Ok(u.steps().iter().map(|s| StepForcing::with_source(s.clone())).collect())
    }

    /// Adjoint forcing for state step `j`, on the reflected nodes: node `m`
    /// of the reflected step sits at state node `M − m`.
    pub fn adjoint_step_forcing(&self, j: usize, state: &[SpatialField]) -> Result<StepForcing> {
        let last = self.num_nodes() - 1;
        let target = &self.objective.target[j];
        let mut source = Vec::with_capacity(last + 1);
        let mut coeff = Vec::new();
        for m in 0..=last {
            let y = &state[last - m];
            source.push(target[last - m].minus(y));
            if let ProblemKind::Nagumo { gamma } = self.kind {
                coeff.push(y.map(|v| gamma * v * v - 1.0));
            }
        }
        Ok(StepForcing {
            source: Some(source),
            coeff: if coeff.is_empty() { None } else { Some(coeff) },
        })
    }

    /// Adjoint forcing for every reflected step `r = N − 1 − j`.
    pub fn adjoint_forcing(&self, state: &[Vec<SpatialField>]) -> Result<Vec<StepForcing>> {
        self.check_state(state)?;
        (0..self.num_steps)
            .rev()
            .map(|j| self.adjoint_step_forcing(j, &state[j]))
            .collect()
    }

    /// `p(T) = −σ (y(T) − y_d^T)`.
    pub fn adjoint_initial(&self, y_end: &SpatialField) -> Result<SpatialField> {
        if self.objective.sigma == 0.0 {
            return Ok(SpatialField::zeros(*y_end.grid()));
        }
        let yt = self
            .objective
            .terminal_target
            .as_ref()
            .ok_or_else(|| Error::Problem("terminal weight set without terminal target".into()))?;
        Ok(y_end.minus(yt).scaled(-self.objective.sigma))
    }

    /// `J` with the given time quadrature; per-step contributions are summed
    /// per owning worker of `u`'s decomposition and reduced in worker order.
    pub fn objective_value(&self, state: &[Vec<SpatialField>], u: &ControlTrajectory, quad: TimeQuadrature) -> Result<f64> {
        self.check_state(state)?;
        self.check_control(u)?;
        let weights = quad.step_weights(self.num_nodes(), self.dt)?;
        let lambda = self.objective.lambda;
        let mut j = reduce_by_worker(u.decomposition(), |step| {
            let mut s = 0.0;
            for (m, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let e = state[step][m].minus(&self.objective.target[step][m]);
                let c = &u.step(step)[m];
                s += w * (0.5 * e.inner(&e)? + 0.5 * lambda * c.inner(c)?);
            }
            Ok(s)
        })?;
        if self.objective.sigma > 0.0 {
            let yt = self
                .objective
                .terminal_target
                .as_ref()
                .ok_or_else(|| Error::Problem("terminal weight set without terminal target".into()))?;
            let e = state[self.num_steps - 1][self.num_nodes() - 1].minus(yt);
            j += 0.5 * self.objective.sigma * e.inner(&e)?;
        }
        Ok(j)
    }

    /// `λu − p` at every node; `adjoint` is indexed by state step and node.
    pub fn gradient(&self, u: &ControlTrajectory, adjoint: &[Vec<SpatialField>]) -> Result<ControlTrajectory> {
        self.check_control(u)?;
        self.check_state(adjoint)?;
        let steps = u
            .steps()
            .iter()
            .zip(adjoint)
            .map(|(us, ps)| us.iter().zip(ps).map(|(c, p)| c.scaled(self.objective.lambda).minus(p)).collect())
            .collect();
        ControlTrajectory::new(*u.decomposition(), steps)
    }

    /// Relative `L2(0, T; L2)` distance to the exact control, if one is known.
    pub fn control_error(&self, u: &ControlTrajectory, quad: TimeQuadrature) -> Result<Option<f64>> {
        let Some(exact) = &self.exact_control else {
            return Ok(None);
        };
        let exact = exact.with_workers(u.decomposition().num_workers)?;
        let e = u.minus(&exact)?;
        Ok(Some(time_norm(&e, quad)? / time_norm(&exact, quad)?))
    }
}

/// `ω = 12π²`, so that `ΔS = −ωS` for `S = ∏ sin(2πx_i)` on the unit cube.
pub const HEAT_OMEGA: f64 = 12.0 * PI * PI;

fn heat_state_coeff(t: f64, t_end: f64, lambda: f64) -> f64 {
    let w = HEAT_OMEGA;
    (t - t_end) / (w * lambda) - 1.0 / (w * w * lambda)
}

fn heat_target_coeff(t: f64, t_end: f64, lambda: f64) -> f64 {
    let w = HEAT_OMEGA;
    (w + 1.0 / (w * lambda)) * (t - t_end) - (1.0 + 1.0 / (w * w * lambda))
}

/// 3-D periodic heat problem on the unit cube with consistent initial value.
pub fn make_heat_problem(hierarchy: Hierarchy, num_steps: usize, lambda: f64, t_end: f64) -> Result<ProblemDefinition> {
    make_heat_problem_with(hierarchy, num_steps, lambda, t_end, HeatInitial::Consistent)
}

pub fn make_heat_problem_with(
    hierarchy: Hierarchy,
    num_steps: usize,
    lambda: f64,
    t_end: f64,
    initial: HeatInitial,
) -> Result<ProblemDefinition> {
    if !(lambda > 0.0) || !(t_end > 0.0) || num_steps == 0 {
        return Err(Error::Problem(format!(
            "heat problem needs lambda > 0, T > 0 and at least one step (got {}, {}, {})",
            lambda, t_end, num_steps
        )));
    }
    let grid = hierarchy.finest().grid;
    for l in hierarchy.levels() {
        let g = &l.grid;
        if g.basis() != Basis::Periodic || g.dims() != 3 || g.extents().iter().any(|&e| e != 1.0) {
            return Err(Error::Problem("heat problem needs periodic 3-D unit-cube grids".into()));
        }
    }
    let dt = t_end / num_steps as f64;
    let nodes = hierarchy.finest().rule.nodes().to_vec();
    let shape = SpatialField::from_fn(grid, |x| sine_product(x, 3));
    let at_nodes = |coef: &dyn Fn(f64) -> f64| -> Vec<Vec<SpatialField>> {
        (0..num_steps)
            .map(|j| nodes.iter().map(|tau| shape.scaled(coef((j as f64 + tau) * dt))).collect())
            .collect()
    };
    let target = at_nodes(&|t| heat_target_coeff(t, t_end, lambda));
    let y0 = match initial {
        HeatInitial::Consistent => shape.scaled(heat_state_coeff(0.0, t_end, lambda)),
        HeatInitial::Published => shape.scaled((1.0 - t_end) / (HEAT_OMEGA * lambda)),
    };
    let (exact_control, exact_state, exact_adjoint) = match initial {
        HeatInitial::Consistent => {
            let dec = TimeDecomposition::new(num_steps, 1, dt)?;
            let u = ControlTrajectory::new(dec, at_nodes(&|t| -(t_end - t) / lambda))?;
            (
                Some(u),
                Some(at_nodes(&|t| heat_state_coeff(t, t_end, lambda))),
                Some(at_nodes(&|t| -(t_end - t))),
            )
        }
        HeatInitial::Published => (None, None, None),
    };
    Ok(ProblemDefinition {
        kind: ProblemKind::Heat,
        hierarchy,
        rhs: RhsSplit::diffusion(1.0),
        objective: ObjectiveSpec {
            lambda,
            sigma: 0.0,
            target,
            terminal_target: None,
        },
        y0,
        num_steps,
        dt,
        exact_control,
        exact_state,
        exact_adjoint,
    })
}

pub const NAGUMO_LENGTH: f64 = 20.0;
pub const NAGUMO_END_TIME: f64 = 5.0;
pub const NAGUMO_FREEZE_TIME: f64 = 2.5;

/// Front initial value `1.2√3` for `x ≤ 9`, zero beyond, sampled at the
/// grid points.
pub fn nagumo_initial(grid: GridSpec) -> SpatialField {
    let h = 1.2 * 3f64.sqrt();
    SpatialField::from_fn(grid, |x| if x[0] <= 9.0 { h } else { 0.0 })
}

fn check_nagumo_grids(hierarchy: &Hierarchy) -> Result<()> {
    for l in hierarchy.levels() {
        let g = &l.grid;
        if g.basis() != hierarchy.finest().grid.basis() || g.dims() != 1 || g.extents()[0] != NAGUMO_LENGTH {
            return Err(Error::Problem(format!(
                "Nagumo problem needs 1-D grids with one basis on (0, {})",
                NAGUMO_LENGTH
            )));
        }
    }
    Ok(())
}

fn freeze_step(num_steps: usize) -> Result<usize> {
    let s = NAGUMO_FREEZE_TIME / NAGUMO_END_TIME * num_steps as f64;
    if (s - s.round()).abs() > 1e-9 {
        return Err(Error::Problem(format!(
            "t = {} is not a step boundary with {} steps",
            NAGUMO_FREEZE_TIME, num_steps
        )));
    }
    Ok(s.round() as usize)
}

/// Uncontrolled Nagumo evolution at every fine node.
#[derive(Clone, Debug, PartialEq)]
pub struct NaturalEvolution {
    pub gamma: f64,
    pub dt: f64,
    pub nodes: Vec<Vec<SpatialField>>,
}

impl NaturalEvolution {
    /// Solves the uncontrolled state equation on `hierarchy` (finest level
    /// defines the discretization) with sequential MLSDC. The collocation
    /// solution does not depend on the sweeper, so Newton MISDC is used for
    /// robustness.
    pub fn compute(hierarchy: &Hierarchy, num_steps: usize, gamma: f64, settings: &SolverSettings) -> Result<Self> {
        check_nagumo_grids(hierarchy)?;
        freeze_step(num_steps)?;
        let h = hierarchy.with_kind(SweeperKind::MisdcNewton);
        let y0 = nagumo_initial(h.finest().grid);
        let rhs = RhsSplit::nagumo(1.0, gamma);
        let forcing = vec![StepForcing::none(); num_steps];
        let dt = NAGUMO_END_TIME / num_steps as f64;
        let p = PipelineProblem {
            hierarchy: &h,
            rhs: &rhs,
            initial: &y0,
            forcing: &forcing,
            warm: None,
        };
        let (trajs, report) = sequential_solve(&p, num_steps, dt, settings)?;
        if !report.converged() {
            return Err(Error::Problem(format!(
                "uncontrolled Nagumo solve did not converge (max residual {:e})",
                report.max_residual()
            )));
        }
        Ok(Self {
            gamma,
            dt,
            nodes: trajs.into_iter().map(|t| t.y).collect(),
        })
    }

    pub fn num_steps(&self) -> usize {
        self.nodes.len()
    }

    /// `y_nat(·, 2.5)`.
    pub fn frozen(&self) -> Result<&SpatialField> {
        let j = freeze_step(self.num_steps())?;
        Ok(self.nodes[j - 1].last().expect("steps have nodes"))
    }

    /// One record per node time, step-major.
    pub fn to_snapshot(&self) -> Snapshot {
        let m = self.nodes[0].len();
        let rule = crate::quadrature::QuadratureRule::lobatto(m).expect("node count came from a rule");
        let mut records = Vec::new();
        for (j, s) in self.nodes.iter().enumerate() {
            for (f, tau) in s.iter().zip(rule.nodes()) {
                records.push(((j as f64 + tau) * self.dt, f.clone()));
            }
        }
        Snapshot {
            metadata: format!("kind=y_nat\ngamma={}\nsteps={}\nnodes={}\n", self.gamma, self.num_steps(), m),
            records,
        }
    }

    pub fn from_snapshot(snap: &Snapshot) -> Result<Self> {
        let mut gamma = None;
        let mut steps = None;
        let mut nodes = None;
        for line in snap.metadata.lines() {
            let bad = || Error::Format(format!("bad metadata line '{}'", line));
            match line.split_once('=') {
                Some(("gamma", v)) => gamma = Some(v.parse::<f64>().map_err(|_| bad())?),
                Some(("steps", v)) => steps = Some(v.parse::<usize>().map_err(|_| bad())?),
                Some(("nodes", v)) => nodes = Some(v.parse::<usize>().map_err(|_| bad())?),
                _ => {}
            }
        }
        let (Some(gamma), Some(n), Some(m)) = (gamma, steps, nodes) else {
            return Err(Error::Format("snapshot is not a y_nat cache".into()));
        };
        if n == 0 || m < 2 || snap.records.len() != n * m {
            return Err(Error::Format(format!(
                "expected {} records, found {}",
                n * m,
                snap.records.len()
            )));
        }
        let dt = NAGUMO_END_TIME / n as f64;
        let nodes = snap.records.chunks(m).map(|c| c.iter().map(|(_, f)| f.clone()).collect()).collect();
        Ok(Self { gamma, dt, nodes })
    }
}

/// `R(y) − κ Δy` with `R(y) = γ/3 y³ − y`: the source that keeps `y` steady.
pub fn nagumo_steady_source(y: &SpatialField, gamma: f64) -> SpatialField {
    y.map(|v| gamma / 3.0 * v * v * v - v).minus(&y.laplacian())
}

/// 1-D Nagumo tracking problem on (0, 20) × (0, 5). The target follows the
/// uncontrolled evolution up to `t = 2.5` and freezes it afterwards; the
/// control that achieves this exactly is attached as the reference control.
pub fn make_nagumo_problem(
    hierarchy: Hierarchy,
    num_steps: usize,
    gamma: f64,
    lambda: f64,
    y_nat: &NaturalEvolution,
) -> Result<ProblemDefinition> {
    check_nagumo_grids(&hierarchy)?;
    if !(lambda >= 0.0) {
        return Err(Error::Problem(format!("lambda {} must be non-negative", lambda)));
    }
    let fine = hierarchy.finest();
    if y_nat.num_steps() != num_steps
        || y_nat.gamma != gamma
        || y_nat.nodes[0].len() != fine.rule.num_nodes()
        || y_nat.nodes[0][0].grid() != &fine.grid
    {
        return Err(Error::Problem("y_nat was computed for a different discretization".into()));
    }
    let js = freeze_step(num_steps)?;
    let frozen = y_nat.frozen()?.clone();
    let m = fine.rule.num_nodes();
    let target: Vec<Vec<SpatialField>> = (0..num_steps)
        .map(|j| if j < js { y_nat.nodes[j].clone() } else { vec![frozen.clone(); m] })
        .collect();
    let steady = nagumo_steady_source(&frozen, gamma);
    let zero = SpatialField::zeros(fine.grid);
    let dt = NAGUMO_END_TIME / num_steps as f64;
    // The control jumps at t = 2.5; each step uses its own one-sided value.
    let u_exact: Vec<Vec<SpatialField>> = (0..num_steps)
        .map(|j| vec![if j < js { zero.clone() } else { steady.clone() }; m])
        .collect();
    Ok(ProblemDefinition {
        kind: ProblemKind::Nagumo { gamma },
        y0: nagumo_initial(fine.grid),
        hierarchy,
        rhs: RhsSplit::nagumo(1.0, gamma),
        objective: ObjectiveSpec {
            lambda,
            sigma: 0.0,
            target: target.clone(),
            terminal_target: None,
        },
        num_steps,
        dt,
        exact_control: Some(ControlTrajectory::new(TimeDecomposition::new(num_steps, 1, dt)?, u_exact)?),
        exact_state: Some(target),
        exact_adjoint: None,
    })
}

/// Standard Nagumo level set: cosine (Neumann) grids with the given point
/// counts.
pub fn nagumo_hierarchy(points: &[usize], nodes: &[usize], kind: SweeperKind) -> Result<Hierarchy> {
    nagumo_hierarchy_with(points, nodes, kind, Basis::Cosine)
}

/// Nagumo level set with an explicit basis; `Basis::Periodic` gives the
/// periodic variant of the problem.
pub fn nagumo_hierarchy_with(points: &[usize], nodes: &[usize], kind: SweeperKind, basis: Basis) -> Result<Hierarchy> {
    let n = *points.last().ok_or(Error::Hierarchy("no levels".into()))?;
    let base = GridSpec::new(&[n], &[NAGUMO_LENGTH], basis)?;
    Hierarchy::uniform(&base, points, nodes, kind)
}

/// Standard heat level set: periodic unit-cube grids with the given point
/// counts per dimension.
pub fn heat_hierarchy(points: &[usize], nodes: &[usize], kind: SweeperKind) -> Result<Hierarchy> {
    let base = GridSpec::periodic_3d(*points.last().ok_or(Error::Hierarchy("no levels".into()))?, 1.0)?;
    Hierarchy::uniform(&base, points, nodes, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{read_snapshot, write_snapshot};
    use crate::pfasst::pfasst_solve;

    fn small_heat(initial: HeatInitial) -> ProblemDefinition {
        let h = heat_hierarchy(&[4, 8], &[3, 5], SweeperKind::Imex).unwrap();
        make_heat_problem_with(h, 4, 0.05, 2.0, initial).unwrap()
    }

    #[test]
    fn heat_initial_values() {
        let p = small_heat(HeatInitial::Published);
        let g = *p.grid();
        // grid point (2, 2, 2) of 8³ is x = (0.25, 0.25, 0.25)
        let idx = 2 + 8 * (2 + 8 * 2);
        assert_eq!(g.coordinate(idx), [0.25, 0.25, 0.25]);
        let published = -1.0 / (0.6 * PI * PI);
        assert!((p.y0.values()[idx] - published).abs() < 1e-12);
        assert!((published + 0.16887).abs() < 1e-5);

        let p = small_heat(HeatInitial::Consistent);
        let w = 12.0 * PI * PI;
        let consistent = -2.0 / (w * 0.05) - 1.0 / (w * w * 0.05);
        assert!((p.y0.values()[idx] - consistent).abs() < 1e-12);
        assert!(p.exact_control.is_some());
    }

    #[test]
    fn heat_exact_control_vanishes_at_end() {
        let p = small_heat(HeatInitial::Consistent);
        let u = p.exact_control.as_ref().unwrap();
        assert!(u.step(3).last().unwrap().max_abs() < 1e-12);
        assert!(u.step(0)[0].max_abs() > 1.0);
    }

    #[test]
    fn heat_manufactured_solution_satisfies_both_equations() {
        let p = small_heat(HeatInitial::Consistent);
        let (lambda, t_end) = (0.05, 2.0);
        let g = *p.grid();
        let s = SpatialField::from_fn(g, |x| sine_product(x, 3));
        for &t in &[0.0, 0.3, 1.7, 2.0] {
            // y*_t − Δy* − u* with y*_t = S/(ωλ) and u* = −(T − t)S/λ
            let y = s.scaled(heat_state_coeff(t, t_end, lambda));
            let u = s.scaled(-(t_end - t) / lambda);
            let res = s.scaled(1.0 / (HEAT_OMEGA * lambda)).minus(&y.laplacian()).minus(&u);
            assert!(res.max_abs() < 1e-10, "state residual {}", res.max_abs());
            // −p_t − Δp + (y − y_d) with p = −(T − t)S
            let pt = s.clone();
            let pf = s.scaled(-(t_end - t));
            let yd = s.scaled(heat_target_coeff(t, t_end, lambda));
            let res = pt.scaled(-1.0).minus(&pf.laplacian()).plus(&y.minus(&yd));
            assert!(res.max_abs() < 1e-9, "adjoint residual {}", res.max_abs());
            // optimality: λu − p = 0
            assert!(u.scaled(lambda).minus(&pf).max_abs() < 1e-12);
        }
    }

    #[test]
    fn objective_of_constant_misfit() {
        let h = heat_hierarchy(&[4], &[3], SweeperKind::Imex).unwrap();
        let p = make_heat_problem(h, 4, 0.05, 2.0).unwrap();
        let state: Vec<Vec<SpatialField>> = p
            .objective
            .target
            .iter()
            .map(|s| s.iter().map(|f| f.map(|v| v + 1.0)).collect())
            .collect();
        let u = p.zero_control(1).unwrap();
        for q in [TimeQuadrature::Trapezoid, TimeQuadrature::Collocation] {
            assert!((p.objective_value(&state, &u, q).unwrap() - 1.0).abs() < 1e-13);
            assert_eq!(p.objective_value(&p.objective.target, &u, q).unwrap(), 0.0);
        }
    }

    #[test]
    fn gradient_and_adjoint_forcing_layout() {
        let p = small_heat(HeatInitial::Consistent);
        let u = p.exact_control.clone().unwrap();
        let grad = p.gradient(&u, p.exact_adjoint.as_ref().unwrap()).unwrap();
        assert!(grad.max_abs() < 1e-12);
        let state = p.exact_state.clone().unwrap();
        let f = p.adjoint_forcing(&state).unwrap();
        // reflected step 0, node 0 is state step N − 1, node M
        let src = f[0].source(0).unwrap();
        let expect = p.objective.target[3][4].minus(&state[3][4]);
        assert_eq!(src, &expect);
        assert!(f[0].coeff.is_none());
        assert_eq!(p.adjoint_initial(&state[3][4]).unwrap().max_abs(), 0.0);
    }

    fn small_nagumo() -> (Hierarchy, NaturalEvolution) {
        let h = nagumo_hierarchy(&[32, 64], &[3, 5], SweeperKind::MisdcLagged).unwrap();
        let y = NaturalEvolution::compute(&h, 16, 1.0, &SolverSettings::with_tol(1e-12)).unwrap();
        (h, y)
    }

    #[test]
    fn nagumo_initial_profile() {
        let g = GridSpec::cosine_1d(40, 20.0).unwrap();
        let y0 = nagumo_initial(g);
        // cell-centred points: x = 5 is between points 9 and 10, use x = 4.75 and 15.25
        assert!((y0.values()[9] - 1.2 * 3f64.sqrt()).abs() < 1e-15);
        assert!((1.2 * 3f64.sqrt() - 2.0785).abs() < 1e-4);
        assert_eq!(y0.values()[30], 0.0);
    }

    #[test]
    fn nagumo_targets_and_exact_control() {
        let (h, y_nat) = small_nagumo();
        assert_eq!(y_nat.nodes[0][0], nagumo_initial(h.finest().grid));
        assert!(y_nat.nodes.iter().flatten().all(|f| f.max_abs() <= 1.2 * 3f64.sqrt() * 1.05));
        let p = make_nagumo_problem(h.clone(), 16, 1.0, 1e-6, &y_nat).unwrap();
        // uncontrolled state tracks the target exactly before the freeze
        let u0 = p.zero_control(1).unwrap();
        let j0 = p.objective_value(&y_nat.nodes, &u0, TimeQuadrature::Trapezoid).unwrap();
        let tail: f64 = (8..16)
            .map(|j| {
                let a = y_nat.nodes[j][0].minus(&p.objective.target[j][0]);
                let b = y_nat.nodes[j][4].minus(&p.objective.target[j][4]);
                0.25 * p.dt * (a.inner(&a).unwrap() + b.inner(&b).unwrap())
            })
            .sum();
        assert!((j0 - tail).abs() <= 1e-12 * j0.max(1.0));

        // the reference control freezes the state after t = 2.5
        let u = p.exact_control.clone().unwrap();
        let forcing = p.state_forcing(&u).unwrap();
        let pp = PipelineProblem {
            hierarchy: &p.hierarchy,
            rhs: &p.rhs,
            initial: &p.y0,
            forcing: &forcing,
            warm: None,
        };
        let dec = p.decomposition(1).unwrap();
        let (trajs, rep) = pfasst_solve(&pp, &dec, &SolverSettings::with_tol(1e-12)).unwrap();
        assert!(rep.converged());
        let frozen = y_nat.frozen().unwrap();
        for t in &trajs[8..] {
            for y in &t.y {
                assert!(y.minus(frozen).norm() < 1e-6);
            }
        }
        assert!(p.gradient(&u0, &vec![vec![SpatialField::zeros(*p.grid()); 5]; 16]).is_ok());
    }

    #[test]
    fn nagumo_adjoint_coefficient() {
        let (h, y_nat) = small_nagumo();
        let p = make_nagumo_problem(h, 16, 1.0, 1e-6, &y_nat).unwrap();
        let f = p.adjoint_forcing(&y_nat.nodes).unwrap();
        let y = &y_nat.nodes[15][4];
        let c = f[0].coeff(0).unwrap();
        for (cv, yv) in c.values().iter().zip(y.values()) {
            assert!((cv - (yv * yv - 1.0)).abs() < 1e-15);
        }
        assert!(matches!(p.adjoint_rhs().reaction, Reaction::Linear));
    }

    #[test]
    fn y_nat_snapshot_round_trip() {
        let (h, y_nat) = small_nagumo();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &y_nat.to_snapshot()).unwrap();
        let back = NaturalEvolution::from_snapshot(&read_snapshot(buf.as_slice()).unwrap()).unwrap();
        assert_eq!(back, y_nat);
        assert!(make_nagumo_problem(h, 16, 2.0, 1e-6, &back).is_err());
    }

    #[test]
    fn freeze_time_must_be_a_step_boundary() {
        assert_eq!(freeze_step(32).unwrap(), 16);
        assert!(freeze_step(15).is_err());
    }
}
