//! Reduced-gradient evaluation: state solve, adjoint solve in reflected
//! time, and assembly of `λu − p`.
//!
//! The adjoint runs forward in `s = T − t`. Lobatto nodes are symmetric, so
//! node `m` of reflected step `N − 1 − j` is node `M − m` of state step `j`
//! and the archived state is read without interpolation.

use std::cell::RefCell;
use std::collections::HashMap;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::field::SpatialField;
use crate::optimizer::control::{ControlTrajectory, TimeQuadrature};
use crate::pfasst::{
    mlsdc_step, pfasst_solve_on_channel, run_pipeline, Communicator, Link, Payload, PipelineProblem, SolveReport,
    SolverSettings, StepReport, StepState, Tag, TimeDecomposition,
};
use crate::problems::ProblemDefinition;
use crate::quadrature::QuadratureRule;
use crate::sweeper::{NodeTrajectory, RhsSplit, StepForcing};

const STATE_CHANNEL: u8 = 0;
const ADJOINT_CHANNEL: u8 = 1;
const DEFECT_CHANNEL: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientStrategy {
    /// One worker, state then adjoint.
    SequentialReference,
    /// A PFASST state solve followed by a PFASST adjoint solve.
    FirstStateThenAdjoint,
    /// State and adjoint iterated together, one worker per step.
    Simultaneous,
    /// Independent per-step adjoint solves with homogeneous end values plus a
    /// backward relay of the end-value defects. Linear problems only.
    Mixed,
}

impl GradientStrategy {
    pub fn name(self) -> &'static str {
        match self {
            GradientStrategy::SequentialReference => "sequential_reference",
            GradientStrategy::FirstStateThenAdjoint => "first_state_then_adjoint",
            GradientStrategy::Simultaneous => "simultaneous",
            GradientStrategy::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sequential_reference" | "sequential" => Some(GradientStrategy::SequentialReference),
            "first_state_then_adjoint" | "fsta" => Some(GradientStrategy::FirstStateThenAdjoint),
            "simultaneous" => Some(GradientStrategy::Simultaneous),
            "mixed" => Some(GradientStrategy::Mixed),
            _ => None,
        }
    }
}

/// How the mixed strategy carries the end-value defect across a step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DefectPropagation {
    /// Collocation solution of the homogeneous adjoint, mode by mode. Sum
    /// with the per-step solves reproduces the full collocation solution.
    #[default]
    Collocation,
    /// Exact operator exponential. Differs from the collocation fixed point
    /// by the time discretization error.
    Exponential,
}

impl DefectPropagation {
    pub fn name(self) -> &'static str {
        match self {
            DefectPropagation::Collocation => "collocation",
            DefectPropagation::Exponential => "exponential",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "collocation" => Some(DefectPropagation::Collocation),
            "exponential" => Some(DefectPropagation::Exponential),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradientSettings {
    pub strategy: GradientStrategy,
    pub num_workers: usize,
    pub solver: SolverSettings,
    pub warm: bool,
    pub quadrature: TimeQuadrature,
    pub propagation: DefectPropagation,
}

impl GradientSettings {
    pub fn new(strategy: GradientStrategy, num_workers: usize, solver: SolverSettings) -> Self {
        Self {
            strategy,
            num_workers,
            solver,
            warm: false,
            quadrature: TimeQuadrature::Collocation,
            propagation: DefectPropagation::Collocation,
        }
    }
}

/// Fine node values of the state at every step, in step order.
#[derive(Clone, Debug)]
pub struct StateArchive {
    pub state: Vec<Vec<SpatialField>>,
    pub report: SolveReport,
}

impl StateArchive {
    pub fn end_value(&self) -> &SpatialField {
        self.state.last().and_then(|s| s.last()).expect("archive is never empty")
    }
}

#[derive(Clone, Debug)]
pub struct GradientEvaluation {
    pub gradient: ControlTrajectory,
    pub objective: f64,
    pub state: StateArchive,
    /// Adjoint at every fine node, indexed like the state.
    pub adjoint: Vec<Vec<SpatialField>>,
    pub adjoint_report: SolveReport,
}

impl GradientEvaluation {
    pub fn converged(&self) -> bool {
        self.state.report.converged() && self.adjoint_report.converged()
    }
}

/// Running totals over all solves made by an evaluator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SweepCounters {
    pub state_solves: usize,
    pub adjoint_solves: usize,
    /// Fine-level sweeps summed over steps.
    pub state_sweeps: usize,
    pub adjoint_sweeps: usize,
    /// PFASST iterations summed over steps.
    pub state_iterations: usize,
    pub adjoint_iterations: usize,
    pub unconverged_solves: usize,
}

/// One solve as seen by the evaluator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveRecord {
    pub adjoint: bool,
    pub fine_sweeps: usize,
    pub iterations: usize,
    pub max_iterations: usize,
    pub converged: bool,
    pub max_residual: f64,
}

impl SolveRecord {
    fn from_report(adjoint: bool, r: &SolveReport) -> Self {
        Self {
            adjoint,
            fine_sweeps: r.fine_sweeps(),
            iterations: r.total_iterations(),
            max_iterations: r.max_iterations(),
            converged: r.converged(),
            max_residual: r.max_residual(),
        }
    }
}

pub fn solve_log_csv(log: &[SolveRecord]) -> String {
    let mut s = String::from("solve,equation,fine_sweeps,iterations,max_iterations,converged,max_residual\n");
    for (i, r) in log.iter().enumerate() {
        let eq = if r.adjoint { "adjoint" } else { "state" };
        s.push_str(&format!(
            "{},{},{},{},{},{},{:e}\n",
            i, eq, r.fine_sweeps, r.iterations, r.max_iterations, r.converged, r.max_residual
        ));
    }
    s
}

/// Evaluates `j(u)` and `∇j(u)` for one problem, keeping the last state
/// solve for reuse and the last trajectories for warm starts.
pub struct GradientEvaluator<'p> {
    problem: &'p ProblemDefinition,
    settings: GradientSettings,
    adjoint_rhs: RhsSplit,
    dec: TimeDecomposition,
    warm_state: Option<Vec<Vec<SpatialField>>>,
    /// Reflected-step order.
    warm_adjoint: Option<Vec<Vec<SpatialField>>>,
    warm_local: Option<Vec<Vec<SpatialField>>>,
    cached: Option<(ControlTrajectory, StateArchive)>,
    counters: SweepCounters,
    log: Vec<SolveRecord>,
}

fn reflect(trajs: Vec<Vec<SpatialField>>) -> Vec<Vec<SpatialField>> {
    trajs
        .into_iter()
        .rev()
        .map(|mut s| {
            s.reverse();
            s
        })
        .collect()
}

fn values(trajs: Vec<NodeTrajectory>) -> Vec<Vec<SpatialField>> {
    trajs.into_iter().map(|t| t.y).collect()
}

impl<'p> GradientEvaluator<'p> {
    pub fn new(problem: &'p ProblemDefinition, settings: GradientSettings) -> Result<Self> {
        let workers = match settings.strategy {
            GradientStrategy::SequentialReference => 1,
            _ => settings.num_workers,
        };
        let dec = problem.decomposition(workers)?;
        match settings.strategy {
            GradientStrategy::Simultaneous if workers != problem.num_steps => {
                return Err(Error::Strategy(format!(
                    "simultaneous strategy needs one worker per step ({} workers, {} steps)",
                    workers, problem.num_steps
                )))
            }
            GradientStrategy::Mixed if !problem.is_linear() => {
                return Err(Error::Strategy("mixed strategy needs a linear state equation".into()))
            }
            _ => {}
        }
        Ok(Self {
            problem,
            settings,
            adjoint_rhs: problem.adjoint_rhs(),
            dec,
            warm_state: None,
            warm_adjoint: None,
            warm_local: None,
            cached: None,
            counters: SweepCounters::default(),
            log: Vec::new(),
        })
    }

    pub fn problem(&self) -> &ProblemDefinition {
        self.problem
    }

    pub fn settings(&self) -> &GradientSettings {
        &self.settings
    }

    pub fn decomposition(&self) -> &TimeDecomposition {
        &self.dec
    }

    pub fn counters(&self) -> SweepCounters {
        self.counters
    }

    /// Every state and adjoint solve made so far, in order.
    pub fn solve_log(&self) -> &[SolveRecord] {
        &self.log
    }

    /// Drops stored trajectories; the next solves start from the predictor.
    pub fn clear_warm_start(&mut self) {
        self.warm_state = None;
        self.warm_adjoint = None;
        self.warm_local = None;
    }

    fn count_state(&mut self, r: &SolveReport) {
        self.counters.state_solves += 1;
        self.counters.state_sweeps += r.fine_sweeps();
        self.counters.state_iterations += r.total_iterations();
        if !r.converged() {
            self.counters.unconverged_solves += 1;
        }
        self.log.push(SolveRecord::from_report(false, r));
    }

    fn count_adjoint(&mut self, r: &SolveReport) {
        self.counters.adjoint_solves += 1;
        self.counters.adjoint_sweeps += r.fine_sweeps();
        self.counters.adjoint_iterations += r.total_iterations();
        if !r.converged() {
            self.counters.unconverged_solves += 1;
        }
        self.log.push(SolveRecord::from_report(true, r));
    }

    /// Solves the state equation for `u`, reusing the previous solve when
    /// `u` is unchanged.
    pub fn solve_state(&mut self, u: &ControlTrajectory) -> Result<StateArchive> {
        if let Some((cu, archive)) = &self.cached {
            if cu.steps() == u.steps() {
                return Ok(archive.clone());
            }
        }
        let forcing = self.problem.state_forcing(u)?;
        let warm = if self.settings.warm { self.warm_state.as_deref() } else { None };
        let p = PipelineProblem {
            hierarchy: &self.problem.hierarchy,
            rhs: &self.problem.rhs,
            initial: &self.problem.y0,
            forcing: &forcing,
            warm,
        };
        let (trajs, report) = pfasst_solve_on_channel(&p, &self.dec, &self.settings.solver, STATE_CHANNEL)?;
        self.count_state(&report);
        let archive = StateArchive {
            state: values(trajs),
            report,
        };
        self.store_state(u, &archive);
        Ok(archive)
    }

    fn store_state(&mut self, u: &ControlTrajectory, archive: &StateArchive) {
        if self.settings.warm {
            self.warm_state = Some(archive.state.clone());
        }
        self.cached = Some((u.clone(), archive.clone()));
    }

    pub fn objective_from(&self, archive: &StateArchive, u: &ControlTrajectory) -> Result<f64> {
        let u = u.with_workers(self.dec.num_workers)?;
        self.problem.objective_value(&archive.state, &u, self.settings.quadrature)
    }

    /// `j(u)`; one state solve unless `u` was the last control solved for.
    pub fn objective(&mut self, u: &ControlTrajectory) -> Result<f64> {
        let archive = self.solve_state(u)?;
        self.objective_from(&archive, u)
    }

    /// `j(u)` and `∇j(u)` together with the solver reports.
    pub fn evaluate(&mut self, u: &ControlTrajectory) -> Result<GradientEvaluation> {
        let (state, adjoint, adjoint_report) = match self.settings.strategy {
            GradientStrategy::Simultaneous => self.simultaneous(u)?,
            strategy => {
                let state = self.solve_state(u)?;
                let (adjoint, report) = match strategy {
                    GradientStrategy::Mixed => self.adjoint_mixed(&state)?,
                    _ => self.adjoint_pipeline(&state)?,
                };
                (state, adjoint, report)
            }
        };
        let u_r = u.with_workers(self.dec.num_workers)?;
        let gradient = self.problem.gradient(&u_r, &adjoint)?;
        let objective = self.problem.objective_value(&state.state, &u_r, self.settings.quadrature)?;
        Ok(GradientEvaluation {
            gradient: gradient.with_workers(u.decomposition().num_workers)?,
            objective,
            state,
            adjoint,
            adjoint_report,
        })
    }

    /// Adjoint by a forward pipeline solve in reflected time. Returns the
    /// adjoint indexed by state step and node.
    pub fn adjoint_pipeline(&mut self, archive: &StateArchive) -> Result<(Vec<Vec<SpatialField>>, SolveReport)> {
        let forcing = self.problem.adjoint_forcing(&archive.state)?;
        let initial = self.problem.adjoint_initial(archive.end_value())?;
        let warm = if self.settings.warm { self.warm_adjoint.as_deref() } else { None };
        let p = PipelineProblem {
            hierarchy: &self.problem.hierarchy,
            rhs: &self.adjoint_rhs,
            initial: &initial,
            forcing: &forcing,
            warm,
        };
        let (trajs, report) = pfasst_solve_on_channel(&p, &self.dec, &self.settings.solver, ADJOINT_CHANNEL)?;
        self.count_adjoint(&report);
        let reflected = values(trajs);
        if self.settings.warm {
            self.warm_adjoint = Some(reflected.clone());
        }
        Ok((reflect(reflected), report))
    }

    /// Mixed strategy: per-step adjoint solves with zero end value, then the
    /// end-value defects relayed backward and added on.
    pub fn adjoint_mixed(&mut self, archive: &StateArchive) -> Result<(Vec<Vec<SpatialField>>, SolveReport)> {
        let start = Instant::now();
        let problem = self.problem;
        let n = problem.num_steps;
        let forcing = problem.adjoint_forcing(&archive.state)?;
        let initial = problem.adjoint_initial(archive.end_value())?;
        let zero = SpatialField::zeros(*problem.grid());
        let dec = self.dec;
        let settings = self.settings.solver;
        let rhs = &self.adjoint_rhs;
        let warm = if self.settings.warm { self.warm_local.as_deref() } else { None };
        let propagation = self.settings.propagation;
        let rule = &problem.hierarchy.finest().rule;

        let out = run_pipeline(dec.num_workers, settings.timeout, |comm| {
            let w = comm.rank();
            let owned: Vec<usize> = dec.steps_of(w).collect();
            let mut local = Vec::with_capacity(owned.len());
            for &j in &owned {
                let r = n - 1 - j;
                let (traj, report) = mlsdc_step(
                    &problem.hierarchy,
                    rhs,
                    &zero,
                    &forcing[r],
                    dec.dt,
                    &settings,
                    warm.map(|s| s[r].as_slice()),
                )?;
                local.push((j, traj.y, report));
            }
            let prop = DefectPropagator::new(rule, rhs, dec.dt, propagation);
            let mut carry: Option<SpatialField> = None;
            let mut out = Vec::with_capacity(local.len());
            for (j, ptilde, report) in local.into_iter().rev() {
                let d = if j == n - 1 {
                    initial.clone()
                } else if dec.owner(j + 1) == w {
                    carry.take().ok_or_else(|| Error::Strategy("missing defect".into()))?
                } else {
                    match comm.recv(dec.owner(j + 1), defect_tag(j))? {
                        Payload::Value(v) => v,
                        Payload::Final { value, .. } => value,
                        Payload::Abort(r) => return Err(Error::Aborted(r)),
                    }
                };
                let p: Vec<SpatialField> = ptilde
                    .iter()
                    .enumerate()
                    .map(|(m, pt)| prop.propagate(&d, m).map(|delta| pt.plus(&delta)))
                    .collect::<Result<_>>()?;
                if j > 0 {
                    let start_value = p.last().expect("steps have nodes").clone();
                    if dec.owner(j - 1) == w {
                        carry = Some(start_value);
                    } else {
                        comm.send(dec.owner(j - 1), defect_tag(j - 1), Payload::Value(start_value))?;
                    }
                }
                out.push((j, (ptilde, p, report)));
            }
            Ok(out)
        })?;

        let mut local = Vec::with_capacity(n);
        let mut reflected = Vec::with_capacity(n);
        let mut report = SolveReport::default();
        // `out` is in state-step order; reflected index r = N − 1 − j
        for (_, (ptilde, p, rep)) in out.into_iter().rev() {
            local.push(ptilde);
            reflected.push(p);
            report.steps.push(rep);
        }
        for (r, s) in report.steps.iter_mut().enumerate() {
            s.step = r;
        }
        report.wall_time = start.elapsed().as_secs_f64();
        self.count_adjoint(&report);
        if self.settings.warm {
            self.warm_local = Some(local);
        }
        Ok((reflect(reflected), report))
    }

    /// State and adjoint iterated together with one worker per step.
    fn simultaneous(&mut self, u: &ControlTrajectory) -> Result<(StateArchive, Vec<Vec<SpatialField>>, SolveReport)> {
        let start = Instant::now();
        let problem = self.problem;
        let n = problem.num_steps;
        let forcing = problem.state_forcing(u)?;
        let settings = self.settings.solver;
        let rhs = &self.adjoint_rhs;
        let warm_state = if self.settings.warm { self.warm_state.as_deref() } else { None };
        let warm_adjoint = if self.settings.warm { self.warm_adjoint.as_deref() } else { None };
        let dt = problem.dt;

        type Out = (NodeTrajectory, StepReport, NodeTrajectory, StepReport);
        let out: Vec<(usize, Out)> = run_pipeline(n, settings.timeout, |comm| {
            let w = comm.rank();
            let j = w;
            let r = n - 1 - w;
            let slink = Link {
                prev: (w > 0).then(|| w - 1),
                next: (w + 1 < n).then_some(w + 1),
                channel: STATE_CHANNEL,
                block: 0,
            };
            let alink = Link {
                prev: (w + 1 < n).then_some(w + 1),
                next: (w > 0).then(|| w - 1),
                channel: ADJOINT_CHANNEL,
                block: 0,
            };
            let mut st = StepState::new(&problem.hierarchy, &problem.rhs, &settings, dt, &forcing[j]);
            st.predictor(comm, &slink, (w == 0).then_some(&problem.y0), warm_state.map(|s| s[j].as_slice()))?;
            let af = problem.adjoint_step_forcing(j, &st.fine().y)?;
            let mut at = StepState::new(&problem.hierarchy, rhs, &settings, dt, &af);
            let terminal = |st: &StepState| problem.adjoint_initial(st.fine().end_value());
            let a0 = if w == n - 1 { Some(terminal(&st)?) } else { None };
            at.predictor(comm, &alink, a0.as_ref(), warm_adjoint.map(|s| s[r].as_slice()))?;
            let mut k = 0;
            while !(st.done && at.done) {
                k += 1;
                if !st.done {
                    st.iterate(comm, &slink, k, true)?;
                    if !at.done {
                        at.set_forcing(&problem.adjoint_step_forcing(j, &st.fine().y)?)?;
                        if w == n - 1 && problem.objective.sigma > 0.0 {
                            at.set_initial(&terminal(&st)?);
                        }
                    }
                }
                if !at.done {
                    at.iterate(comm, &alink, k, st.done)?;
                    if at.done && !st.converged {
                        at.converged = false;
                    }
                }
            }
            let srep = st.report(j);
            let arep = at.report(r);
            Ok(vec![(j, (st.into_fine(), srep, at.into_fine(), arep))])
        })?;

        let mut state = Vec::with_capacity(n);
        let mut sreport = SolveReport::default();
        let mut reflected = vec![Vec::new(); n];
        let mut areport_steps = vec![None; n];
        for (j, (s, sr, a, ar)) in out {
            state.push(s.y);
            sreport.steps.push(sr);
            reflected[n - 1 - j] = a.y;
            areport_steps[n - 1 - j] = Some(ar);
        }
        let wall = start.elapsed().as_secs_f64();
        sreport.wall_time = wall;
        let areport = SolveReport {
            steps: areport_steps.into_iter().map(|s| s.expect("every step reported")).collect(),
            wall_time: wall,
        };
        self.count_state(&sreport);
        self.count_adjoint(&areport);
        let archive = StateArchive { state, report: sreport };
        self.store_state(u, &archive);
        if self.settings.warm {
            self.warm_adjoint = Some(reflected.clone());
        }
        Ok((archive, reflect(reflected), areport))
    }
}

fn defect_tag(step: usize) -> Tag {
    Tag {
        channel: DEFECT_CHANNEL,
        block: step,
        level: 0,
        iter: 0,
    }
}

/// Homogeneous adjoint over one step from a given end value, evaluated at
/// the reflected nodes.
struct DefectPropagator<'a> {
    rule: &'a QuadratureRule,
    kappa: f64,
    shift: f64,
    dt: f64,
    mode: DefectPropagation,
    table: RefCell<HashMap<u64, Vec<f64>>>,
}

impl<'a> DefectPropagator<'a> {
    fn new(rule: &'a QuadratureRule, rhs: &RhsSplit, dt: f64, mode: DefectPropagation) -> Self {
        Self {
            rule,
            kappa: rhs.kappa,
            shift: rhs.shift,
            dt,
            mode,
            table: RefCell::new(HashMap::new()),
        }
    }

    /// Value at reflected node `m`, i.e. after reflected time `dt τ_m`.
    fn propagate(&self, d: &SpatialField, m: usize) -> Result<SpatialField> {
        if m == 0 {
            return Ok(d.clone());
        }
        let elapsed = self.dt * self.rule.nodes()[m];
        Ok(match self.mode {
            DefectPropagation::Exponential if self.shift == 0.0 => d.exp_propagate(self.kappa, elapsed)?,
            DefectPropagation::Exponential => {
                d.map_spectrum(|k2| (-elapsed * (self.kappa * k2 + self.shift)).exp())
            }
            DefectPropagation::Collocation => d.map_spectrum(|k2| {
                let mut t = self.table.borrow_mut();
                let r = t.entry(k2.to_bits()).or_insert_with(|| {
                    self.rule.amplification(-self.dt * (self.kappa * k2 + self.shift))
                });
                r[m]
            }),
        })
    }
}

/// Mixed-strategy pieces exposed for inspection: per-step solves with zero
/// end value and the relayed end-value defects, both in state indexing.
pub fn mixed_decomposition(
    problem: &ProblemDefinition,
    archive: &StateArchive,
    settings: &SolverSettings,
    propagation: DefectPropagation,
) -> Result<(Vec<Vec<SpatialField>>, Vec<Vec<SpatialField>>)> {
    if !problem.is_linear() {
        return Err(Error::Strategy("mixed strategy needs a linear state equation".into()));
    }
    let n = problem.num_steps;
    let rhs = problem.adjoint_rhs();
    let forcing = problem.adjoint_forcing(&archive.state)?;
    let zero = SpatialField::zeros(*problem.grid());
    let rule = &problem.hierarchy.finest().rule;
    let prop = DefectPropagator::new(rule, &rhs, problem.dt, propagation);
    let mut local = vec![Vec::new(); n];
    let mut defect = vec![Vec::new(); n];
    let mut d = problem.adjoint_initial(archive.end_value())?;
    for j in (0..n).rev() {
        let (traj, _) = mlsdc_step(&problem.hierarchy, &rhs, &zero, &forcing[n - 1 - j], problem.dt, settings, None)?;
        let delta: Vec<SpatialField> = (0..traj.y.len()).map(|m| prop.propagate(&d, m)).collect::<Result<_>>()?;
        d = traj.y.last().expect("steps have nodes").plus(delta.last().expect("steps have nodes"));
        local[j] = traj.y.into_iter().rev().collect();
        defect[j] = delta.into_iter().rev().collect();
    }
    Ok((local, defect))
}

/// Single-step check helper: the adjoint pipeline with an arbitrary forcing.
pub fn solve_reflected(
    problem: &ProblemDefinition,
    forcing: &[StepForcing],
    initial: &SpatialField,
    dec: &TimeDecomposition,
    settings: &SolverSettings,
) -> Result<(Vec<Vec<SpatialField>>, SolveReport)> {
    let rhs = problem.adjoint_rhs();
    let p = PipelineProblem {
        hierarchy: &problem.hierarchy,
        rhs: &rhs,
        initial,
        forcing,
        warm: None,
    };
    let (trajs, report) = pfasst_solve_on_channel(&p, dec, settings, ADJOINT_CHANNEL)?;
    Ok((reflect(values(trajs)), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::control::time_inner_with;
    use crate::problems::{heat_hierarchy, make_heat_problem};
    use crate::sweeper::SweeperKind;

    fn heat() -> ProblemDefinition {
        let h = heat_hierarchy(&[4, 8], &[3, 5], SweeperKind::Imex).unwrap();
        make_heat_problem(h, 4, 0.05, 0.4).unwrap()
    }

    fn rel(a: &[Vec<SpatialField>], b: &[Vec<SpatialField>]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            num += x.minus(y).norm().powi(2);
            den += y.norm().powi(2);
        }
        (num / den.max(1e-300)).sqrt()
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            GradientStrategy::SequentialReference,
            GradientStrategy::FirstStateThenAdjoint,
            GradientStrategy::Simultaneous,
            GradientStrategy::Mixed,
        ] {
            assert_eq!(GradientStrategy::parse(s.name()), Some(s));
        }
    }

    #[test]
    fn zero_misfit_gives_zero_adjoint() {
        let p = heat();
        let archive = StateArchive {
            state: p.objective.target.clone(),
            report: SolveReport::default(),
        };
        let s = SolverSettings::with_tol(1e-12);
        let mut ev = GradientEvaluator::new(&p, GradientSettings::new(GradientStrategy::FirstStateThenAdjoint, 2, s)).unwrap();
        let (adj, _) = ev.adjoint_pipeline(&archive).unwrap();
        assert!(adj.iter().flatten().all(|f| f.max_abs() == 0.0));
        let (adj, _) = ev.adjoint_mixed(&archive).unwrap();
        assert!(adj.iter().flatten().all(|f| f.max_abs() == 0.0));
    }

    #[test]
    fn strategies_agree_on_heat() {
        let p = heat();
        let s = SolverSettings::with_tol(1e-12);
        let u = p.zero_control(1).unwrap();
        let reference = GradientEvaluator::new(&p, GradientSettings::new(GradientStrategy::SequentialReference, 1, s))
            .unwrap()
            .evaluate(&u)
            .unwrap();
        assert!(reference.converged());
        for (strategy, r) in [
            (GradientStrategy::FirstStateThenAdjoint, 2),
            (GradientStrategy::FirstStateThenAdjoint, 4),
            (GradientStrategy::Mixed, 2),
            (GradientStrategy::Mixed, 1),
            (GradientStrategy::Simultaneous, 4),
        ] {
            let ev = GradientEvaluator::new(&p, GradientSettings::new(strategy, r, s))
                .unwrap()
                .evaluate(&u)
                .unwrap();
            assert!(ev.converged(), "{:?}", strategy);
            let e = rel(ev.gradient.steps(), reference.gradient.steps());
            assert!(e < 1e-9, "{:?} R={} differs by {:e}", strategy, r, e);
            assert!((ev.objective - reference.objective).abs() <= 1e-10 * reference.objective);
        }
    }

    #[test]
    fn simultaneous_rejects_fewer_workers() {
        let p = heat();
        let s = GradientSettings::new(GradientStrategy::Simultaneous, 2, SolverSettings::default());
        assert!(matches!(GradientEvaluator::new(&p, s), Err(Error::Strategy(_))));
    }

    #[test]
    fn repeated_evaluation_reuses_state_and_is_reproducible() {
        let p = heat();
        let s = SolverSettings::with_tol(1e-12);
        let mut ev = GradientEvaluator::new(&p, GradientSettings::new(GradientStrategy::FirstStateThenAdjoint, 2, s)).unwrap();
        let u = p.zero_control(2).unwrap();
        let j = ev.objective(&u).unwrap();
        let a = ev.evaluate(&u).unwrap();
        assert_eq!(ev.counters().state_solves, 1);
        assert_eq!(a.objective, j);
        let b = ev.evaluate(&u).unwrap();
        assert_eq!(a.adjoint, b.adjoint);
    }

    #[test]
    fn adjoint_of_exact_state_matches_manufactured_adjoint() {
        let h = heat_hierarchy(&[8, 16], &[3, 5], SweeperKind::Imex).unwrap();
        let p = make_heat_problem(h, 8, 0.05, 2.0).unwrap();
        let archive = StateArchive {
            state: p.exact_state.clone().unwrap(),
            report: SolveReport::default(),
        };
        let s = SolverSettings::with_tol(1e-13);
        let mut ev = GradientEvaluator::new(&p, GradientSettings::new(GradientStrategy::FirstStateThenAdjoint, 4, s)).unwrap();
        let (adj, _) = ev.adjoint_pipeline(&archive).unwrap();
        let e = rel(&adj, p.exact_adjoint.as_ref().unwrap());
        assert!(e < 1e-6, "adjoint error {:e}", e);
    }

    #[test]
    fn mixed_defect_base_case_with_terminal_weight() {
        let h = heat_hierarchy(&[4, 8], &[3, 5], SweeperKind::Imex).unwrap();
        let mut p = make_heat_problem(h, 1, 0.05, 0.1).unwrap();
        p.objective.sigma = 2.0;
        p.objective.terminal_target = Some(p.y0.scaled(0.5));
        let archive = StateArchive {
            state: vec![vec![p.y0.clone(); 5]],
            report: SolveReport::default(),
        };
        let (_, defect) = mixed_decomposition(&p, &archive, &SolverSettings::with_tol(1e-12), DefectPropagation::Collocation).unwrap();
        let expect = p.y0.scaled(-1.0);
        assert_eq!(defect[0][4], expect);
        // end value carried by the full adjoint
        let mut ev = GradientEvaluator::new(&p, GradientSettings::new(GradientStrategy::Mixed, 1, SolverSettings::with_tol(1e-12))).unwrap();
        let (adj, _) = ev.adjoint_mixed(&archive).unwrap();
        assert!(adj[0][4].minus(&expect).max_abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences_on_small_heat() {
        let p = heat();
        let s = SolverSettings::with_tol(1e-13);
        let gs = GradientSettings::new(GradientStrategy::FirstStateThenAdjoint, 2, s);
        let mut ev = GradientEvaluator::new(&p, gs).unwrap();
        let u = p.zero_control(2).unwrap();
        let g = ev.evaluate(&u).unwrap().gradient;
        let rule = &p.hierarchy.finest().rule;
        let du = ControlTrajectory::from_fn(*u.decomposition(), *p.grid(), rule, |_, t, x| {
            (1.0 + t) * (2.0 * std::f64::consts::PI * x[0]).sin() * (2.0 * std::f64::consts::PI * x[1]).cos()
                + 0.3 * crate::field::sine_product(x, 3)
        });
        let dd = time_inner_with(&g, &du, TimeQuadrature::Collocation).unwrap();
        let eps = 1e-3;
        let mut up = u.clone();
        up.axpy(eps, &du).unwrap();
        let mut um = u.clone();
        um.axpy(-eps, &du).unwrap();
        let fd = (ev.objective(&up).unwrap() - ev.objective(&um).unwrap()) / (2.0 * eps);
        assert!(((dd - fd) / fd).abs() < 1e-4, "dd {} fd {}", dd, fd);
    }
}
