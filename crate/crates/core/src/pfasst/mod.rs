//! Level hierarchies, MLSDC V-cycles and the pipelined PFASST controller.
//!
//! Every step runs the same per-step state machine ([`StepState`]); a
//! sequential MLSDC step is that machine without neighbours, so a one-worker
//! pipeline reproduces sequential MLSDC bit for bit.

pub mod comm;

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::field::{GridSpec, SpatialField};
use crate::quadrature::QuadratureRule;
use crate::sweeper::{
    fas_tau, residual_converged, LevelTransfer, NewtonSettings, NodeTrajectory, RhsSplit, StepForcing, Sweeper,
    SweeperKind,
};

pub use comm::{thread_comms, Communicator, NullComm, Payload, Tag, ThreadComm};

#[derive(Clone, Debug)]
pub struct LevelSpec {
    pub grid: GridSpec,
    pub rule: QuadratureRule,
    pub kind: SweeperKind,
    pub sweeps: usize,
}

impl LevelSpec {
    pub fn new(grid: GridSpec, num_nodes: usize, kind: SweeperKind) -> Result<Self> {
        Ok(Self {
            grid,
            rule: QuadratureRule::lobatto(num_nodes)?,
            kind,
            sweeps: 1,
        })
    }
}

/// Levels ordered coarse to fine; the last level carries the solution.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    levels: Vec<LevelSpec>,
    transfers: Vec<LevelTransfer>,
}

impl Hierarchy {
    pub fn new(levels: Vec<LevelSpec>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Hierarchy("at least one level required".into()));
        }
        if levels.iter().any(|l| l.sweeps == 0) {
            return Err(Error::Hierarchy("sweeps per visit must be positive".into()));
        }
        let mut transfers = Vec::with_capacity(levels.len() - 1);
        for pair in levels.windows(2) {
            let (c, f) = (&pair[0], &pair[1]);
            if c.rule.num_nodes() > f.rule.num_nodes() {
                return Err(Error::Hierarchy(format!(
                    "node counts must not decrease towards the fine level ({} > {})",
                    c.rule.num_nodes(),
                    f.rule.num_nodes()
                )));
            }
            transfers.push(LevelTransfer::new((&c.grid, &c.rule), (&f.grid, &f.rule))?);
        }
        Ok(Self { levels, transfers })
    }

    /// Uniform helper: one grid resolution and node count per level, all
    /// levels using `kind`.
    pub fn uniform(base: &GridSpec, points: &[usize], nodes: &[usize], kind: SweeperKind) -> Result<Self> {
        if points.len() != nodes.len() {
            return Err(Error::Hierarchy("points and nodes lists differ in length".into()));
        }
        let levels = points
            .iter()
            .zip(nodes)
            .map(|(&p, &n)| LevelSpec::new(base.with_resolution(p)?, n, kind))
            .collect::<Result<Vec<_>>>()?;
        Self::new(levels)
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &LevelSpec {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[LevelSpec] {
        &self.levels
    }

    pub fn finest(&self) -> &LevelSpec {
        self.levels.last().unwrap()
    }

    /// Transfer between level `l` and `l + 1`.
    pub fn transfer(&self, l: usize) -> &LevelTransfer {
        &self.transfers[l]
    }

    /// Same levels with every sweeper replaced by `kind`.
    pub fn with_kind(&self, kind: SweeperKind) -> Self {
        let mut h = self.clone();
        for l in &mut h.levels {
            l.kind = kind;
        }
        h
    }

    pub fn with_sweeps(&self, sweeps: usize) -> Result<Self> {
        let mut levels = self.levels.clone();
        for l in &mut levels {
            l.sweeps = sweeps;
        }
        Self::new(levels)
    }

    /// Hierarchy consisting of the finest level only.
    pub fn finest_only(&self) -> Self {
        Self {
            levels: vec![self.finest().clone()],
            transfers: Vec::new(),
        }
    }
}

/// Steps `0..num_steps` distributed block-sequentially over workers: worker
/// `w` owns steps `w, w + R, w + 2R, ...`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeDecomposition {
    pub num_steps: usize,
    pub num_workers: usize,
    pub dt: f64,
}

impl TimeDecomposition {
    pub fn new(num_steps: usize, num_workers: usize, dt: f64) -> Result<Self> {
        if num_steps == 0 || num_workers == 0 {
            return Err(Error::Decomposition("need at least one step and one worker".into()));
        }
        if num_steps % num_workers != 0 {
            return Err(Error::Decomposition(format!(
                "{} steps not divisible by {} workers",
                num_steps, num_workers
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::Decomposition(format!("time step {} not positive", dt)));
        }
        Ok(Self {
            num_steps,
            num_workers,
            dt,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.num_steps / self.num_workers
    }

    pub fn owner(&self, step: usize) -> usize {
        step % self.num_workers
    }

    pub fn block(&self, step: usize) -> usize {
        step / self.num_workers
    }

    pub fn steps_of(&self, worker: usize) -> impl Iterator<Item = usize> {
        (worker..self.num_steps).step_by(self.num_workers)
    }

    pub fn end_time(&self) -> f64 {
        self.num_steps as f64 * self.dt
    }

    pub fn with_workers(&self, num_workers: usize) -> Result<Self> {
        Self::new(self.num_steps, num_workers, self.dt)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    pub atol: f64,
    pub rtol: f64,
    pub max_iters: usize,
    pub newton: NewtonSettings,
    pub timeout: Duration,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-10,
            max_iters: 100,
            newton: NewtonSettings::default(),
            timeout: Duration::from_secs(600),
        }
    }
}

impl SolverSettings {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            atol: tol,
            rtol: tol,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepStatus {
    Continue,
    Converged,
}

/// A step may stop once its own residual test passes and its predecessor
/// in the pipeline has converged.
pub fn convergence_rule(
    residual: f64,
    y0_norm: f64,
    predecessor_converged: bool,
    atol: f64,
    rtol: f64,
) -> StepStatus {
    if residual.is_finite() && residual_converged(residual, y0_norm, atol, rtol) && predecessor_converged {
        StepStatus::Converged
    } else {
        StepStatus::Continue
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: usize,
    /// Iterations after the predictor.
    pub iterations: usize,
    /// Sweeps per level, coarse to fine, predictor included.
    pub sweeps: Vec<usize>,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub steps: Vec<StepReport>,
    pub wall_time: f64,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.steps.iter().all(|s| s.converged)
    }

    pub fn total_iterations(&self) -> usize {
        self.steps.iter().map(|s| s.iterations).sum()
    }

    pub fn mean_iterations(&self) -> f64 {
        self.total_iterations() as f64 / self.steps.len().max(1) as f64
    }

    pub fn max_iterations(&self) -> usize {
        self.steps.iter().map(|s| s.iterations).max().unwrap_or(0)
    }

    /// Sweeps on all levels and steps.
    pub fn total_sweeps(&self) -> usize {
        self.steps.iter().map(|s| s.sweeps.iter().sum::<usize>()).sum()
    }

    pub fn fine_sweeps(&self) -> usize {
        self.steps.iter().map(|s| *s.sweeps.last().unwrap_or(&0)).sum()
    }

    pub fn max_residual(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.residual))
    }

    pub fn csv_header() -> &'static str {
        "step,level,sweeps,final_residual,converged,iterations"
    }

    /// One row per step and level; the residual column is the finest-level
    /// residual of the step.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for s in &self.steps {
            for (l, n) in s.sweeps.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{:e},{},{}", s.step, l, n, s.residual, s.converged, s.iterations);
            }
        }
        out
    }
}

/// Where a pipeline step sits relative to its neighbours.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Link {
    pub prev: Option<usize>,
    pub next: Option<usize>,
    pub channel: u8,
    pub block: usize,
}

impl Link {
    pub(crate) fn alone() -> Self {
        Self {
            prev: None,
            next: None,
            channel: 0,
            block: 0,
        }
    }

    fn tag(&self, level: usize, iter: usize) -> Tag {
        Tag {
            channel: self.channel,
            block: self.block,
            level,
            iter,
        }
    }

    pub(crate) fn handoff_tag(channel: u8, block: usize) -> Tag {
        Tag {
            channel,
            block,
            level: usize::MAX,
            iter: 0,
        }
    }
}

/// All levels of one time step during an MLSDC or PFASST solve.
pub(crate) struct StepState<'a> {
    h: &'a Hierarchy,
    rhs: &'a RhsSplit,
    settings: &'a SolverSettings,
    dt: f64,
    levels: Vec<NodeTrajectory>,
    forcing: Vec<StepForcing>,
    y0: Vec<SpatialField>,
    restricted: Vec<Option<Vec<SpatialField>>>,
    pub sweeps: Vec<usize>,
    pub iterations: usize,
    prev_done: bool,
    prev_converged: bool,
    pub done: bool,
    pub converged: bool,
}

impl<'a> StepState<'a> {
    pub(crate) fn new(
        h: &'a Hierarchy,
        rhs: &'a RhsSplit,
        settings: &'a SolverSettings,
        dt: f64,
        fine_forcing: &StepForcing,
    ) -> Self {
        let nl = h.num_levels();
        Self {
            h,
            rhs,
            settings,
            dt,
            levels: Vec::new(),
            forcing: Self::level_forcing(h, fine_forcing),
            y0: Vec::new(),
            restricted: vec![None; nl],
            sweeps: vec![0; nl],
            iterations: 0,
            prev_done: false,
            prev_converged: false,
            done: false,
            converged: false,
        }
    }

    fn level_forcing(h: &Hierarchy, fine: &StepForcing) -> Vec<StepForcing> {
        let nl = h.num_levels();
        let mut out = vec![StepForcing::none(); nl];
        out[nl - 1] = fine.clone();
        for l in (0..nl - 1).rev() {
            out[l] = out[l + 1].restrict(h.transfer(l));
        }
        out
    }

    /// Replaces the step data and refreshes the fine-level evaluations.
    pub(crate) fn set_forcing(&mut self, fine_forcing: &StepForcing) -> Result<()> {
        self.forcing = Self::level_forcing(self.h, fine_forcing);
        if !self.levels.is_empty() {
            let f = self.h.num_levels() - 1;
            self.sweeper(f).evaluate(&mut self.levels[f], &self.forcing[f])?;
        }
        Ok(())
    }

    fn sweeper(&self, l: usize) -> Sweeper<'a> {
        let spec = &self.h.levels[l];
        Sweeper {
            rule: &spec.rule,
            rhs: self.rhs,
            kind: spec.kind,
            newton: self.settings.newton,
        }
    }

    pub(crate) fn fine(&self) -> &NodeTrajectory {
        self.levels.last().unwrap()
    }

    pub(crate) fn into_fine(mut self) -> NodeTrajectory {
        self.levels.pop().unwrap()
    }

    fn sweep_level(&mut self, l: usize) -> Result<()> {
        let sw = self.sweeper(l);
        for _ in 0..self.h.levels[l].sweeps {
            sw.sweep(&mut self.levels[l], &self.y0[l], &self.forcing[l], self.dt)?;
            self.sweeps[l] += 1;
        }
        Ok(())
    }

    /// Level `l` to level `l - 1`, including the FAS correction.
    fn restrict_from(&mut self, l: usize) -> Result<()> {
        let tr = self.h.transfer(l - 1);
        let vals = tr.restrict_nodes(&self.levels[l].y);
        let mut c = NodeTrajectory::from_values(vals.clone());
        self.sweeper(l - 1).evaluate(&mut c, &self.forcing[l - 1])?;
        let tau = fas_tau(
            &self.levels[l],
            &self.h.levels[l].rule,
            &c,
            &self.h.levels[l - 1].rule,
            tr,
            self.dt,
        )?;
        c.tau = Some(tau);
        self.levels[l - 1] = c;
        self.restricted[l - 1] = Some(vals);
        Ok(())
    }

    /// Coarse correction from level `l - 1` added to level `l`.
    fn interpolate_to(&mut self, l: usize) -> Result<()> {
        let base = self.restricted[l - 1]
            .as_ref()
            .ok_or_else(|| Error::Hierarchy("interpolation before restriction".into()))?;
        let delta: Vec<SpatialField> = self.levels[l - 1].y.iter().zip(base).map(|(c, r)| c.minus(r)).collect();
        let up = self.h.transfer(l - 1).interpolate_nodes(&delta);
        for (y, d) in self.levels[l].y.iter_mut().zip(&up) {
            y.axpy(1.0, d);
        }
        let sw = self.sweeper(l);
        sw.evaluate(&mut self.levels[l], &self.forcing[l])
    }

    fn set_initial_all(&mut self, v: &SpatialField) {
        let nl = self.h.num_levels();
        self.y0 = vec![v.clone(); nl];
        for l in (0..nl - 1).rev() {
            self.y0[l] = self.h.transfer(l).restrict_field(&self.y0[l + 1]);
        }
    }

    /// Sets the initial value of the first pipeline step (fine level).
    pub(crate) fn set_initial(&mut self, v: &SpatialField) {
        self.set_initial_all(v);
    }

    fn receive(&mut self, comm: &mut dyn Communicator, link: &Link, level: usize, iter: usize) -> Result<()> {
        let Some(p) = link.prev else { return Ok(()) };
        match comm.recv(p, link.tag(level, iter))? {
            Payload::Value(v) => self.y0[level] = v,
            Payload::Final { value, converged } => {
                self.prev_done = true;
                self.prev_converged = converged;
                self.set_initial_all(&value);
            }
            Payload::Abort(r) => return Err(Error::Aborted(r)),
        }
        Ok(())
    }

    fn send(&self, comm: &mut dyn Communicator, link: &Link, level: usize, iter: usize, payload: Payload) -> Result<()> {
        match link.next {
            Some(n) => comm.send(n, link.tag(level, iter), payload),
            None => Ok(()),
        }
    }

    /// Coarse predictor, or warm start from stored fine node values.
    ///
    /// `exact_y0` is the known initial value of the first step of a block;
    /// other steps receive their initial value from the predecessor's
    /// coarse sweep.
    pub(crate) fn predictor(
        &mut self,
        comm: &mut dyn Communicator,
        link: &Link,
        exact_y0: Option<&SpatialField>,
        warm: Option<&[SpatialField]>,
    ) -> Result<()> {
        let nl = self.h.num_levels();
        let fine = nl - 1;
        let coarse_in = match link.prev {
            Some(p) => match comm.recv(p, link.tag(0, 0))? {
                Payload::Value(v) => Some(v),
                Payload::Final { .. } => return Err(Error::Communication("final value during the predictor".into())),
                Payload::Abort(r) => return Err(Error::Aborted(r)),
            },
            None => {
                self.prev_done = true;
                self.prev_converged = true;
                None
            }
        };
        if warm.is_some_and(|w| w.len() != self.h.finest().rule.num_nodes()) {
            return Err(Error::Hierarchy("warm start has the wrong number of nodes".into()));
        }
        let guess = match (exact_y0, warm, &coarse_in) {
            (Some(v), _, _) => v.clone(),
            (None, Some(w), _) => w[0].clone(),
            (None, None, Some(c)) => {
                let mut v = c.clone();
                for l in 0..fine {
                    v = self.h.transfer(l).interpolate_field(&v);
                }
                v
            }
            (None, None, None) => return Err(Error::Hierarchy("first step needs an initial value".into())),
        };
        self.set_initial_all(&guess);
        if let Some(c) = coarse_in {
            self.y0[0] = c;
        }
        self.levels = (0..nl)
            .map(|l| NodeTrajectory::spread(&self.y0[l], self.h.levels[l].rule.num_nodes()))
            .collect();
        let values = match warm {
            Some(w) => w.to_vec(),
            None => vec![guess; self.h.finest().rule.num_nodes()],
        };
        self.levels[fine] = NodeTrajectory::from_values(values);
        self.sweeper(fine).evaluate(&mut self.levels[fine], &self.forcing[fine])?;
        for l in (1..nl).rev() {
            self.restrict_from(l)?;
        }
        self.sweep_level(0)?;
        self.send(comm, link, 0, 0, Payload::Value(self.levels[0].end_value().clone()))?;
        for l in 1..nl {
            self.interpolate_to(l)?;
        }
        Ok(())
    }

    /// One PFASST iteration (a V-cycle with pipelined communication).
    /// `gate` can veto stopping even when the residual test passes.
    pub(crate) fn iterate(&mut self, comm: &mut dyn Communicator, link: &Link, k: usize, gate: bool) -> Result<()> {
        let nl = self.h.num_levels();
        let fine = nl - 1;
        self.sweep_level(fine)?;
        self.iterations = k;
        let res = self.levels[fine].residual;
        let y0n = self.y0[fine].norm();
        let ok = res.is_finite() && residual_converged(res, y0n, self.settings.atol, self.settings.rtol);
        let status = convergence_rule(res, y0n, self.prev_done, self.settings.atol, self.settings.rtol);
        if !res.is_finite() || (status == StepStatus::Converged && gate) || k >= self.settings.max_iters {
            self.done = true;
            self.converged = ok && self.prev_converged && gate;
            let value = self.levels[fine].end_value().clone();
            return self.send(comm, link, 0, k, Payload::Final { value, converged: self.converged });
        }
        if nl == 1 {
            self.send(comm, link, 0, k, Payload::Value(self.levels[0].end_value().clone()))?;
            if !self.prev_done {
                self.receive(comm, link, 0, k)?;
            }
            return Ok(());
        }
        self.send(comm, link, fine, k, Payload::Value(self.levels[fine].end_value().clone()))?;
        self.restrict_from(fine)?;
        for l in (1..fine).rev() {
            self.sweep_level(l)?;
            self.send(comm, link, l, k, Payload::Value(self.levels[l].end_value().clone()))?;
            self.restrict_from(l)?;
        }
        if !self.prev_done {
            self.receive(comm, link, 0, k)?;
        }
        self.sweep_level(0)?;
        self.send(comm, link, 0, k, Payload::Value(self.levels[0].end_value().clone()))?;
        for l in 1..nl {
            self.interpolate_to(l)?;
            if !self.prev_done {
                self.receive(comm, link, l, k)?;
            }
            if l < fine {
                self.sweep_level(l)?;
            }
        }
        Ok(())
    }

    pub(crate) fn report(&self, step: usize) -> StepReport {
        StepReport {
            step,
            iterations: self.iterations,
            sweeps: self.sweeps.clone(),
            residual: self.fine().residual,
            converged: self.converged,
        }
    }
}

/// Sequential MLSDC on a single step. Non-convergence is reported through
/// the returned report, not as an error.
pub fn mlsdc_step(
    h: &Hierarchy,
    rhs: &RhsSplit,
    y0: &SpatialField,
    forcing: &StepForcing,
    dt: f64,
    settings: &SolverSettings,
    warm: Option<&[SpatialField]>,
) -> Result<(NodeTrajectory, StepReport)> {
    let mut st = StepState::new(h, rhs, settings, dt, forcing);
    let link = Link::alone();
    let mut comm = NullComm;
    st.predictor(&mut comm, &link, Some(y0), warm)?;
    let mut k = 0;
    while !st.done {
        k += 1;
        st.iterate(&mut comm, &link, k, true)?;
    }
    let report = st.report(0);
    Ok((st.into_fine(), report))
}

/// Input shared by all pipeline workers.
#[derive(Clone, Copy)]
pub struct PipelineProblem<'a> {
    pub hierarchy: &'a Hierarchy,
    pub rhs: &'a RhsSplit,
    pub initial: &'a SpatialField,
    /// Fine-level forcing of every step.
    pub forcing: &'a [StepForcing],
    /// Stored fine node values of every step for a warm start.
    pub warm: Option<&'a [Vec<SpatialField>]>,
}

type WorkerOutput = Vec<(usize, NodeTrajectory, StepReport)>;

fn run_worker(
    comm: &mut dyn Communicator,
    p: &PipelineProblem,
    dec: &TimeDecomposition,
    settings: &SolverSettings,
    channel: u8,
) -> Result<WorkerOutput> {
    let w = comm.rank();
    let r = dec.num_workers;
    let mut out = Vec::new();
    let mut carry: Option<SpatialField> = None;
    for b in 0..dec.num_blocks() {
        let j = b * r + w;
        let link = Link {
            prev: (w > 0).then(|| w - 1),
            next: (w + 1 < r).then_some(w + 1),
            channel,
            block: b,
        };
        let exact = if w > 0 {
            None
        } else if b == 0 {
            Some(p.initial.clone())
        } else if r == 1 {
            carry.take()
        } else {
            match comm.recv(r - 1, Link::handoff_tag(channel, b))? {
                Payload::Value(v) | Payload::Final { value: v, .. } => Some(v),
                Payload::Abort(reason) => return Err(Error::Aborted(reason)),
            }
        };
        let mut st = StepState::new(p.hierarchy, p.rhs, settings, dec.dt, &p.forcing[j]);
        st.predictor(comm, &link, exact.as_ref(), p.warm.map(|s| s[j].as_slice()))?;
        let mut k = 0;
        while !st.done {
            k += 1;
            st.iterate(comm, &link, k, true)?;
        }
        if w == r - 1 && b + 1 < dec.num_blocks() {
            let end = st.fine().end_value().clone();
            if r == 1 {
                carry = Some(end);
            } else {
                comm.send(0, Link::handoff_tag(channel, b + 1), Payload::Value(end))?;
            }
        }
        let report = st.report(j);
        out.push((j, st.into_fine(), report));
    }
    Ok(out)
}

/// Runs `body` on `R` threads connected by in-process channels and gathers
/// the per-step outputs in step order.
pub(crate) fn run_pipeline<T: Send>(
    num_workers: usize,
    timeout: Duration,
    body: impl Fn(&mut ThreadComm) -> Result<Vec<(usize, T)>> + Sync,
) -> Result<Vec<(usize, T)>> {
    let comms = thread_comms(num_workers, timeout);
    let results: Vec<Result<Vec<(usize, T)>>> = std::thread::scope(|s| {
        let handles: Vec<_> = comms
            .into_iter()
            .map(|mut c| {
                let body = &body;
                s.spawn(move || {
                    let r = body(&mut c);
                    if let Err(e) = &r {
                        c.abort(&e.to_string());
                    }
                    r
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Aborted("worker panicked".into()))))
            .collect()
    });
    let mut all = Vec::new();
    let mut first_err: Option<Error> = None;
    for r in results {
        match r {
            Ok(v) => all.extend(v),
            Err(e) => {
                // report the root cause rather than the induced aborts
                let replace = match (&first_err, &e) {
                    (None, _) => true,
                    (Some(Error::Aborted(_)), Error::Aborted(_)) => false,
                    (Some(Error::Aborted(_)), _) => true,
                    _ => false,
                };
                if replace {
                    first_err = Some(e);
                }
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    all.sort_by_key(|(j, _)| *j);
    Ok(all)
}

/// Pipelined PFASST over all steps of `dec`. Returns the finest-level
/// trajectory of every step in step order.
pub fn pfasst_solve(
    p: &PipelineProblem,
    dec: &TimeDecomposition,
    settings: &SolverSettings,
) -> Result<(Vec<NodeTrajectory>, SolveReport)> {
    pfasst_solve_on_channel(p, dec, settings, 0)
}

pub(crate) fn pfasst_solve_on_channel(
    p: &PipelineProblem,
    dec: &TimeDecomposition,
    settings: &SolverSettings,
    channel: u8,
) -> Result<(Vec<NodeTrajectory>, SolveReport)> {
    if p.forcing.len() != dec.num_steps {
        return Err(Error::Decomposition(format!(
            "{} forcing entries for {} steps",
            p.forcing.len(),
            dec.num_steps
        )));
    }
    if p.warm.is_some_and(|w| w.len() != dec.num_steps) {
        return Err(Error::Decomposition("warm start does not cover every step".into()));
    }
    if p.initial.grid() != &p.hierarchy.finest().grid {
        return Err(Error::GridMismatch("initial value is not on the finest grid".into()));
    }
    let start = Instant::now();
    let out = run_pipeline(dec.num_workers, settings.timeout, |comm| {
        let v = run_worker(comm, p, dec, settings, channel)?;
        Ok(v.into_iter().map(|(j, t, r)| (j, (t, r))).collect())
    })?;
    let mut trajs = Vec::with_capacity(out.len());
    let mut report = SolveReport::default();
    for (_, (t, r)) in out {
        trajs.push(t);
        report.steps.push(r);
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((trajs, report))
}

/// Sequential MLSDC over all steps (the one-worker pipeline).
pub fn sequential_solve(p: &PipelineProblem, num_steps: usize, dt: f64, settings: &SolverSettings) -> Result<(Vec<NodeTrajectory>, SolveReport)> {
    pfasst_solve(p, &TimeDecomposition::new(num_steps, 1, dt)?, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn heat_levels(kind: SweeperKind) -> Hierarchy {
        let g = GridSpec::periodic_1d(32, 1.0).unwrap();
        Hierarchy::uniform(&g, &[16, 32], &[3, 5], kind).unwrap()
    }

    fn sdc_only(nodes: usize) -> Hierarchy {
        let g = GridSpec::periodic_1d(32, 1.0).unwrap();
        Hierarchy::uniform(&g, &[32], &[nodes], SweeperKind::Imex).unwrap()
    }

    fn y0() -> SpatialField {
        let g = GridSpec::periodic_1d(32, 1.0).unwrap();
        SpatialField::from_fn(g, |x| (2.0 * PI * x[0]).sin() + 0.3 * (4.0 * PI * x[0]).cos())
    }

    #[test]
    fn decomposition_ownership() {
        let d = TimeDecomposition::new(20, 5, 0.1).unwrap();
        assert_eq!(d.num_blocks(), 4);
        assert_eq!(d.owner(7), 2);
        assert_eq!(d.block(7), 1);
        assert_eq!(d.steps_of(3).collect::<Vec<_>>(), vec![3, 8, 13, 18]);
        assert!(TimeDecomposition::new(20, 3, 0.1).is_err());
    }

    #[test]
    fn hierarchy_validation() {
        let g = GridSpec::periodic_1d(32, 1.0).unwrap();
        assert!(Hierarchy::uniform(&g, &[32, 16], &[3, 5], SweeperKind::Imex).is_err());
        assert!(Hierarchy::uniform(&g, &[16, 32], &[5, 3], SweeperKind::Imex).is_err());
        assert!(Hierarchy::uniform(&g, &[12, 32], &[3, 5], SweeperKind::Imex).is_err());
        assert_eq!(heat_levels(SweeperKind::Imex).num_levels(), 2);
    }

    #[test]
    fn convergence_rule_cases() {
        assert_eq!(convergence_rule(1e-12, 1.0, true, 1e-10, 1e-10), StepStatus::Converged);
        assert_eq!(convergence_rule(1e-12, 1.0, false, 1e-10, 1e-10), StepStatus::Continue);
        // relative test alone suffices
        assert_eq!(convergence_rule(1e-9, 1e2, true, 1e-10, 1e-10), StepStatus::Converged);
        assert_eq!(convergence_rule(f64::NAN, 1.0, true, 1e-10, 1e-10), StepStatus::Continue);
    }

    #[test]
    fn single_level_is_plain_sdc() {
        let h = sdc_only(5);
        let rhs = RhsSplit::diffusion(0.05);
        let s = SolverSettings::with_tol(1e-12);
        let (t, rep) = mlsdc_step(&h, &rhs, &y0(), &StepForcing::none(), 0.1, &s, None).unwrap();
        assert!(rep.converged);

        let sw = Sweeper::new(&h.finest().rule, &rhs, SweeperKind::Imex);
        let mut plain = NodeTrajectory::spread(&y0(), 5);
        sw.evaluate(&mut plain, &StepForcing::none()).unwrap();
        for _ in 0..=rep.iterations {
            sw.sweep(&mut plain, &y0(), &StepForcing::none(), 0.1).unwrap();
        }
        for m in 0..5 {
            assert!(plain.y[m].minus(&t.y[m]).max_abs() < 1e-14);
        }
    }

    #[test]
    fn mlsdc_matches_fine_sdc() {
        let rhs = RhsSplit::diffusion(0.05);
        let s = SolverSettings::with_tol(1e-13);
        let (a, ra) = mlsdc_step(&heat_levels(SweeperKind::Imex), &rhs, &y0(), &StepForcing::none(), 0.1, &s, None).unwrap();
        let (b, _) = mlsdc_step(&sdc_only(5), &rhs, &y0(), &StepForcing::none(), 0.1, &s, None).unwrap();
        assert!(ra.converged);
        assert!(a.end_value().minus(b.end_value()).norm() < 1e-9);
    }

    #[test]
    fn warm_start_from_fixed_point_takes_one_iteration() {
        let h = heat_levels(SweeperKind::Imex);
        let rhs = RhsSplit::diffusion(0.05);
        let s = SolverSettings::with_tol(1e-10);
        let tight = SolverSettings::with_tol(1e-14);
        let (a, _) = mlsdc_step(&h, &rhs, &y0(), &StepForcing::none(), 0.1, &tight, None).unwrap();
        let (_, r) = mlsdc_step(&h, &rhs, &y0(), &StepForcing::none(), 0.1, &s, Some(&a.y)).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
    }

    fn run(r: usize, nsteps: usize) -> (Vec<NodeTrajectory>, SolveReport) {
        let h = heat_levels(SweeperKind::Imex);
        let rhs = RhsSplit::diffusion(0.05);
        let g = h.finest().grid;
        let forcing: Vec<_> = (0..nsteps)
            .map(|j| {
                StepForcing::with_source(
                    (0..5)
                        .map(|m| SpatialField::from_fn(g, |x| (j + m) as f64 * 0.1 * (2.0 * PI * x[0]).cos()))
                        .collect(),
                )
            })
            .collect();
        let init = y0();
        let p = PipelineProblem {
            hierarchy: &h,
            rhs: &rhs,
            initial: &init,
            forcing: &forcing,
            warm: None,
        };
        let dec = TimeDecomposition::new(nsteps, r, 0.1).unwrap();
        pfasst_solve(&p, &dec, &SolverSettings::with_tol(1e-12)).unwrap()
    }

    #[test]
    fn one_worker_equals_sequential_mlsdc() {
        let (trajs, rep) = run(1, 4);
        assert!(rep.converged());
        let h = heat_levels(SweeperKind::Imex);
        let rhs = RhsSplit::diffusion(0.05);
        let g = h.finest().grid;
        let mut y = y0();
        for (j, t) in trajs.iter().enumerate() {
            let f = StepForcing::with_source(
                (0..5)
                    .map(|m| SpatialField::from_fn(g, |x| (j + m) as f64 * 0.1 * (2.0 * PI * x[0]).cos()))
                    .collect(),
            );
            let (s, _) = mlsdc_step(&h, &rhs, &y, &f, 0.1, &SolverSettings::with_tol(1e-12), None).unwrap();
            for m in 0..5 {
                assert_eq!(s.y[m], t.y[m]);
            }
            y = s.end_value().clone();
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let (seq, _) = run(1, 8);
        for r in [2, 4, 8] {
            let (par, rep) = run(r, 8);
            assert!(rep.converged(), "R={}", r);
            for (a, b) in seq.iter().zip(&par) {
                let d = a.end_value().minus(b.end_value()).norm() / a.end_value().norm();
                assert!(d < 1e-9, "R={} diff {}", r, d);
            }
            // pipelined steps never need fewer iterations than their predecessor
            for w in rep.steps.windows(2).filter(|w| w[1].step % r != 0) {
                assert!(w[1].iterations >= w[0].iterations);
            }
        }
    }

    #[test]
    fn report_csv_rows() {
        let (_, rep) = run(2, 4);
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 1 + 4 * 2);
        assert!(csv.starts_with("step,level,sweeps"));
    }
}
