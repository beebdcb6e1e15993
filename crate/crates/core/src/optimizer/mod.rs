//! Reduced-space descent methods over time-distributed controls.

pub mod control;

use std::fmt::Write as _;
use std::time::Instant;

pub use control::{time_inner, time_inner_with, time_norm, ControlTrajectory, TimeQuadrature};

use crate::error::{Error, Result};
use crate::gradient::GradientEvaluator;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BetaRule {
    FletcherReeves,
    PolakRibierePolyak,
    DaiYuan,
}

impl BetaRule {
    pub fn name(self) -> &'static str {
        match self {
            BetaRule::FletcherReeves => "fr",
            BetaRule::PolakRibierePolyak => "prp",
            BetaRule::DaiYuan => "dy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    SteepestDescent,
    Ncg(BetaRule),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::SteepestDescent => "sd",
            Method::Ncg(BetaRule::FletcherReeves) => "ncg-fr",
            Method::Ncg(BetaRule::PolakRibierePolyak) => "ncg-prp",
            Method::Ncg(BetaRule::DaiYuan) => "ncg-dy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sd" => Some(Method::SteepestDescent),
            "ncg-fr" | "fr" => Some(Method::Ncg(BetaRule::FletcherReeves)),
            "ncg-prp" | "prp" => Some(Method::Ncg(BetaRule::PolakRibierePolyak)),
            "ncg-dy" | "dy" => Some(Method::Ncg(BetaRule::DaiYuan)),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineSearchKind {
    Armijo,
    StrongWolfe,
}

impl LineSearchKind {
    pub fn name(self) -> &'static str {
        match self {
            LineSearchKind::Armijo => "armijo",
            LineSearchKind::StrongWolfe => "strong_wolfe",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "armijo" => Some(LineSearchKind::Armijo),
            "strong_wolfe" | "wolfe" => Some(LineSearchKind::StrongWolfe),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    pub linesearch: LineSearchKind,
    pub c1: f64,
    pub c2: f64,
    pub max_iters: usize,
    pub initial_step: f64,
    pub gradient_tol: f64,
    pub max_trials: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::SteepestDescent,
            linesearch: LineSearchKind::Armijo,
            c1: 1e-4,
            c2: 0.1,
            max_iters: 50,
            initial_step: 1.0,
            gradient_tol: 0.0,
            max_trials: 30,
        }
    }
}

impl OptimizerConfig {
    pub fn steepest_descent(max_iters: usize) -> Self {
        Self {
            max_iters,
            ..Self::default()
        }
    }

    pub fn ncg(rule: BetaRule, max_iters: usize) -> Self {
        Self {
            method: Method::Ncg(rule),
            linesearch: LineSearchKind::StrongWolfe,
            max_iters,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        if matches!(self.method, Method::Ncg(_)) && self.linesearch != LineSearchKind::StrongWolfe {
            return Err(Error::Config("nonlinear CG needs the strong Wolfe line search".into()));
        }
        if !(self.initial_step > 0.0) || self.max_trials == 0 {
            return Err(Error::Config("initial step and trial limit must be positive".into()));
        }
        Ok(())
    }
}

/// What the optimizer needs from the reduced problem.
pub trait ReducedObjective {
    fn objective(&mut self, u: &ControlTrajectory) -> Result<f64>;
    fn gradient(&mut self, u: &ControlTrajectory) -> Result<(f64, ControlTrajectory)>;

    fn inner(&self, a: &ControlTrajectory, b: &ControlTrajectory) -> Result<f64> {
        time_inner(a, b)
    }

    /// Cumulative (state, adjoint) sweep counts.
    fn sweeps(&self) -> (usize, usize) {
        (0, 0)
    }

    fn control_error(&self, _u: &ControlTrajectory) -> Option<f64> {
        None
    }
}

impl ReducedObjective for GradientEvaluator<'_> {
    fn objective(&mut self, u: &ControlTrajectory) -> Result<f64> {
        GradientEvaluator::objective(self, u)
    }

    fn gradient(&mut self, u: &ControlTrajectory) -> Result<(f64, ControlTrajectory)> {
        let e = self.evaluate(u)?;
        Ok((e.objective, e.gradient))
    }

    fn inner(&self, a: &ControlTrajectory, b: &ControlTrajectory) -> Result<f64> {
        let r = self.decomposition().num_workers;
        time_inner_with(&a.with_workers(r)?, &b.with_workers(r)?, self.settings().quadrature)
    }

    fn sweeps(&self) -> (usize, usize) {
        let c = self.counters();
        (c.state_sweeps, c.adjoint_sweeps)
    }

    fn control_error(&self, u: &ControlTrajectory) -> Option<f64> {
        self.problem().control_error(u, self.settings().quadrature).ok().flatten()
    }
}

pub fn beta(
    g_new: &ControlTrajectory,
    g_old: &ControlTrajectory,
    d_old: &ControlTrajectory,
    rule: BetaRule,
) -> Result<f64> {
    beta_with(g_new, g_old, d_old, rule, time_inner)
}

fn beta_with(
    g_new: &ControlTrajectory,
    g_old: &ControlTrajectory,
    d_old: &ControlTrajectory,
    rule: BetaRule,
    inner: impl Fn(&ControlTrajectory, &ControlTrajectory) -> Result<f64>,
) -> Result<f64> {
    let degenerate = |x: f64| !x.is_finite() || x.abs() < f64::MIN_POSITIVE;
    match rule {
        BetaRule::FletcherReeves | BetaRule::PolakRibierePolyak => {
            let den = inner(g_old, g_old)?;
            if degenerate(den) {
                return Err(Error::BetaDenominator(rule.name()));
            }
            let num = match rule {
                BetaRule::FletcherReeves => inner(g_new, g_new)?,
                _ => inner(g_new, &g_new.minus(g_old)?)?,
            };
            Ok(num / den)
        }
        BetaRule::DaiYuan => {
            let den = inner(d_old, &g_new.minus(g_old)?)?;
            if degenerate(den) {
                return Err(Error::BetaDenominator(rule.name()));
            }
            Ok(inner(g_new, g_new)? / den)
        }
    }
}

/// Accepted line-search point.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub alpha: f64,
    pub u: ControlTrajectory,
    pub objective: f64,
    pub gradient: ControlTrajectory,
    pub trials: usize,
}

/// Finds a step along `d` from `u`, where `j_u` and `g_u` are the objective
/// and gradient at `u`. Armijo trials only solve the state; strong Wolfe
/// trials evaluate the gradient.
pub fn line_search<E: ReducedObjective + ?Sized>(
    u: &ControlTrajectory,
    d: &ControlTrajectory,
    j_u: f64,
    g_u: &ControlTrajectory,
    alpha0: f64,
    eval: &mut E,
    config: &OptimizerConfig,
) -> Result<StepResult> {
    let slope = eval.inner(g_u, d)?;
    if !(slope < 0.0) {
        return Err(Error::NotDescent(slope));
    }
    match config.linesearch {
        LineSearchKind::Armijo => armijo(u, d, j_u, slope, alpha0, eval, config),
        LineSearchKind::StrongWolfe => strong_wolfe(u, d, j_u, slope, alpha0, eval, config),
    }
}

fn point(u: &ControlTrajectory, d: &ControlTrajectory, alpha: f64) -> Result<ControlTrajectory> {
    let mut out = u.clone();
    out.axpy(alpha, d)?;
    Ok(out)
}

fn armijo<E: ReducedObjective + ?Sized>(
    u: &ControlTrajectory,
    d: &ControlTrajectory,
    j0: f64,
    slope: f64,
    alpha0: f64,
    eval: &mut E,
    config: &OptimizerConfig,
) -> Result<StepResult> {
    let mut alpha = alpha0;
    for trial in 1..=config.max_trials {
        let ut = point(u, d, alpha)?;
        let jt = eval.objective(&ut)?;
        if jt <= j0 + config.c1 * alpha * slope {
            // the evaluator still holds this trial's state solve
            let (objective, gradient) = eval.gradient(&ut)?;
            return Ok(StepResult {
                alpha,
                u: ut,
                objective,
                gradient,
                trials: trial,
            });
        }
        alpha *= 0.5;
    }
    Err(Error::LineSearch(config.max_trials))
}

struct Trial {
    alpha: f64,
    phi: f64,
    dphi: f64,
    u: ControlTrajectory,
    g: ControlTrajectory,
}

fn strong_wolfe<E: ReducedObjective + ?Sized>(
    u: &ControlTrajectory,
    d: &ControlTrajectory,
    phi0: f64,
    dphi0: f64,
    alpha0: f64,
    eval: &mut E,
    config: &OptimizerConfig,
) -> Result<StepResult> {
    let (c1, c2) = (config.c1, config.c2);
    let mut trials = 0;
    let try_alpha = |alpha: f64, trials: &mut usize, eval: &mut E| -> Result<Trial> {
        *trials += 1;
        let ut = point(u, d, alpha)?;
        let (phi, g) = eval.gradient(&ut)?;
        let dphi = eval.inner(&g, d)?;
        Ok(Trial {
            alpha,
            phi,
            dphi,
            u: ut,
            g,
        })
    };
    let accept = |t: Trial, trials: usize| StepResult {
        alpha: t.alpha,
        u: t.u,
        objective: t.phi,
        gradient: t.g,
        trials,
    };
    let armijo_ok = |t: &Trial| t.phi <= phi0 + c1 * t.alpha * dphi0 && t.phi.is_finite();
    let curvature_ok = |t: &Trial| t.dphi.abs() <= -c2 * dphi0;

    let mut prev: Option<Trial> = None;
    let mut alpha = alpha0;
    let (mut lo, mut hi) = loop {
        if trials >= config.max_trials {
            return Err(Error::LineSearch(trials));
        }
        let t = try_alpha(alpha, &mut trials, eval)?;
        let prev_phi = prev.as_ref().map_or(phi0, |p| p.phi);
        if !armijo_ok(&t) || (prev.is_some() && t.phi >= prev_phi) {
            let lo = prev.unwrap_or(Trial {
                alpha: 0.0,
                phi: phi0,
                dphi: dphi0,
                u: u.clone(),
                g: u.clone(),
            });
            break (lo, t);
        }
        if curvature_ok(&t) {
            return Ok(accept(t, trials));
        }
        if t.dphi >= 0.0 {
            let hi = prev.unwrap_or(Trial {
                alpha: 0.0,
                phi: phi0,
                dphi: dphi0,
                u: u.clone(),
                g: u.clone(),
            });
            break (t, hi);
        }
        alpha = 2.0 * t.alpha;
        prev = Some(t);
    };

    // zoom: `lo` satisfies sufficient decrease and has the lowest objective
    // seen, and the minimizer lies between `lo` and `hi`
    loop {
        if trials >= config.max_trials {
            return Err(Error::LineSearch(trials));
        }
        let (a, b) = (lo.alpha, hi.alpha);
        let width = b - a;
        // minimizer of the quadratic through phi(lo), phi'(lo), phi(hi)
        let denom = 2.0 * (hi.phi - lo.phi - lo.dphi * width);
        let mut alpha = if denom > 0.0 { a - lo.dphi * width * width / denom } else { a + 0.5 * width };
        let (left, right) = if a < b { (a, b) } else { (b, a) };
        let margin = 0.1 * (right - left);
        if !alpha.is_finite() || alpha < left + margin || alpha > right - margin {
            alpha = 0.5 * (a + b);
        }
        let t = try_alpha(alpha, &mut trials, eval)?;
        if !armijo_ok(&t) || t.phi >= lo.phi {
            hi = t;
        } else {
            if curvature_ok(&t) {
                return Ok(accept(t, trials));
            }
            if t.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                hi = std::mem::replace(&mut lo, t);
            } else {
                lo = t;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
    /// Step that produced this iterate (0 for the first row).
    pub alpha: f64,
    /// `β` used to build the direction leaving this iterate.
    pub beta: f64,
    /// `(g, d)` for the direction leaving this iterate.
    pub slope: f64,
    pub state_sweeps: usize,
    pub adjoint_sweeps: usize,
    pub wall_time: f64,
    pub control_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    MaxIterations,
    GradientTolerance,
    LineSearchFailure(String),
    SolverFailure(String),
}

impl Termination {
    pub fn name(&self) -> String {
        match self {
            Termination::MaxIterations => "max_iterations".into(),
            Termination::GradientTolerance => "gradient_tolerance".into(),
            Termination::LineSearchFailure(e) => format!("line_search_failure: {}", e),
            Termination::SolverFailure(e) => format!("solver_failure: {}", e),
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub u: ControlTrajectory,
    pub history: Vec<HistoryRow>,
    pub termination: Termination,
}

impl OptimizeResult {
    pub fn final_objective(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.objective)
    }
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from("iteration,objective,grad_norm,alpha,beta,slope,state_sweeps,adjoint_sweeps,wall_time,control_error\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{:.6},{}",
            r.iteration,
            r.objective,
            r.grad_norm,
            r.alpha,
            r.beta,
            r.slope,
            r.state_sweeps,
            r.adjoint_sweeps,
            r.wall_time,
            r.control_error.map_or(String::new(), |e| format!("{:.17e}", e))
        );
    }
    s
}

/// `u_{k+1} = u_k + α_k d_k` with `d_0 = −∇j(u_0)` and
/// `d_{k+1} = −∇j(u_{k+1}) + β_k d_k`.
pub fn optimize<E: ReducedObjective + ?Sized>(
    u0: &ControlTrajectory,
    eval: &mut E,
    config: &OptimizerConfig,
) -> Result<OptimizeResult> {
    config.validate()?;
    let start = Instant::now();
    let mut u = u0.clone();
    let (mut j, mut g) = eval.gradient(&u)?;
    let mut d = g.scaled(-1.0);
    let mut slope = eval.inner(&g, &d)?;
    let mut history = Vec::new();
    let row = |k: usize, j: f64, gn: f64, alpha: f64, beta: f64, slope: f64, eval: &E, u: &ControlTrajectory| {
        let (s, a) = eval.sweeps();
        HistoryRow {
            iteration: k,
            objective: j,
            grad_norm: gn,
            alpha,
            beta,
            slope,
            state_sweeps: s,
            adjoint_sweeps: a,
            wall_time: start.elapsed().as_secs_f64(),
            control_error: eval.control_error(u),
        }
    };
    let mut gnorm = eval.inner(&g, &g)?.max(0.0).sqrt();
    history.push(row(0, j, gnorm, 0.0, 0.0, slope, eval, &u));
    let mut last_step: Option<(f64, f64)> = None;
    let mut termination = Termination::MaxIterations;
    for k in 0..config.max_iters {
        if gnorm <= config.gradient_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        if !(slope < 0.0) {
            d = g.scaled(-1.0);
            slope = -gnorm * gnorm;
        }
        let alpha0 = match last_step {
            Some((a, s)) if (a * s / slope).is_finite() && a * s / slope > 0.0 => a * s / slope,
            _ => config.initial_step,
        };
        let mut result = line_search(&u, &d, j, &g, alpha0, eval, config);
        if matches!(result, Err(Error::LineSearch(_)) | Err(Error::NotDescent(_))) {
            // one retry along steepest descent
            d = g.scaled(-1.0);
            slope = -gnorm * gnorm;
            result = line_search(&u, &d, j, &g, config.initial_step, eval, config);
        }
        let step = match result {
            Ok(s) => s,
            Err(e @ (Error::LineSearch(_) | Error::NotDescent(_))) => {
                termination = Termination::LineSearchFailure(e.to_string());
                break;
            }
            Err(e) => {
                termination = Termination::SolverFailure(e.to_string());
                break;
            }
        };
        last_step = Some((step.alpha, slope));
        let beta = match config.method {
            Method::SteepestDescent => 0.0,
            Method::Ncg(rule) => match beta_with(&step.gradient, &g, &d, rule, |a, b| eval.inner(a, b)) {
                Ok(b) if b.is_finite() && b > 0.0 => b,
                _ => 0.0,
            },
        };
        u = step.u;
        j = step.objective;
        g = step.gradient;
        let mut nd = g.scaled(-1.0);
        if beta != 0.0 {
            nd.axpy(beta, &d)?;
        }
        d = nd;
        slope = eval.inner(&g, &d)?;
        gnorm = eval.inner(&g, &g)?.max(0.0).sqrt();
        history.push(row(k + 1, j, gnorm, step.alpha, beta, slope, eval, &u));
        if !u.is_finite() || !j.is_finite() {
            termination = Termination::SolverFailure("non-finite iterate".into());
            break;
        }
    }
    Ok(OptimizeResult { u, history, termination })
}
