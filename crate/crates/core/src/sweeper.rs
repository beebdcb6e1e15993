//! Single-level SDC sweeps over the collocation nodes of one time step.
//!
//! All sweeps use the node-from-start form
//!
//! ```text
//! y_m = y0 + dt*sum_j QI[m,j] (FI_j' - FI_j) + dt*sum_j QE[m,j] (FE_j' - FE_j)
//!          + dt*sum_j Q[m,j] F_j + tau_m
//! ```
//!
//! where primed values belong to the new iterate. The right-hand side is
//! `F(y) = kappa*Lap(y) - shift*y - R(y) + s`, with `s` a node-sampled
//! source and `R` an optional pointwise reaction.

use crate::error::{Error, Result};
use crate::field::{GridSpec, SpatialField};
use crate::quadrature::{node_interpolation_matrix, node_restriction_matrix, Matrix, QuadratureRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweeperKind {
    /// Reaction explicit, diffusion implicit.
    Imex,
    /// Diffusion solve followed by a linearised reaction solve.
    MisdcLagged,
    /// Diffusion solve followed by a pointwise damped Newton reaction solve.
    MisdcNewton,
}

impl SweeperKind {
    pub fn name(self) -> &'static str {
        match self {
            SweeperKind::Imex => "imex",
            SweeperKind::MisdcLagged => "misdc_lagged",
            SweeperKind::MisdcNewton => "misdc_newton",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "imex" => Some(SweeperKind::Imex),
            "misdc_lagged" | "lagged" => Some(SweeperKind::MisdcLagged),
            "misdc_newton" | "newton" => Some(SweeperKind::MisdcNewton),
            _ => None,
        }
    }

    fn splits_reaction(self) -> bool {
        self != SweeperKind::Imex
    }
}

/// Pointwise reaction term `R(y)`, entering the right-hand side as `-R(y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reaction {
    None,
    /// `R(y) = gamma/3 y^3 - y`.
    Cubic { gamma: f64 },
    /// `R(y) = c(x, t) y` with `c` supplied per node by the forcing.
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhsSplit {
    pub kappa: f64,
    pub shift: f64,
    pub reaction: Reaction,
}

impl RhsSplit {
    pub fn diffusion(kappa: f64) -> Self {
        Self {
            kappa,
            shift: 0.0,
            reaction: Reaction::None,
        }
    }

    pub fn nagumo(kappa: f64, gamma: f64) -> Self {
        Self {
            kappa,
            shift: 0.0,
            reaction: Reaction::Cubic { gamma },
        }
    }

    /// Linear equation with a space-time varying coefficient `c`:
    /// `F(y) = kappa*Lap(y) - c*y + s`.
    pub fn linear_coefficient(kappa: f64) -> Self {
        Self {
            kappa,
            shift: 0.0,
            reaction: Reaction::Linear,
        }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self.reaction, Reaction::Cubic { .. })
    }

    /// `kappa*Lap(y) - shift*y`.
    pub fn implicit_linear(&self, y: &SpatialField) -> SpatialField {
        let mut out = y.laplacian();
        out.scale(self.kappa);
        if self.shift != 0.0 {
            out.axpy(-self.shift, y);
        }
        out
    }

    /// `R(y)`, or `None` when there is no reaction.
    pub fn reaction_value(&self, y: &SpatialField, coeff: Option<&SpatialField>) -> Result<Option<SpatialField>> {
        match self.reaction {
            Reaction::None => Ok(None),
            Reaction::Cubic { gamma } => Ok(Some(y.map(|v| gamma / 3.0 * v * v * v - v))),
            Reaction::Linear => {
                let c = coeff.ok_or_else(|| Error::Sweeper("linear reaction needs a coefficient field".into()))?;
                let mut out = y.clone();
                for (o, cv) in out.values_mut().iter_mut().zip(c.values()) {
                    *o *= cv;
                }
                Ok(Some(out))
            }
        }
    }

    /// The unsplit right-hand side at one node.
    pub fn full(&self, y: &SpatialField, forcing: &StepForcing, m: usize) -> Result<SpatialField> {
        let mut f = self.implicit_linear(y);
        if let Some(r) = self.reaction_value(y, forcing.coeff(m))? {
            f.axpy(-1.0, &r);
        }
        if let Some(s) = forcing.source(m) {
            f.axpy(1.0, s);
        }
        Ok(f)
    }
}

/// Node-sampled data entering the right-hand side of one step on one level.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepForcing {
    pub source: Option<Vec<SpatialField>>,
    pub coeff: Option<Vec<SpatialField>>,
}

impl StepForcing {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_source(source: Vec<SpatialField>) -> Self {
        Self {
            source: Some(source),
            coeff: None,
        }
    }

    pub fn source(&self, m: usize) -> Option<&SpatialField> {
        self.source.as_ref().map(|s| &s[m])
    }

    pub fn coeff(&self, m: usize) -> Option<&SpatialField> {
        self.coeff.as_ref().map(|c| &c[m])
    }

    /// Forcing on the coarse side of `transfer`.
    pub fn restrict(&self, transfer: &LevelTransfer) -> StepForcing {
        StepForcing {
            source: self.source.as_ref().map(|s| transfer.restrict_nodes(s)),
            coeff: self.coeff.as_ref().map(|c| transfer.restrict_nodes(c)),
        }
    }
}

/// Solution values and split right-hand side evaluations at all nodes of
/// one step on one level.
#[derive(Clone, Debug)]
pub struct NodeTrajectory {
    pub y: Vec<SpatialField>,
    /// Explicit part (reaction for IMEX, plus the source).
    pub fe: Vec<SpatialField>,
    /// Implicit linear part.
    pub fi: Vec<SpatialField>,
    /// Implicit reaction part `-R(y)`; empty unless an MISDC sweeper with a
    /// reaction is in use.
    pub fr: Vec<SpatialField>,
    /// FAS correction, coarse levels only.
    pub tau: Option<Vec<SpatialField>>,
    pub residual: f64,
}

impl NodeTrajectory {
    /// All nodes set to `y0`; evaluations are left at zero.
    pub fn spread(y0: &SpatialField, num_nodes: usize) -> Self {
        Self::from_values(vec![y0.clone(); num_nodes])
    }

    pub fn from_values(y: Vec<SpatialField>) -> Self {
        let zero = SpatialField::zeros(*y[0].grid());
        let n = y.len();
        Self {
            y,
            fe: vec![zero.clone(); n],
            fi: vec![zero; n],
            fr: Vec::new(),
            tau: None,
            residual: f64::INFINITY,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.y.len()
    }

    pub fn grid(&self) -> &GridSpec {
        self.y[0].grid()
    }

    pub fn end_value(&self) -> &SpatialField {
        self.y.last().unwrap()
    }

    /// Total right-hand side at node `m`.
    pub fn f_total(&self, m: usize) -> SpatialField {
        let mut f = self.fe[m].plus(&self.fi[m]);
        if !self.fr.is_empty() {
            f.axpy(1.0, &self.fr[m]);
        }
        f
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iters: usize,
    pub max_halvings: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iters: 50,
            max_halvings: 8,
        }
    }
}

/// Solves `y + a*(gamma/3 y^3 - y) = b` by damped Newton from `x0`, with
/// the natural monotonicity test deciding on step halving.
pub fn newton_cubic(a: f64, gamma: f64, b: f64, x0: f64, settings: &NewtonSettings) -> std::result::Result<f64, f64> {
    let g = |y: f64| y + a * (gamma / 3.0 * y * y * y - y) - b;
    let dg = |y: f64| 1.0 + a * (gamma * y * y - 1.0);
    let mut x = x0;
    let mut last = f64::INFINITY;
    for _ in 0..settings.max_iters {
        let d = dg(x);
        if d == 0.0 || !d.is_finite() {
            return Err(last);
        }
        let dx = -g(x) / d;
        last = dx.abs();
        if !dx.is_finite() {
            return Err(last);
        }
        if dx.abs() <= settings.tol {
            return Ok(x + dx);
        }
        let mut lambda = 1.0;
        for _ in 0..=settings.max_halvings {
            let trial = x + lambda * dx;
            // simplified Newton correction reuses the old derivative
            let bar = -g(trial) / d;
            if bar.abs() <= (1.0 - lambda / 4.0) * dx.abs() {
                break;
            }
            lambda *= 0.5;
        }
        x += lambda * dx;
    }
    Err(last)
}

/// Time and space transfer between two adjacent levels.
#[derive(Clone, Debug)]
pub struct LevelTransfer {
    pub coarse_grid: GridSpec,
    pub fine_grid: GridSpec,
    restrict: Matrix,
    interp: Matrix,
}

impl LevelTransfer {
    pub fn new(coarse: (&GridSpec, &QuadratureRule), fine: (&GridSpec, &QuadratureRule)) -> Result<Self> {
        if coarse.0.points().iter().zip(fine.0.points()).any(|(c, f)| c > f) {
            return Err(Error::Hierarchy(format!(
                "coarse grid {:?} finer than fine grid {:?}",
                coarse.0.points(),
                fine.0.points()
            )));
        }
        // validates compatibility of the two grids
        SpatialField::zeros(*coarse.0).transfer(fine.0)?;
        Ok(Self {
            coarse_grid: *coarse.0,
            fine_grid: *fine.0,
            restrict: node_restriction_matrix(fine.1, coarse.1)?,
            interp: node_interpolation_matrix(fine.1, coarse.1)?,
        })
    }

    pub fn restrict_field(&self, f: &SpatialField) -> SpatialField {
        f.transfer(&self.coarse_grid).expect("grids validated at construction")
    }

    pub fn interpolate_field(&self, f: &SpatialField) -> SpatialField {
        f.transfer(&self.fine_grid).expect("grids validated at construction")
    }

    /// Fine node values to coarse nodes: fine interpolant evaluated at the
    /// coarse nodes, then spectrally truncated.
    pub fn restrict_nodes(&self, fine: &[SpatialField]) -> Vec<SpatialField> {
        combine(&self.restrict, fine, |f| self.restrict_field(f), &self.coarse_grid)
    }

    pub fn interpolate_nodes(&self, coarse: &[SpatialField]) -> Vec<SpatialField> {
        let up: Vec<SpatialField> = coarse.iter().map(|f| self.interpolate_field(f)).collect();
        combine(&self.interp, &up, |f| f.clone(), &self.fine_grid)
    }
}

fn combine(
    m: &Matrix,
    src: &[SpatialField],
    map: impl Fn(&SpatialField) -> SpatialField,
    grid: &GridSpec,
) -> Vec<SpatialField> {
    let mut cache: Vec<Option<SpatialField>> = vec![None; src.len()];
    (0..m.rows())
        .map(|r| {
            let mut out = SpatialField::zeros(*grid);
            for c in 0..m.cols() {
                let w = m[(r, c)];
                if w == 0.0 {
                    continue;
                }
                let f = cache[c].get_or_insert_with(|| map(&src[c]));
                if w == 1.0 {
                    out.axpy(1.0, f);
                } else {
                    out.axpy(w, f);
                }
            }
            out
        })
        .collect()
}

/// `dt * sum_j Q[m,j] F_j` for every node `m`.
pub fn integrate(traj: &NodeTrajectory, rule: &QuadratureRule, dt: f64) -> Vec<SpatialField> {
    let n = traj.num_nodes();
    let f: Vec<SpatialField> = (0..n).map(|m| traj.f_total(m)).collect();
    let q = rule.q();
    (0..n)
        .map(|m| {
            let mut out = SpatialField::zeros(*traj.grid());
            for (j, fj) in f.iter().enumerate() {
                let w = dt * q[(m, j)];
                if w != 0.0 {
                    out.axpy(w, fj);
                }
            }
            out
        })
        .collect()
}

/// Max over nodes of the L2 norm of the collocation defect
/// `y0 + dt*Q F + tau - y`.
pub fn residual(traj: &NodeTrajectory, y0: &SpatialField, rule: &QuadratureRule, dt: f64) -> f64 {
    let int = integrate(traj, rule, dt);
    let mut worst: f64 = 0.0;
    for (m, im) in int.iter().enumerate() {
        let mut d = y0.plus(im);
        if let Some(tau) = &traj.tau {
            d.axpy(1.0, &tau[m]);
        }
        d.axpy(-1.0, &traj.y[m]);
        worst = worst.max(d.norm());
    }
    worst
}

/// Absolute-or-relative residual test.
pub fn residual_converged(residual: f64, y0_norm: f64, atol: f64, rtol: f64) -> bool {
    residual < atol || residual < rtol * y0_norm
}

/// FAS correction for `coarse`, which must hold the restricted fine values
/// with evaluations consistent with them.
pub fn fas_tau(
    fine: &NodeTrajectory,
    fine_rule: &QuadratureRule,
    coarse: &NodeTrajectory,
    coarse_rule: &QuadratureRule,
    transfer: &LevelTransfer,
    dt: f64,
) -> Result<Vec<SpatialField>> {
    if fine.num_nodes() != fine_rule.num_nodes()
        || coarse.num_nodes() != coarse_rule.num_nodes()
        || fine.grid() != &transfer.fine_grid
        || coarse.grid() != &transfer.coarse_grid
    {
        return Err(Error::Hierarchy("trajectories do not match the level transfer".into()));
    }
    let mut fint = integrate(fine, fine_rule, dt);
    if let Some(tau) = &fine.tau {
        for (i, t) in fint.iter_mut().zip(tau) {
            i.axpy(1.0, t);
        }
    }
    let mut tau = transfer.restrict_nodes(&fint);
    let cint = integrate(coarse, coarse_rule, dt);
    for (t, c) in tau.iter_mut().zip(&cint) {
        t.axpy(-1.0, c);
    }
    Ok(tau)
}

/// A configured sweeper for one level.
#[derive(Clone, Copy, Debug)]
pub struct Sweeper<'a> {
    pub rule: &'a QuadratureRule,
    pub rhs: &'a RhsSplit,
    pub kind: SweeperKind,
    pub newton: NewtonSettings,
}

impl<'a> Sweeper<'a> {
    pub fn new(rule: &'a QuadratureRule, rhs: &'a RhsSplit, kind: SweeperKind) -> Self {
        Self {
            rule,
            rhs,
            kind,
            newton: NewtonSettings::default(),
        }
    }

    fn split_reaction(&self) -> bool {
        self.kind.splits_reaction() && self.rhs.reaction != Reaction::None
    }

    /// Evaluates `(fe, fi, fr)` at one node.
    pub fn evaluate_node(
        &self,
        y: &SpatialField,
        forcing: &StepForcing,
        m: usize,
    ) -> Result<(SpatialField, SpatialField, Option<SpatialField>)> {
        let fi = self.rhs.implicit_linear(y);
        let (fe, fr) = self.explicit_and_reaction(y, forcing, m)?;
        Ok((fe, fi, fr))
    }

    fn explicit_and_reaction(
        &self,
        y: &SpatialField,
        forcing: &StepForcing,
        m: usize,
    ) -> Result<(SpatialField, Option<SpatialField>)> {
        let mut fe = match forcing.source(m) {
            Some(s) => s.clone(),
            None => SpatialField::zeros(*y.grid()),
        };
        let r = self.rhs.reaction_value(y, forcing.coeff(m))?;
        let fr = match r {
            Some(r) if self.split_reaction() => Some(r.scaled(-1.0)),
            Some(r) => {
                fe.axpy(-1.0, &r);
                None
            }
            None => None,
        };
        Ok((fe, fr))
    }

    fn store(traj: &mut NodeTrajectory, m: usize, fe: SpatialField, fi: SpatialField, fr: Option<SpatialField>) {
        traj.fe[m] = fe;
        traj.fi[m] = fi;
        if let Some(fr) = fr {
            if traj.fr.is_empty() {
                traj.fr = vec![SpatialField::zeros(*traj.grid()); traj.num_nodes()];
            }
            traj.fr[m] = fr;
        }
    }

    /// Re-evaluates the right-hand side at every node.
    pub fn evaluate(&self, traj: &mut NodeTrajectory, forcing: &StepForcing) -> Result<()> {
        if !self.split_reaction() {
            traj.fr.clear();
        }
        for m in 0..traj.num_nodes() {
            let (fe, fi, fr) = self.evaluate_node(&traj.y[m], forcing, m)?;
            Self::store(traj, m, fe, fi, fr);
        }
        Ok(())
    }

    /// One sweep over nodes 1..=M, in place; updates `traj.residual`.
    pub fn sweep(&self, traj: &mut NodeTrajectory, y0: &SpatialField, forcing: &StepForcing, dt: f64) -> Result<()> {
        let rule = self.rule;
        if traj.num_nodes() != rule.num_nodes() {
            return Err(Error::Sweeper(format!(
                "trajectory has {} nodes, rule {}",
                traj.num_nodes(),
                rule.num_nodes()
            )));
        }
        let split = self.split_reaction();
        if split != !traj.fr.is_empty() {
            self.evaluate(traj, forcing)?;
        }
        let (qi, qe) = (rule.qi(), rule.qe());
        let integral = integrate(traj, rule, dt);
        let old_fe = traj.fe.clone();
        let old_fi = traj.fi.clone();
        let old_fr = traj.fr.clone();

        traj.y[0] = y0.clone();
        let (fe, fi, fr) = self.evaluate_node(y0, forcing, 0)?;
        Self::store(traj, 0, fe, fi, fr);

        for m in 1..traj.num_nodes() {
            let mut rhs = y0.plus(&integral[m]);
            if let Some(tau) = &traj.tau {
                rhs.axpy(1.0, &tau[m]);
            }
            for j in 0..m {
                let e = dt * qe[(m, j)];
                if e != 0.0 {
                    rhs.axpy(e, &traj.fe[j]);
                    rhs.axpy(-e, &old_fe[j]);
                }
                let i = dt * qi[(m, j)];
                if i != 0.0 {
                    rhs.axpy(i, &traj.fi[j]);
                    rhs.axpy(-i, &old_fi[j]);
                    if split {
                        rhs.axpy(i, &traj.fr[j]);
                        rhs.axpy(-i, &old_fr[j]);
                    }
                }
            }
            let a = dt * qi[(m, m)];
            rhs.axpy(-a, &old_fi[m]);
            if !split {
                let y = rhs.implicit_solve(a, self.rhs.kappa, self.rhs.shift)?;
                // F_I(y) from the solved equation y - a F_I(y) = rhs
                let fi = y.minus(&rhs).scaled(1.0 / a);
                let (fe, _) = self.explicit_and_reaction(&y, forcing, m)?;
                traj.y[m] = y;
                Self::store(traj, m, fe, fi, None);
                continue;
            }
            // diffusion solve with the reaction lagged at iterate k
            let ystar = rhs.implicit_solve(a, self.rhs.kappa, self.rhs.shift)?;
            let mut b = ystar.clone();
            b.axpy(-a, &old_fr[m]);
            let y = self.reaction_solve(&b, &ystar, &traj.y[m], a, forcing, m)?;
            let (fe, fi, fr) = self.evaluate_node(&y, forcing, m)?;
            traj.y[m] = y;
            Self::store(traj, m, fe, fi, fr);
        }
        traj.residual = residual(traj, y0, rule, dt);
        Ok(())
    }

    /// Pointwise solve of `y + a R(y) = b`.
    fn reaction_solve(
        &self,
        b: &SpatialField,
        ystar: &SpatialField,
        previous: &SpatialField,
        a: f64,
        forcing: &StepForcing,
        m: usize,
    ) -> Result<SpatialField> {
        let mut y = b.clone();
        match self.rhs.reaction {
            Reaction::None => {}
            Reaction::Linear => {
                let c = forcing
                    .coeff(m)
                    .ok_or_else(|| Error::Sweeper("linear reaction needs a coefficient field".into()))?;
                for (v, cv) in y.values_mut().iter_mut().zip(c.values()) {
                    *v /= 1.0 + a * cv;
                }
            }
            Reaction::Cubic { gamma } => match self.kind {
                SweeperKind::MisdcLagged => {
                    for (v, s) in y.values_mut().iter_mut().zip(ystar.values()) {
                        *v /= 1.0 + a * (gamma / 3.0 * s * s - 1.0);
                    }
                }
                _ => {
                    for (p, (v, x0)) in y.values_mut().iter_mut().zip(previous.values()).enumerate() {
                        *v = newton_cubic(a, gamma, *v, *x0, &self.newton).map_err(|correction| {
                            Error::NewtonFailure {
                                node: m,
                                point: p,
                                correction,
                            }
                        })?;
                    }
                }
            },
        }
        Ok(y)
    }
}
