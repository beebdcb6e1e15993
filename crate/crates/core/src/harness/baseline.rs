//! Sequential first-order IMEX Euler reference for the Nagumo problem.
//!
//! Control and target are constant on each step. The state is stepped
//! forward with implicit diffusion and explicit reaction, the adjoint is
//! stepped the same way in reflected time. With
//! `J = ½ Σ dt ‖y_{n+1} − y_d,n‖² + (λ/2) Σ dt ‖u_n‖²` the reflected scheme
//! is exactly the discrete adjoint, so `λu − p` is the gradient of the
//! discrete objective in the `dt`-weighted inner product.

use crate::error::{Error, Result};
use crate::field::{GridSpec, SpatialField};
use crate::optimizer::{ControlTrajectory, ReducedObjective};
use crate::pfasst::TimeDecomposition;
use crate::problems::{nagumo_initial, nagumo_steady_source, NAGUMO_END_TIME, NAGUMO_FREEZE_TIME};

fn reaction(y: &SpatialField, gamma: f64) -> SpatialField {
    y.map(|v| gamma / 3.0 * v * v * v - v)
}

fn check(f: &SpatialField, what: &str, n: usize) -> Result<()> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(Error::Sweeper(format!("IMEX Euler {} blew up at step {}", what, n)))
    }
}

/// `y_{n+1} = (I − dt Δ)^{-1} (y_n + dt (u_n − R(y_n)))`
pub fn imex_euler_step(y: &SpatialField, u: Option<&SpatialField>, gamma: f64, dt: f64) -> Result<SpatialField> {
    let mut rhs = y.clone();
    rhs.axpy(-dt, &reaction(y, gamma));
    if let Some(u) = u {
        rhs.axpy(dt, u);
    }
    rhs.implicit_solve(dt, 1.0, 0.0)
}

pub struct EulerBaseline {
    pub gamma: f64,
    pub lambda: f64,
    pub dt: f64,
    y0: SpatialField,
    /// Target on step `n`, compared with `y_{n+1}`.
    target: Vec<SpatialField>,
    exact: ControlTrajectory,
    dec: TimeDecomposition,
    cached: Option<(ControlTrajectory, Vec<SpatialField>)>,
    state_steps: usize,
    adjoint_steps: usize,
}

impl EulerBaseline {
    /// Builds targets and the exact control from the uncontrolled Euler
    /// trajectory on `grid`.
    pub fn new(grid: GridSpec, gamma: f64, lambda: f64, dt: f64) -> Result<Self> {
        let n = (NAGUMO_END_TIME / dt).round() as usize;
        let nf = (NAGUMO_FREEZE_TIME / dt).round() as usize;
        if n == 0 || ((n as f64) * dt - NAGUMO_END_TIME).abs() > 1e-9 || ((nf as f64) * dt - NAGUMO_FREEZE_TIME).abs() > 1e-9 {
            return Err(Error::Config(format!("dt = {} must divide {}", dt, NAGUMO_FREEZE_TIME)));
        }
        let y0 = nagumo_initial(grid);
        let mut y = y0.clone();
        let mut natural = Vec::with_capacity(nf);
        for k in 0..nf {
            y = imex_euler_step(&y, None, gamma, dt)?;
            check(&y, "state", k)?;
            natural.push(y.clone());
        }
        let frozen = natural.last().cloned().unwrap_or_else(|| y0.clone());
        let target = (0..n).map(|k| if k < nf { natural[k].clone() } else { frozen.clone() }).collect();
        let source = nagumo_steady_source(&frozen, gamma);
        let zero = SpatialField::zeros(grid);
        let dec = TimeDecomposition::new(n, 1, dt)?;
        let exact = ControlTrajectory::new(
            dec,
            (0..n).map(|k| vec![if k < nf { zero.clone() } else { source.clone() }]).collect(),
        )?;
        Ok(Self {
            gamma,
            lambda,
            dt,
            y0,
            target,
            exact,
            dec,
            cached: None,
            state_steps: 0,
            adjoint_steps: 0,
        })
    }

    pub fn num_steps(&self) -> usize {
        self.target.len()
    }

    pub fn zero_control(&self) -> ControlTrajectory {
        ControlTrajectory::zeros(self.dec, *self.y0.grid(), 1)
    }

    pub fn exact_control(&self) -> &ControlTrajectory {
        &self.exact
    }

    /// `y_1 … y_N` for control `u`.
    pub fn state(&mut self, u: &ControlTrajectory) -> Result<Vec<SpatialField>> {
        if let Some((cu, ys)) = &self.cached {
            if cu == u {
                return Ok(ys.clone());
            }
        }
        let mut y = self.y0.clone();
        let mut out = Vec::with_capacity(self.num_steps());
        for k in 0..self.num_steps() {
            y = imex_euler_step(&y, Some(&u.step(k)[0]), self.gamma, self.dt)?;
            check(&y, "state", k)?;
            out.push(y.clone());
        }
        self.state_steps += self.num_steps();
        self.cached = Some((u.clone(), out.clone()));
        Ok(out)
    }

    fn objective_from(&self, ys: &[SpatialField], u: &ControlTrajectory) -> Result<f64> {
        let mut j = 0.0;
        for (k, y) in ys.iter().enumerate() {
            let e = y.minus(&self.target[k]);
            j += 0.5 * self.dt * (e.inner(&e)? + self.lambda * u.step(k)[0].inner(&u.step(k)[0])?);
        }
        Ok(j)
    }

    /// `p_0 … p_{N−1}` from the reflected IMEX Euler recursion.
    pub fn adjoint(&mut self, ys: &[SpatialField]) -> Result<Vec<SpatialField>> {
        let n = self.num_steps();
        let mut p = SpatialField::zeros(*self.y0.grid());
        let mut out = vec![p.clone(); n];
        for k in (0..n).rev() {
            let y = &ys[k];
            let mut rhs = p.clone();
            let dr = y.map(|v| self.gamma * v * v - 1.0);
            for ((r, d), pv) in rhs.values_mut().iter_mut().zip(dr.values()).zip(p.values()) {
                *r -= self.dt * d * pv;
            }
            rhs.axpy(-self.dt, &y.minus(&self.target[k]));
            p = rhs.implicit_solve(self.dt, 1.0, 0.0)?;
            check(&p, "adjoint", k)?;
            out[k] = p.clone();
        }
        self.adjoint_steps += n;
        Ok(out)
    }
}

impl ReducedObjective for EulerBaseline {
    fn objective(&mut self, u: &ControlTrajectory) -> Result<f64> {
        let ys = self.state(u)?;
        self.objective_from(&ys, u)
    }

    fn gradient(&mut self, u: &ControlTrajectory) -> Result<(f64, ControlTrajectory)> {
        let ys = self.state(u)?;
        let j = self.objective_from(&ys, u)?;
        let ps = self.adjoint(&ys)?;
        let g = ps
            .iter()
            .enumerate()
            .map(|(k, p)| vec![u.step(k)[0].scaled(self.lambda).minus(p)])
            .collect();
        Ok((j, ControlTrajectory::new(self.dec, g)?))
    }

    fn inner(&self, a: &ControlTrajectory, b: &ControlTrajectory) -> Result<f64> {
        let mut s = 0.0;
        for (x, y) in a.steps().iter().zip(b.steps()) {
            s += x[0].inner(&y[0])?;
        }
        Ok(self.dt * s)
    }

    fn sweeps(&self) -> (usize, usize) {
        (self.state_steps, self.adjoint_steps)
    }

    fn control_error(&self, u: &ControlTrajectory) -> Option<f64> {
        let e = u.minus(&self.exact).ok()?;
        let num = self.inner(&e, &e).ok()?;
        let den = self.inner(&self.exact, &self.exact).ok()?;
        Some((num / den).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diffusion_only_step_is_one_implicit_solve() {
        let g = GridSpec::periodic_1d(16, 1.0).unwrap();
        let y0 = SpatialField::from_fn(g, |x| (2.0 * std::f64::consts::PI * x[0]).sin());
        // gamma = 0 leaves R(y) = −y; cancel it with u = −y0 so only diffusion remains
        let u = y0.scaled(-1.0);
        let y1 = imex_euler_step(&y0, Some(&u), 0.0, 0.1).unwrap();
        let expect = y0.scaled(1.0 / (1.0 + 0.1 * 4.0 * std::f64::consts::PI.powi(2)));
        assert!(y1.minus(&expect).max_abs() < 1e-13);
    }

    #[test]
    fn scalar_split_step() {
        // constant field: y' = y − γ/3 y³, explicit; no diffusion on the mean
        let g = GridSpec::periodic_1d(4, 1.0).unwrap();
        let y0 = SpatialField::constant(g, 0.5);
        let y1 = imex_euler_step(&y0, None, 3.0, 0.2).unwrap();
        let expect = 0.5 + 0.2 * (0.5 - 0.125);
        assert!(y1.values().iter().all(|v| (v - expect).abs() < 1e-15));
    }

    #[test]
    fn exact_control_freezes_the_state() {
        let g = GridSpec::periodic_1d(32, 20.0).unwrap();
        let mut b = EulerBaseline::new(g, 1.0, 1e-6, 0.05).unwrap();
        let u = b.exact_control().clone();
        let ys = b.state(&u).unwrap();
        let nf = 50;
        for y in &ys[nf..] {
            assert!(y.minus(&ys[nf - 1]).max_abs() < 1e-10);
        }
        // λ-term only
        let j = b.objective(&u).unwrap();
        let reg = 0.5 * 1e-6 * b.inner(&u, &u).unwrap();
        assert!((j - reg).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = GridSpec::periodic_1d(16, 20.0).unwrap();
        let mut b = EulerBaseline::new(g, 1.0, 1e-2, 0.1).unwrap();
        let u = ControlTrajectory::new(
            b.dec,
            (0..b.num_steps())
                .map(|k| vec![SpatialField::from_fn(g, |x| 0.1 * (x[0] * 0.3 + k as f64 * 0.05).cos())])
                .collect(),
        )
        .unwrap();
        let du = ControlTrajectory::new(
            b.dec,
            (0..b.num_steps())
                .map(|k| vec![SpatialField::from_fn(g, |x| (x[0] * std::f64::consts::PI / 10.0).sin() * (k as f64 * 0.1).cos())])
                .collect(),
        )
        .unwrap();
        let (_, grad) = b.gradient(&u).unwrap();
        let dd = b.inner(&grad, &du).unwrap();
        let h = 1e-5;
        let mut up = u.clone();
        up.axpy(h, &du).unwrap();
        let mut um = u.clone();
        um.axpy(-h, &du).unwrap();
        let fd = (b.objective(&up).unwrap() - b.objective(&um).unwrap()) / (2.0 * h);
        assert!(((dd - fd) / fd).abs() < 1e-7, "{} vs {}", dd, fd);
    }

    #[test]
    fn dt_must_divide_freeze_time() {
        let g = GridSpec::periodic_1d(8, 20.0).unwrap();
        assert!(EulerBaseline::new(g, 1.0, 1e-6, 0.3).is_err());
    }
}
