//! Spatial fields on uniform tensor grids and their pseudo-spectral
//! operators.
//!
//! Two bases are supported: periodic Fourier (1-D or 3-D) and a 1-D cosine
//! basis on a cell-centred grid, which realises homogeneous Neumann
//! conditions. Values are stored row-major with x fastest.

mod snapshot;
pub(crate) mod spectral;

pub use snapshot::{read_snapshot, write_snapshot, Snapshot};

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Basis {
    Periodic,
    Cosine,
}

impl Basis {
    pub fn tag(self) -> u32 {
        match self {
            Basis::Periodic => 0,
            Basis::Cosine => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Basis::Periodic),
            1 => Some(Basis::Cosine),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    dims: usize,
    points: [usize; 3],
    extents: [f64; 3],
    basis: Basis,
}

impl GridSpec {
    pub fn new(points: &[usize], extents: &[f64], basis: Basis) -> Result<Self> {
        let dims = points.len();
        if !(dims == 1 || dims == 3) || extents.len() != dims {
            return Err(Error::InvalidGrid(format!(
                "expected 1 or 3 dimensions with matching extents, got {:?} / {:?}",
                points, extents
            )));
        }
        if points.iter().any(|&n| n < 4) {
            return Err(Error::InvalidGrid(format!("at least 4 points per dimension required, got {:?}", points)));
        }
        if extents.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidGrid(format!("extents must be positive, got {:?}", extents)));
        }
        if basis == Basis::Cosine && dims != 1 {
            return Err(Error::InvalidGrid("cosine basis is 1-D only".into()));
        }
        let mut p = [1usize; 3];
        let mut e = [1.0; 3];
        p[..dims].copy_from_slice(points);
        e[..dims].copy_from_slice(extents);
        Ok(Self {
            dims,
            points: p,
            extents: e,
            basis,
        })
    }

    pub fn periodic_1d(n: usize, length: f64) -> Result<Self> {
        Self::new(&[n], &[length], Basis::Periodic)
    }

    /// Cubic periodic grid with `n` points per direction.
    pub fn periodic_3d(n: usize, length: f64) -> Result<Self> {
        Self::new(&[n, n, n], &[length; 3], Basis::Periodic)
    }

    pub fn cosine_1d(n: usize, length: f64) -> Result<Self> {
        Self::new(&[n], &[length], Basis::Cosine)
    }

    /// Same domain and basis with `n` points in every direction.
    pub fn with_resolution(&self, n: usize) -> Result<Self> {
        Self::new(&vec![n; self.dims], self.extents(), self.basis)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn points(&self) -> &[usize] {
        &self.points[..self.dims]
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dims]
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight of one grid point, `prod(extents) / prod(points)`.
    pub fn cell_volume(&self) -> f64 {
        self.extents
            .iter()
            .zip(&self.points)
            .map(|(l, n)| l / *n as f64)
            .product()
    }

    /// Physical coordinate of the flattened index `idx`.
    pub fn coordinate(&self, idx: usize) -> [f64; 3] {
        let offset = match self.basis {
            Basis::Periodic => 0.0,
            Basis::Cosine => 0.5,
        };
        let i0 = idx % self.points[0];
        let i1 = (idx / self.points[0]) % self.points[1];
        let i2 = idx / (self.points[0] * self.points[1]);
        let mut x = [0.0; 3];
        for (a, i) in [i0, i1, i2].into_iter().enumerate() {
            x[a] = (i as f64 + offset) * self.extents[a] / self.points[a] as f64;
        }
        x
    }

    fn check_resample(&self, target: &GridSpec) -> Result<()> {
        if self.basis != target.basis || self.dims != target.dims || self.extents != target.extents {
            return Err(Error::GridMismatch(format!(
                "cannot transfer between {:?} and {:?}",
                self, target
            )));
        }
        for a in 0..self.dims {
            let (s, t) = (self.points[a], target.points[a]);
            if s.max(t) % s.min(t) != 0 {
                return Err(Error::GridMismatch(format!(
                    "point counts {} and {} not related by an integer ratio",
                    s, t
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl SpatialField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coordinate(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn same_grid(&self, other: &SpatialField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    /// `self += a * x`. Panics on grid mismatch.
    pub fn axpy(&mut self, a: f64, x: &SpatialField) {
        assert_eq!(self.grid, x.grid, "axpy on mismatched grids");
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    pub fn scaled(&self, a: f64) -> SpatialField {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self - other`. Panics on grid mismatch.
    pub fn minus(&self, other: &SpatialField) -> SpatialField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// `self + other`. Panics on grid mismatch.
    pub fn plus(&self, other: &SpatialField) -> SpatialField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn fill(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v = c);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SpatialField {
        SpatialField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete L2(Omega) product: cell volume times the pointwise sum.
    pub fn inner(&self, other: &SpatialField) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self.grid.cell_volume() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn norm(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Energy of the spectral coefficients, equal to `inner(self, self)`.
    pub fn spectral_energy(&self) -> f64 {
        let spec = spectral::forward(&self.grid, &self.values);
        let n = spec.data.len() as f64;
        let volume: f64 = self.grid.extents().iter().product();
        volume * spec.data.iter().map(|c| c.norm_sqr()).sum::<f64>() / (n * n)
    }

    /// Applies a radial spectral multiplier `symbol(|k|^2)`.
    pub fn map_spectrum(&self, symbol: impl Fn(f64) -> f64) -> SpatialField {
        SpatialField {
            grid: self.grid,
            values: spectral::apply_symbol(&self.grid, &self.values, symbol),
        }
    }

    pub fn laplacian(&self) -> SpatialField {
        self.map_spectrum(|k2| -k2)
    }

    /// Solves `(I - a*kappa*Lap + a*shift) g = self` mode by mode.
    pub fn implicit_solve(&self, a: f64, kappa: f64, shift: f64) -> Result<SpatialField> {
        for k2 in spectral::wavenumbers_squared(&self.grid) {
            if 1.0 + a * (kappa * k2 + shift) == 0.0 {
                return Err(Error::SingularMode { k2 });
            }
        }
        Ok(self.map_spectrum(|k2| 1.0 / (1.0 + a * (kappa * k2 + shift))))
    }

    /// Applies `(I - a*kappa*Lap + a*shift)`, the inverse of [`implicit_solve`](Self::implicit_solve).
    pub fn helmholtz_apply(&self, a: f64, kappa: f64, shift: f64) -> SpatialField {
        self.map_spectrum(|k2| 1.0 + a * (kappa * k2 + shift))
    }

    /// `exp(dt * kappa * Lap) f`, exact for the discrete operator.
    pub fn exp_propagate(&self, kappa: f64, dt: f64) -> Result<SpatialField> {
        if dt < 0.0 {
            return Err(Error::InvalidGrid(format!("negative propagation time {}", dt)));
        }
        if dt == 0.0 {
            return Ok(self.clone());
        }
        Ok(self.map_spectrum(|k2| (-dt * kappa * k2).exp()))
    }

    /// Spectral interpolation (refining) or truncation (coarsening).
    pub fn transfer(&self, target: &GridSpec) -> Result<SpatialField> {
        self.grid.check_resample(target)?;
        if self.grid == *target {
            return Ok(self.clone());
        }
        Ok(SpatialField {
            grid: *target,
            values: spectral::resample(&self.grid, &self.values, target),
        })
    }
}

/// `prod_i sin(2 pi x_i)` over the grid's dimensions.
pub fn sine_product(x: [f64; 3], dims: usize) -> f64 {
    x[..dims].iter().map(|&xi| (2.0 * PI * xi).sin()).product()
}
