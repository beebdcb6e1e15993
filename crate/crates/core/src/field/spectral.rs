//! FFT plumbing behind the field operators.
//!
//! Cosine (Neumann) fields are handled through their even extension about
//! the half-sample points, which turns every cosine-basis operation into a
//! periodic one on twice the domain.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Basis, GridSpec};

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry((len, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

/// Complex coefficients on the (possibly extended) periodic lattice.
pub(crate) struct Spectrum {
    pub shape: [usize; 3],
    pub data: Vec<Complex64>,
}

/// Shape of the periodic lattice the grid is transformed on.
pub(crate) fn extended_shape(grid: &GridSpec) -> [usize; 3] {
    match grid.basis {
        Basis::Periodic => grid.points,
        Basis::Cosine => [2 * grid.points[0], 1, 1],
    }
}

/// Period lengths of the extended lattice.
fn extended_periods(grid: &GridSpec) -> [f64; 3] {
    match grid.basis {
        Basis::Periodic => grid.extents,
        Basis::Cosine => [2.0 * grid.extents[0], 1.0, 1.0],
    }
}

pub(crate) fn signed_freq(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Squared wavenumber for every coefficient of the extended lattice.
pub(crate) fn wavenumbers_squared(grid: &GridSpec) -> Vec<f64> {
    let shape = extended_shape(grid);
    let periods = extended_periods(grid);
    let axis: Vec<Vec<f64>> = (0..3)
        .map(|a| {
            (0..shape[a])
                .map(|i| {
                    let k = 2.0 * PI * signed_freq(i, shape[a]) as f64 / periods[a];
                    k * k
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(shape.iter().product());
    for i2 in 0..shape[2] {
        for i1 in 0..shape[1] {
            for i0 in 0..shape[0] {
                out.push(axis[0][i0] + axis[1][i1] + axis[2][i2]);
            }
        }
    }
    out
}

fn transform_axis(data: &mut [Complex64], shape: [usize; 3], axis: usize, inverse: bool) {
    let n = shape[axis];
    if n == 1 {
        return;
    }
    let fft = plan(n, inverse);
    if axis == 0 {
        fft.process(data);
        return;
    }
    let stride: usize = shape[..axis].iter().product();
    let outer: usize = shape[axis + 1..].iter().product();
    let lines = stride * outer;
    let mut buf = vec![Complex64::new(0.0, 0.0); lines * n];
    for o in 0..outer {
        for s in 0..stride {
            let line = o * stride + s;
            let base = o * stride * n + s;
            for k in 0..n {
                buf[line * n + k] = data[base + k * stride];
            }
        }
    }
    fft.process(&mut buf);
    for o in 0..outer {
        for s in 0..stride {
            let line = o * stride + s;
            let base = o * stride * n + s;
            for k in 0..n {
                data[base + k * stride] = buf[line * n + k];
            }
        }
    }
}

pub(crate) fn forward(grid: &GridSpec, values: &[f64]) -> Spectrum {
    let shape = extended_shape(grid);
    let mut data: Vec<Complex64> = match grid.basis {
        Basis::Periodic => values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        Basis::Cosine => values
            .iter()
            .chain(values.iter().rev())
            .map(|&v| Complex64::new(v, 0.0))
            .collect(),
    };
    for axis in 0..3 {
        transform_axis(&mut data, shape, axis, false);
    }
    Spectrum { shape, data }
}

/// Inverse transform including the 1/N normalisation; returns the samples on
/// `grid` (the first half of the extension for cosine grids).
pub(crate) fn inverse(grid: &GridSpec, mut spec: Spectrum) -> Vec<f64> {
    debug_assert_eq!(spec.shape, extended_shape(grid));
    for axis in 0..3 {
        transform_axis(&mut spec.data, spec.shape, axis, true);
    }
    let scale = 1.0 / spec.data.len() as f64;
    spec.data
        .iter()
        .take(grid.len())
        .map(|c| c.re * scale)
        .collect()
}

/// Multiplies every coefficient by `symbol(|k|^2)`.
pub(crate) fn apply_symbol(
    grid: &GridSpec,
    values: &[f64],
    symbol: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let mut spec = forward(grid, values);
    let k2 = wavenumbers_squared(grid);
    for (c, &k) in spec.data.iter_mut().zip(&k2) {
        *c *= symbol(k);
    }
    inverse(grid, spec)
}

/// Per-axis coefficient map for spectral resampling from `ns` to `nt`
/// lattice points: source index -> [(target index, weight)].
fn axis_map(ns: usize, nt: usize, fold_nyquist: bool, offset: f64) -> Vec<Vec<(usize, Complex64)>> {
    let scale = nt as f64 / ns as f64;
    (0..ns)
        .map(|i| {
            let f = signed_freq(i, ns);
            // sample positions (j + offset) h differ between lattices
            let phase = 2.0 * PI * f as f64 * offset * (1.0 / nt as f64 - 1.0 / ns as f64);
            let w = Complex64::from_polar(scale, phase);
            let wrap = |f: i64| f.rem_euclid(nt as i64) as usize;
            if nt == ns {
                vec![(i, Complex64::new(1.0, 0.0))]
            } else if nt > ns {
                if ns % 2 == 0 && f == (ns / 2) as i64 {
                    if fold_nyquist {
                        vec![(wrap(f), w * 0.5), (wrap(-f), w * 0.5)]
                    } else {
                        vec![]
                    }
                } else {
                    vec![(wrap(f), w)]
                }
            } else {
                let half = (nt / 2) as i64;
                if f.abs() < half || (nt % 2 == 1 && f.abs() == half) {
                    vec![(wrap(f), w)]
                } else if nt % 2 == 0 && f.abs() == half && fold_nyquist {
                    vec![(nt / 2, w)]
                } else {
                    vec![]
                }
            }
        })
        .collect()
}

pub(crate) fn resample(source: &GridSpec, values: &[f64], target: &GridSpec) -> Vec<f64> {
    let spec = forward(source, values);
    let ss = spec.shape;
    let ts = extended_shape(target);
    let (fold, offset) = match source.basis {
        Basis::Periodic => (true, 0.0),
        Basis::Cosine => (false, 0.5),
    };
    let maps: Vec<_> = (0..3).map(|a| axis_map(ss[a], ts[a], fold, offset)).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); ts.iter().product()];
    for i2 in 0..ss[2] {
        for &(t2, w2) in &maps[2][i2] {
            for i1 in 0..ss[1] {
                for &(t1, w1) in &maps[1][i1] {
                    let w12 = w1 * w2;
                    let src_row = (i2 * ss[1] + i1) * ss[0];
                    let dst_row = (t2 * ts[1] + t1) * ts[0];
                    for i0 in 0..ss[0] {
                        for &(t0, w0) in &maps[0][i0] {
                            out[dst_row + t0] += spec.data[src_row + i0] * w0 * w12;
                        }
                    }
                }
            }
        }
    }
    inverse(target, Spectrum { shape: ts, data: out })
}
