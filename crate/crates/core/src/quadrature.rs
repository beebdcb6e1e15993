//! Lobatto IIIA collocation rules on the unit interval.
//!
//! A [`QuadratureRule`] carries the collocation nodes together with the
//! spectral integration matrix `q` (node-to-node cumulative integrals of the
//! Lagrange basis) and the two lower-triangular correction matrices used by
//! the sweepers: `qi` for implicit terms (LU trick) and `qe` for explicit
//! terms (forward-Euler substepping).

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

pub const MIN_NODES: usize = 2;
pub const MAX_NODES: usize = 12;

/// Small dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    q: Matrix,
    qi: Matrix,
    qe: Matrix,
}

impl QuadratureRule {
    /// Builds the Lobatto IIIA rule with `num_nodes` nodes (M + 1 in the
    /// usual notation, so the collocation order is `2 * (num_nodes - 1)`).
    pub fn lobatto(num_nodes: usize) -> Result<Self> {
        if !(MIN_NODES..=MAX_NODES).contains(&num_nodes) {
            return Err(Error::NodeCount(num_nodes));
        }
        let nodes = lobatto_nodes(num_nodes);
        let q = integration_matrix(&nodes);
        let qi = lu_correction(&q);
        let qe = euler_correction(&nodes);
        Ok(Self { nodes, q, qi, qe })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Index of the last node (M).
    pub fn last(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn qi(&self) -> &Matrix {
        &self.qi
    }

    pub fn qe(&self) -> &Matrix {
        &self.qe
    }

    /// Full-interval quadrature weights (last row of `q`).
    pub fn weights(&self) -> &[f64] {
        self.q.row(self.last())
    }

    /// Node values `r_m(z)` of the collocation solution of `y' = (z / dt) y`
    /// over one step with `y(0) = 1`; `r_M(z)` is the stability function.
    pub fn amplification(&self, z: f64) -> Vec<f64> {
        let n = self.last();
        let mut a = Matrix::zeros(n, n);
        let mut b = vec![0.0; n];
        for m in 0..n {
            for i in 0..n {
                a[(m, i)] = if m == i { 1.0 } else { 0.0 } - z * self.q[(m + 1, i + 1)];
            }
            b[m] = 1.0 + z * self.q[(m + 1, 0)];
        }
        let x = solve_dense(a, b).expect("collocation system singular");
        let mut out = Vec::with_capacity(n + 1);
        out.push(1.0);
        out.extend(x);
        out
    }
}

/// Matrix evaluating the interpolant through `coarse` nodes at the `fine`
/// nodes (shape fine x coarse).
pub fn node_interpolation_matrix(
    fine: &QuadratureRule,
    coarse: &QuadratureRule,
) -> Result<Matrix> {
    if coarse.num_nodes() > fine.num_nodes() {
        return Err(Error::Hierarchy(format!(
            "coarse rule has {} nodes, fine rule {}",
            coarse.num_nodes(),
            fine.num_nodes()
        )));
    }
    Ok(lagrange_matrix(coarse.nodes(), fine.nodes()))
}

/// Matrix evaluating the interpolant through `fine` nodes at the `coarse`
/// nodes (shape coarse x fine). Reduces to row selection for nested nodes.
pub fn node_restriction_matrix(
    fine: &QuadratureRule,
    coarse: &QuadratureRule,
) -> Result<Matrix> {
    if coarse.num_nodes() > fine.num_nodes() {
        return Err(Error::Hierarchy(format!(
            "coarse rule has {} nodes, fine rule {}",
            coarse.num_nodes(),
            fine.num_nodes()
        )));
    }
    Ok(lagrange_matrix(fine.nodes(), coarse.nodes()))
}

/// `out[r][c] = l_c(to[r])` for the Lagrange basis on `from`.
pub fn lagrange_matrix(from: &[f64], to: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(to.len(), from.len());
    for (r, &x) in to.iter().enumerate() {
        // Exact hits keep nested node sets bit-exact.
        if let Some(c) = from.iter().position(|&t| (t - x).abs() < 1e-15) {
            m[(r, c)] = 1.0;
            continue;
        }
        for c in 0..from.len() {
            m[(r, c)] = lagrange_basis(from, c, x);
        }
    }
    m
}

fn lagrange_basis(nodes: &[f64], i: usize, x: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &tj)| (x - tj) / (nodes[i] - tj))
        .product()
}

/// Legendre polynomial P_n and its derivative at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        // P_n'(±1) = ±n(n+1)/2 (sign for -1 is (-1)^(n+1))
        let s = if x > 0.0 { 1.0 } else { (-1f64).powi(n as i32 + 1) };
        s * nf * (nf + 1.0) / 2.0
    } else {
        nf * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, dp)
}

fn lobatto_nodes(num_nodes: usize) -> Vec<f64> {
    let m = num_nodes - 1;
    let mut x = vec![0.0; num_nodes];
    x[0] = -1.0;
    x[m] = 1.0;
    let mf = m as f64;
    for (i, xi) in x.iter_mut().enumerate().take(m).skip(1) {
        // Chebyshev-Gauss-Lobatto initial guess, ascending.
        let mut t = -(std::f64::consts::PI * i as f64 / mf).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(m, t);
            // (1 - x^2) P'' = 2x P' - m(m+1) P
            let d2p = (2.0 * t * dp - mf * (mf + 1.0) * p) / (1.0 - t * t);
            let dt = dp / d2p;
            t -= dt;
            if dt.abs() < 1e-15 {
                break;
            }
        }
        *xi = t;
    }
    let mut nodes: Vec<f64> = x.iter().map(|&t| 0.5 * (t + 1.0)).collect();
    nodes[0] = 0.0;
    nodes[m] = 1.0;
    for i in 1..num_nodes / 2 {
        let a = 0.5 * (nodes[i] + 1.0 - nodes[m - i]);
        nodes[i] = a;
        nodes[m - i] = 1.0 - a;
    }
    if num_nodes % 2 == 1 {
        nodes[m / 2] = 0.5;
    }
    nodes
}

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let nf = n as f64;
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

fn integration_matrix(nodes: &[f64]) -> Matrix {
    let n = nodes.len();
    let (gx, gw) = gauss_legendre(n);
    let mut q = Matrix::zeros(n, n);
    for m in 1..n {
        let b = nodes[m];
        for i in 0..n {
            q[(m, i)] = gx
                .iter()
                .zip(&gw)
                .map(|(&x, &w)| 0.5 * b * w * lagrange_basis(nodes, i, 0.5 * b * (x + 1.0)))
                .sum();
        }
    }
    q
}

/// Lower-triangular implicit weights: `Q[1:,1:]^T = L U` (Doolittle, no
/// pivoting) and `QI[1:,1:] = U^T`.
fn lu_correction(q: &Matrix) -> Matrix {
    let n = q.rows() - 1;
    let mut a = Matrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            a[(r, c)] = q[(c + 1, r + 1)];
        }
    }
    let mut u = Matrix::zeros(n, n);
    let mut l = Matrix::identity(n);
    for k in 0..n {
        for j in k..n {
            let s: f64 = (0..k).map(|p| l[(k, p)] * u[(p, j)]).sum();
            u[(k, j)] = a[(k, j)] - s;
        }
        for i in k + 1..n {
            let s: f64 = (0..k).map(|p| l[(i, p)] * u[(p, k)]).sum();
            l[(i, k)] = (a[(i, k)] - s) / u[(k, k)];
        }
    }
    let mut qi = Matrix::zeros(n + 1, n + 1);
    for r in 0..n {
        for c in 0..=r {
            qi[(r + 1, c + 1)] = u[(c, r)];
        }
    }
    qi
}

fn euler_correction(nodes: &[f64]) -> Matrix {
    let n = nodes.len();
    let mut qe = Matrix::zeros(n, n);
    for m in 1..n {
        for i in 0..m {
            qe[(m, i)] = nodes[i + 1] - nodes[i];
        }
    }
    qe
}

/// Gaussian elimination with partial pivoting.
pub(crate) fn solve_dense(mut a: Matrix, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs()))?;
        if a[(p, k)] == 0.0 {
            return None;
        }
        if p != k {
            for c in 0..n {
                let t = a[(k, c)];
                a[(k, c)] = a[(p, c)];
                a[(p, c)] = t;
            }
            b.swap(k, p);
        }
        for i in k + 1..n {
            let f = a[(i, k)] / a[(k, k)];
            if f != 0.0 {
                for c in k..n {
                    a[(i, c)] -= f * a[(k, c)];
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| a[(k, c)] * x[c]).sum();
        x[k] = (b[k] - s) / a[(k, k)];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_rules() -> Vec<QuadratureRule> {
        (MIN_NODES..=MAX_NODES)
            .map(|n| QuadratureRule::lobatto(n).unwrap())
            .collect()
    }

    #[test]
    fn rejects_unsupported_counts() {
        assert!(matches!(QuadratureRule::lobatto(1), Err(Error::NodeCount(1))));
        assert!(matches!(QuadratureRule::lobatto(13), Err(Error::NodeCount(13))));
    }

    #[test]
    fn three_nodes_is_simpson() {
        let r = QuadratureRule::lobatto(3).unwrap();
        assert_eq!(r.nodes(), &[0.0, 0.5, 1.0]);
        let w = r.weights();
        // Simpson weights, checked by integrating x^0..x^3 exactly.
        for p in 0..4 {
            let approx: f64 = r.nodes().iter().zip(w).map(|(x, w)| w * x.powi(p)).sum();
            assert!((approx - 1.0 / (p as f64 + 1.0)).abs() < 1e-15);
        }
        for (a, b) in w.iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn five_nodes_integrates_degree_seven() {
        let r = QuadratureRule::lobatto(5).unwrap();
        let approx: f64 = r.nodes().iter().zip(r.weights()).map(|(x, w)| w * x.powi(7)).sum();
        assert!((approx - 0.125).abs() < 1e-13);
    }

    #[test]
    fn node_structure() {
        for r in all_rules() {
            let n = r.nodes();
            let m = r.last();
            assert_eq!(n[0], 0.0);
            assert_eq!(n[m], 1.0);
            for i in 0..m {
                assert!(n[i + 1] > n[i]);
                assert!((n[i] + n[m - i] - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn row_sums_of_q_are_nodes() {
        for r in all_rules() {
            for m in 0..r.num_nodes() {
                let s: f64 = r.q().row(m).iter().sum();
                assert!((s - r.nodes()[m]).abs() < 1e-14, "n={} m={}", r.num_nodes(), m);
            }
        }
    }

    #[test]
    fn full_step_exactness_degree_2m_minus_1() {
        for r in all_rules() {
            let deg = 2 * r.last() - 1;
            for p in 0..=deg {
                let approx: f64 = r
                    .nodes()
                    .iter()
                    .zip(r.weights())
                    .map(|(x, w)| w * x.powi(p as i32))
                    .sum();
                assert!(
                    (approx - 1.0 / (p as f64 + 1.0)).abs() < 1e-13,
                    "n={} p={}",
                    r.num_nodes(),
                    p
                );
            }
        }
    }

    #[test]
    fn cumulative_rows_exact_for_degree_m() {
        for r in all_rules() {
            for m in 0..r.num_nodes() {
                for p in 0..=r.last() {
                    let approx: f64 = r
                        .nodes()
                        .iter()
                        .zip(r.q().row(m))
                        .map(|(x, w)| w * x.powi(p as i32))
                        .sum();
                    let exact = r.nodes()[m].powi(p as i32 + 1) / (p as f64 + 1.0);
                    assert!((approx - exact).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn correction_matrices_are_triangular() {
        for r in all_rules() {
            let n = r.num_nodes();
            for m in 0..n {
                for i in 0..n {
                    if i > m {
                        assert_eq!(r.qi()[(m, i)], 0.0);
                    }
                    if i >= m {
                        assert_eq!(r.qe()[(m, i)], 0.0);
                    }
                }
            }
            // explicit weights are node spacings: row sums reproduce the nodes
            for m in 0..n {
                let s: f64 = r.qe().row(m).iter().sum();
                assert!((s - r.nodes()[m]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lu_weights_make_stiff_limit_nilpotent() {
        // For z -> infinity the sweep iteration matrix tends to
        // I - QI^{-1} Q on nodes 1..M. With Q^T = L U and QI = U^T we get
        // QI^{-1} Q = L^T, unit upper triangular, so that limit is nilpotent.
        for r in all_rules() {
            let n = r.last();
            let mut qi = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    qi[(i, j)] = r.qi()[(i + 1, j + 1)];
                }
            }
            for col in 0..n {
                let b: Vec<f64> = (0..n).map(|i| r.q()[(i + 1, col + 1)]).collect();
                let x = solve_dense(qi.clone(), b).unwrap();
                for row in col..n {
                    let expect = if row == col { 1.0 } else { 0.0 };
                    assert!(
                        (x[row] - expect).abs() < 1e-10,
                        "n={} ({},{}) = {}",
                        r.num_nodes(),
                        row,
                        col,
                        x[row]
                    );
                }
            }
        }
    }

    #[test]
    fn interpolation_identity_and_constants() {
        let r5 = QuadratureRule::lobatto(5).unwrap();
        let r3 = QuadratureRule::lobatto(3).unwrap();
        let id = node_interpolation_matrix(&r5, &r5).unwrap();
        assert_eq!(id, Matrix::identity(5));
        let p = node_interpolation_matrix(&r5, &r3).unwrap();
        let c = p.mul_vec(&[2.5, 2.5, 2.5]);
        for v in c {
            assert!((v - 2.5).abs() < 1e-14);
        }
        let sq: Vec<f64> = r3.nodes().iter().map(|x| x * x).collect();
        let at_fine = p.mul_vec(&sq);
        for (v, x) in at_fine.iter().zip(r5.nodes()) {
            assert!((v - x * x).abs() < 1e-14);
        }
        assert!(node_interpolation_matrix(&r3, &r5).is_err());
    }

    #[test]
    fn restriction_selects_nested_nodes() {
        let r5 = QuadratureRule::lobatto(5).unwrap();
        let r3 = QuadratureRule::lobatto(3).unwrap();
        let rm = node_restriction_matrix(&r5, &r3).unwrap();
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(rm.mul_vec(&v), vec![1.0, 3.0, 5.0]);
    }

    #[test]
    fn amplification_matches_three_by_three_solve() {
        let r = QuadratureRule::lobatto(3).unwrap();
        let amp = r.amplification(-0.1);
        // Lobatto IIIA with 3 nodes: stability function is the (2,2) Pade
        // approximant of exp(z).
        let z: f64 = -0.1;
        let pade = (1.0 + z / 2.0 + z * z / 12.0) / (1.0 - z / 2.0 + z * z / 12.0);
        assert!((amp[2] - pade).abs() < 1e-15);
    }

    #[test]
    fn collocation_order_on_dahlquist() {
        // y' = -y on [0, 1], global error against exp(-1)
        for n in [3usize, 4, 5] {
            let r = QuadratureRule::lobatto(n).unwrap();
            let order = 2.0 * r.last() as f64;
            let err = |steps: usize| {
                let z = -1.0 / steps as f64;
                let g = r.amplification(z)[r.last()];
                (g.powi(steps as i32) - (-1f64).exp()).abs()
            };
            let (e1, e2) = (err(2), err(4));
            let observed = (e1 / e2).log2();
            assert!(observed >= order - 0.5, "n={} observed {}", n, observed);
        }
    }
}
