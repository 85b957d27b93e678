//! One-dimensional Gauss-Lobatto-Legendre nodal basis.
//!
//! Everything multidimensional in the crate is a tensor product of the objects
//! built here. Bases are immutable and shared through a per-degree registry.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

use crate::linalg::Matrix;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("polynomial degree must be at least 1, got {0}")]
    DegreeTooLow(usize),
    #[error("GLL root {index} of degree {degree} did not converge after {iterations} iterations (last update {last_step:e})")]
    RootNotConverged { degree: usize, index: usize, iterations: usize, last_step: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("interpolation target {0} lies outside [-1, 1]")]
    TargetOutOfRange(f64),
}

/// Legendre polynomial `L_n(x)` and its derivative.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    let (mut d0, mut d1) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        let d2 = d0 + (2.0 * kf + 1.0) * p1;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
    }
    (p1, d1)
}

/// GLL nodes (ascending) and weights for degree `p`.
pub fn gll_nodes_weights(p: usize) -> Result<(Vec<f64>, Vec<f64>), BasisError> {
    if p == 0 {
        return Err(BasisError::DegreeTooLow(p));
    }
    let n = p + 1;
    let pf = p as f64;
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[p] = 1.0;
    // Newton on (1-x^2) L'_p; by the Legendre ODE its derivative is -p(p+1) L_p.
    for j in 1..p {
        let mut x = -(std::f64::consts::PI * j as f64 / pf).cos();
        let mut converged = false;
        let mut step = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITER {
            let (l, dl) = legendre(p, x);
            step = (1.0 - x * x) * dl / (pf * (pf + 1.0) * l);
            x += step;
            if step.abs() <= NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged && step.abs() > 1e-13 {
            return Err(BasisError::RootNotConverged {
                degree: p,
                index: j,
                iterations: NEWTON_MAX_ITER,
                last_step: step,
            });
        }
        nodes[j] = x;
    }
    for j in 0..n / 2 {
        let s = 0.5 * (nodes[p - j] - nodes[j]);
        nodes[j] = -s;
        nodes[p - j] = s;
    }
    if n % 2 == 1 {
        nodes[p / 2] = 0.0;
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            let (l, _) = legendre(p, x);
            2.0 / (pf * (pf + 1.0) * l * l)
        })
        .collect();
    Ok((nodes, weights))
}

fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    (0..nodes.len())
        .map(|j| {
            let prod: f64 = nodes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &xk)| nodes[j] - xk)
                .product();
            1.0 / prod
        })
        .collect()
}

/// Degree-P GLL basis with its derived tables.
#[derive(Debug)]
pub struct GllBasis {
    degree: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    bary: Vec<f64>,
    deriv: Matrix,
    deriv_t: Matrix,
    /// `legendre[i][j] = L_j(xi_i)`
    legendre: Matrix,
    /// Discrete norms of L_j under GLL quadrature.
    gamma: Vec<f64>,
    /// Interpolation from the full interval onto the lower / upper half.
    halves: [Matrix; 2],
}

impl GllBasis {
    pub fn new(p: usize) -> Result<Self, BasisError> {
        let (nodes, weights) = gll_nodes_weights(p)?;
        let n = p + 1;
        let bary = barycentric_weights(&nodes);
        let mut deriv = Matrix::zeros(n, n);
        for i in 0..n {
            let mut diag = 0.0;
            for j in 0..n {
                if i != j {
                    let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                    deriv.set(i, j, v);
                    diag -= v;
                }
            }
            deriv.set(i, i, diag);
        }
        let deriv_t = deriv.transpose();
        let mut legendre_tab = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                legendre_tab.set(i, j, legendre(j, nodes[i]).0);
            }
        }
        let gamma = (0..n)
            .map(|j| if j == p { 2.0 / p as f64 } else { 2.0 / (2.0 * j as f64 + 1.0) })
            .collect();
        let mut basis = Self {
            degree: p,
            nodes,
            weights,
            bary,
            deriv,
            deriv_t,
            legendre: legendre_tab,
            gamma,
            halves: [Matrix::zeros(0, 0), Matrix::zeros(0, 0)],
        };
        let lower: Vec<f64> = basis.nodes.iter().map(|x| 0.5 * (x - 1.0)).collect();
        let upper: Vec<f64> = basis.nodes.iter().map(|x| 0.5 * (x + 1.0)).collect();
        basis.halves = [basis.lagrange_matrix(&lower)?, basis.lagrange_matrix(&upper)?];
        Ok(basis)
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of nodes, P+1.
    #[inline]
    pub fn n(&self) -> usize {
        self.degree + 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `D[i][j] = phi_j'(xi_i)`.
    pub fn deriv_matrix(&self) -> &Matrix {
        &self.deriv
    }

    pub fn deriv_matrix_t(&self) -> &Matrix {
        &self.deriv_t
    }

    pub fn legendre_table(&self) -> &Matrix {
        &self.legendre
    }

    /// Interpolation rows from this basis onto the nodes of child half `half`
    /// (0 = lower, 1 = upper).
    pub fn half_matrix(&self, half: usize) -> &Matrix {
        &self.halves[half]
    }

    /// Lagrange basis values `phi_j(t)` for every target `t`.
    pub fn lagrange_matrix(&self, targets: &[f64]) -> Result<Matrix, BasisError> {
        let n = self.n();
        let mut m = Matrix::zeros(targets.len(), n);
        for (t, &x) in targets.iter().enumerate() {
            if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&x) {
                return Err(BasisError::TargetOutOfRange(x));
            }
            if let Some(k) = self.nodes.iter().position(|&xj| x == xj) {
                m.set(t, k, 1.0);
                continue;
            }
            let terms: Vec<f64> = (0..n).map(|j| self.bary[j] / (x - self.nodes[j])).collect();
            let denom: f64 = terms.iter().sum();
            for (j, v) in terms.iter().enumerate() {
                m.set(t, j, v / denom);
            }
        }
        Ok(m)
    }

    /// Evaluates the nodal interpolant of `values` at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        if let Some(k) = self.nodes.iter().position(|&xj| x == xj) {
            return values[k];
        }
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..self.n() {
            let t = self.bary[j] / (x - self.nodes[j]);
            num += t * values[j];
            den += t;
        }
        num / den
    }

    /// Discrete Legendre coefficients of nodal `values`.
    pub fn legendre_coeffs(&self, values: &[f64]) -> Result<Vec<f64>, BasisError> {
        let n = self.n();
        if values.len() != n {
            return Err(BasisError::LengthMismatch { expected: n, got: values.len() });
        }
        Ok((0..n)
            .map(|j| {
                let s: f64 = (0..n).map(|i| self.weights[i] * values[i] * self.legendre.get(i, j)).sum();
                s / self.gamma[j]
            })
            .collect())
    }

    /// Nodal values of the Legendre series with `coeffs`.
    pub fn legendre_synthesis(&self, coeffs: &[f64]) -> Result<Vec<f64>, BasisError> {
        let n = self.n();
        if coeffs.len() != n {
            return Err(BasisError::LengthMismatch { expected: n, got: coeffs.len() });
        }
        Ok(self.legendre.mul_vec(coeffs))
    }
}

fn registry() -> &'static Mutex<HashMap<usize, Arc<GllBasis>>> {
    static REG: OnceLock<Mutex<HashMap<usize, Arc<GllBasis>>>> = OnceLock::new();
    REG.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Shared basis of degree `p`, built on first use.
pub fn basis(p: usize) -> Result<Arc<GllBasis>, BasisError> {
    let mut reg = registry().lock().unwrap_or_else(|e| e.into_inner());
    if let Some(b) = reg.get(&p) {
        return Ok(Arc::clone(b));
    }
    let b = Arc::new(GllBasis::new(p)?);
    reg.insert(p, Arc::clone(&b));
    Ok(b)
}
