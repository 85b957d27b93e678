//! Preconditioned conjugate gradients on the assembled Helmholtz system,
//! carried out entirely on local vectors with smoothing of search directions.

use log::warn;
use thiserror::Error;

use crate::assembly::{AssemblyError, DofMap};
use crate::operators::{MeshOps, OperatorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("residual grew to {residual:e} at iteration {iteration} (initial {initial:e})")]
    Divergence { iteration: usize, residual: f64, initial: f64 },
    #[error("search direction has vanishing energy at iteration {0}")]
    Breakdown(usize),
    #[error("right-hand side is not finite")]
    NonFinite,
    #[error("non-positive Helmholtz diagonal {value:e} at local node {node}")]
    NonPositiveDiagonal { node: usize, value: f64 },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgOptions {
    /// Relative tolerance on the W-weighted residual norm.
    pub tol: f64,
    pub max_iterations: usize,
    pub precondition: bool,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iterations: 2000, precondition: true }
    }
}

#[derive(Debug, Clone)]
pub struct PcgResult {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub initial_residual: f64,
    pub residual: f64,
    pub converged: bool,
}

/// Reciprocal diagonal of `beta M + nu L` per local node.
pub fn diagonal_preconditioner(ops: &MeshOps, beta: f64, nu: f64) -> Result<Vec<f64>, SolverError> {
    ops.mass()
        .iter()
        .zip(ops.stiffness_diag())
        .enumerate()
        .map(|(i, (m, l))| {
            let d = beta * m + nu * l;
            if d > 0.0 && d.is_finite() {
                Ok(1.0 / d)
            } else {
                Err(SolverError::NonPositiveDiagonal { node: i, value: d })
            }
        })
        .collect()
}

/// Solves `Σ H u_h = Σ (f - H S u_b)` and returns `S_f (u_h + u_b)`.
///
/// `f` is the local right-hand side and `ub` carries Dirichlet values (zero
/// elsewhere). The boundary lift is smoothed without the mask, since the masked
/// projection would remove exactly the Dirichlet values it is meant to extend.
pub fn pcg_solve(
    dof: &DofMap,
    ops: &MeshOps,
    beta: f64,
    nu: f64,
    f: &[f64],
    ub: &[f64],
    opts: &PcgOptions,
) -> Result<PcgResult, SolverError> {
    let nl = dof.n_local();
    let ng = dof.n_global();
    let mut ug = vec![0.0; ng];
    let pinv = if opts.precondition { Some(diagonal_preconditioner(ops, beta, nu)?) } else { None };

    let mut lift = vec![0.0; nl];
    dof.smooth_into(ub, false, &mut ug, &mut lift)?;
    let mut hw = vec![0.0; nl];
    ops.helmholtz(beta, nu, &lift, &mut hw)?;
    let rhs: Vec<f64> = f.iter().zip(&hw).map(|(a, b)| a - b).collect();
    let mut r = vec![0.0; nl];
    dof.dss_into(&rhs, true, &mut ug, &mut r)?;

    let mut uh = vec![0.0; nl];
    let mut w = vec![0.0; nl];
    let mut e = vec![0.0; nl];
    let mut z = vec![0.0; nl];
    let mut rp = vec![0.0; nl];
    let mut rho1 = 1.0;
    let rr = dof.w_dot(&r, &r);
    if !rr.is_finite() {
        return Err(SolverError::NonFinite);
    }
    let norm0 = rr.max(0.0).sqrt();
    let mut norm = norm0;
    let target = opts.tol * norm0;
    let mut iterations = 0;
    let mut converged = norm0 == 0.0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        match &pinv {
            Some(p) => z.iter_mut().zip(p.iter().zip(&r)).for_each(|(zi, (pi, ri))| *zi = pi * ri),
            None => z.copy_from_slice(&r),
        }
        dof.smooth_into(&z, true, &mut ug, &mut e)?;
        let rho0 = rho1;
        rho1 = dof.w_dot(&r, &e);
        if rho1 == 0.0 {
            converged = true;
            break;
        }
        let ratio = rho1 / rho0;
        for i in 0..nl {
            w[i] = e[i] + w[i] * ratio;
        }
        ops.helmholtz(beta, nu, &w, &mut hw)?;
        dof.dss_into(&hw, true, &mut ug, &mut rp)?;
        let den = dof.w_dot(&w, &rp);
        if den.abs() < 1e-300 {
            return Err(SolverError::Breakdown(iterations));
        }
        let alpha = rho1 / den;
        for i in 0..nl {
            uh[i] += alpha * w[i];
            r[i] -= alpha * rp[i];
        }
        let rr = dof.w_dot(&r, &r);
        norm = rr.max(0.0).sqrt();
        if !rr.is_finite() || norm > 1e6 * norm0 {
            return Err(SolverError::Divergence { iteration: iterations, residual: norm, initial: norm0 });
        }
        converged = norm <= target;
    }
    if !converged {
        warn!("PCG stopped after {iterations} iterations with residual {norm:e} (target {target:e})");
    }
    for i in 0..nl {
        uh[i] += ub[i];
    }
    let mut u = vec![0.0; nl];
    dof.smooth_into(&uh, false, &mut ug, &mut u)?;
    Ok(PcgResult { u, iterations, initial_residual: norm0, residual: norm, converged })
}
