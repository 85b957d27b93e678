//! Semi-implicit BDF/Ext time integration with variable steps and
//! Courant-limited step selection.
//!
//! Sign convention: `beta_bdf[0] u^n - sum_{m>=1} beta_bdf[m] u^{n-m}`
//! approximates `du/dt` at `t^n`, so all coefficients are positive for BDF1.

use thiserror::Error;

use crate::assembly::DofMap;
use crate::linalg::{solve_dense, Matrix};
use crate::mesh::Mesh;
use crate::operators::MeshOps;
use crate::solver::{pcg_solve, PcgOptions, SolverError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimeError {
    #[error("time stamps must be strictly decreasing from the newest, got {0:?}")]
    Stamps(Vec<f64>),
    #[error("need {needed} time stamps for BDF{bdf}/Ext{ext}, got {got}")]
    NotEnoughLevels { needed: usize, got: usize, bdf: usize, ext: usize },
    #[error("orders must be in 1..=3, got BDF{0}/Ext{1}")]
    Order(usize, usize),
    #[error("zero node spacing in element {0}")]
    ZeroSpacing(usize),
    #[error("Courant number must be positive, got {0}")]
    Kappa(f64),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// BDF and Ext coefficients for the stamps `[t^n, t^{n-1}, t^{n-2}, ...]`.
///
/// Returns `(bdf, ext)` where `bdf[0]` multiplies `u^n`, `bdf[m]` the level
/// `t^{n-m}`, and `ext[m-1]` extrapolates from level `t^{n-m}` to `t^n`.
pub fn bdf_ext_coeffs(stamps: &[f64], m_bdf: usize, m_ext: usize) -> Result<(Vec<f64>, Vec<f64>), TimeError> {
    if !(1..=3).contains(&m_bdf) || !(1..=3).contains(&m_ext) {
        return Err(TimeError::Order(m_bdf, m_ext));
    }
    let needed = m_bdf.max(m_ext) + 1;
    if stamps.len() < needed {
        return Err(TimeError::NotEnoughLevels { needed, got: stamps.len(), bdf: m_bdf, ext: m_ext });
    }
    if stamps.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(TimeError::Stamps(stamps.to_vec()));
    }
    let dt = stamps[0] - stamps[1];
    let s: Vec<f64> = stamps.iter().map(|t| (t - stamps[0]) / dt).collect();

    let nb = m_bdf + 1;
    let mut a = Matrix::zeros(nb, nb);
    let mut rhs = vec![0.0; nb];
    for k in 0..nb {
        for m in 0..nb {
            a.set(k, m, s[m].powi(k as i32));
        }
    }
    rhs[1] = 1.0;
    let c = solve_dense(&a, &rhs).ok_or_else(|| TimeError::Stamps(stamps.to_vec()))?;
    let mut bdf = vec![c[0] / dt];
    bdf.extend(c[1..].iter().map(|v| -v / dt));

    let mut e = Matrix::zeros(m_ext, m_ext);
    let mut rhs = vec![0.0; m_ext];
    for k in 0..m_ext {
        for m in 0..m_ext {
            e.set(k, m, s[m + 1].powi(k as i32));
        }
    }
    rhs[0] = 1.0;
    let ext = solve_dense(&e, &rhs).ok_or_else(|| TimeError::Stamps(stamps.to_vec()))?;
    Ok((bdf, ext))
}

/// Courant bound `kappa / max(4 nu / h^2 + (|u_{j-1}| + |u_j|) / (2 h))` over all
/// nodal intervals, directions and elements, with the element attaining it.
/// `velocity` holds one collocated component per direction (empty for rest).
/// Returns `f64::INFINITY` when the maximum is zero.
pub fn courant_dt(mesh: &Mesh, velocity: &[&[f64]], nu: f64, kappa: f64, diffusive: bool) -> Result<(f64, Option<usize>), TimeError> {
    if kappa <= 0.0 {
        return Err(TimeError::Kappa(kappa));
    }
    let dim = mesh.dim();
    let n = mesh.degree() + 1;
    let npe = mesh.nodes_per_element();
    let basis = mesh.basis();
    let mut worst = 0.0f64;
    let mut arg = None;
    for (e, el) in mesh.elements().iter().enumerate() {
        for mu in 0..dim {
            let x = el.node_coords(basis, mu);
            let stride = n.pow(mu as u32);
            let mut local = 0.0f64;
            for j in 1..n {
                let h = (x[j] - x[j - 1]).abs();
                if h == 0.0 {
                    return Err(TimeError::ZeroSpacing(e));
                }
                let diff = if diffusive { 4.0 * nu / (h * h) } else { 0.0 };
                let mut adv = 0.0f64;
                if let Some(u) = velocity.get(mu) {
                    let u = &u[e * npe..(e + 1) * npe];
                    for i in 0..npe {
                        if (i / stride) % n == j {
                            adv = adv.max((u[i - stride].abs() + u[i].abs()) / (2.0 * h));
                        }
                    }
                }
                local = local.max(diff + adv);
            }
            if local > worst {
                worst = local;
                arg = Some(e);
            }
        }
    }
    if worst == 0.0 {
        return Ok((f64::INFINITY, None));
    }
    Ok((kappa / worst, arg))
}

/// How the advecting velocity is formed.
#[derive(Debug, Clone, PartialEq)]
pub enum Advection {
    None,
    Constant([f64; 3]),
    /// The solution advects itself (Burgers).
    SelfField,
}

/// Stored time levels, newest first.
#[derive(Debug, Clone)]
pub struct TimeState {
    pub times: Vec<f64>,
    /// `fields[level][component]`
    pub fields: Vec<Vec<Vec<f64>>>,
    /// Collocated advection rates `a · ∇u` matching `fields`.
    pub rates: Vec<Vec<Vec<f64>>>,
    pub step: usize,
}

impl TimeState {
    pub fn levels(&self) -> usize {
        self.times.len()
    }

    pub fn current(&self) -> &[Vec<f64>] {
        &self.fields[0]
    }

    pub fn time(&self) -> f64 {
        self.times[0]
    }

    /// Flattened list of every stored vector, for mesh transfer.
    pub fn take_vectors(&mut self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for lvl in self.fields.iter_mut().chain(self.rates.iter_mut()) {
            for v in lvl.iter_mut() {
                out.push(std::mem::take(v));
            }
        }
        out
    }

    pub fn restore_vectors(&mut self, vectors: Vec<Vec<f64>>) {
        let mut it = vectors.into_iter();
        for lvl in self.fields.iter_mut().chain(self.rates.iter_mut()) {
            for v in lvl.iter_mut() {
                *v = it.next().expect("vector count matches");
            }
        }
    }
}

/// Collocated advection rates of every component of `u`.
pub fn advection_rates(ops: &MeshOps, adv: &Advection, u: &[Vec<f64>]) -> Vec<Vec<f64>> {
    match adv {
        Advection::None => u.iter().map(|c| vec![0.0; c.len()]).collect(),
        Advection::Constant(c) => u.iter().map(|comp| ops.constant_advection_rate(c, comp).expect("shape")).collect(),
        Advection::SelfField => {
            let a: Vec<&[f64]> = u.iter().take(ops.dim()).map(Vec::as_slice).collect();
            u.iter().map(|comp| ops.advection_rate(&a, comp).expect("shape")).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Orders and physical parameters of one step.
#[derive(Debug, Clone)]
pub struct StepParams<'a> {
    pub m_bdf: usize,
    pub m_ext: usize,
    pub nu: f64,
    pub advection: &'a Advection,
    pub solver: PcgOptions,
}

/// Advances `state` by `dt`. `boundary` holds per-component local vectors with
/// Dirichlet values at `t + dt` (zero elsewhere); `None` means homogeneous data.
pub fn advance_step(
    state: &mut TimeState,
    dof: &DofMap,
    ops: &MeshOps,
    params: &StepParams,
    dt: f64,
    boundary: Option<&[Vec<f64>]>,
) -> Result<StepReport, TimeError> {
    let m_bdf = params.m_bdf.min(state.levels());
    let m_ext = params.m_ext.min(state.levels());
    let t_new = state.times[0] + dt;
    let mut stamps = vec![t_new];
    stamps.extend_from_slice(&state.times);
    let (bdf, ext) = bdf_ext_coeffs(&stamps, m_bdf, m_ext)?;
    let ncomp = state.fields[0].len();
    let nl = dof.n_local();
    let mass = ops.mass();
    let zero = vec![0.0; nl];

    let mut report = StepReport { iterations: 0, residual: 0.0, converged: true };
    let mut new_fields = Vec::with_capacity(ncomp);
    for c in 0..ncomp {
        let mut f = vec![0.0; nl];
        for (m, b) in bdf.iter().enumerate().skip(1) {
            let u = &state.fields[m - 1][c];
            for i in 0..nl {
                f[i] += b * u[i];
            }
        }
        if *params.advection != Advection::None {
            for (m, e) in ext.iter().enumerate() {
                let r = &state.rates[m][c];
                for i in 0..nl {
                    f[i] -= e * r[i];
                }
            }
        }
        for i in 0..nl {
            f[i] *= mass[i];
        }
        let ub = boundary.map_or(&zero, |b| &b[c]);
        let res = pcg_solve(dof, ops, bdf[0], params.nu, &f, ub, &params.solver)?;
        report.iterations = report.iterations.max(res.iterations);
        report.residual = report.residual.max(res.residual);
        report.converged &= res.converged;
        new_fields.push(res.u);
    }
    let rates = advection_rates(ops, params.advection, &new_fields);
    let keep = params.m_bdf.max(params.m_ext);
    state.times.insert(0, t_new);
    state.fields.insert(0, new_fields);
    state.rates.insert(0, rates);
    state.times.truncate(keep);
    state.fields.truncate(keep);
    state.rates.truncate(keep);
    state.step += 1;
    Ok(report)
}
