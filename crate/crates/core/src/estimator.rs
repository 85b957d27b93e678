//! Refinement criteria: Legendre decay fits along element lines, the
//! second-derivative threshold, and refine/coarsen tagging.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::basis::GllBasis;
use crate::linalg::linear_fit;
use crate::mesh::keys::{child_index, ElemId};
use crate::mesh::Mesh;
use crate::operators::MeshOps;

/// Coefficient magnitudes are floored here before taking logarithms.
pub const COEFF_FLOOR: f64 = 1e-30;
/// A fit window this far below the largest coefficient is roundoff.
pub const NOISE_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub spectral_threshold: Option<f64>,
    pub spectral_coarsen: f64,
    pub deriv_threshold: Option<f64>,
    pub deriv_coarsen: f64,
    pub lambda_threshold: f64,
    pub fit_count: usize,
    /// Lines whose trailing coefficients (normalized) stay below this are
    /// treated as negligible: no decay-rate test, error capped at their size.
    pub lambda_floor: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            spectral_threshold: None,
            spectral_coarsen: 1.0,
            deriv_threshold: None,
            deriv_coarsen: 0.5,
            lambda_threshold: std::f64::consts::LN_10,
            fit_count: 5,
            lambda_floor: 1e-6,
        }
    }
}

impl EstimatorConfig {
    pub fn heat() -> Self {
        Self { spectral_threshold: Some(1e-4), spectral_coarsen: 1.0, deriv_threshold: Some(1e-2), deriv_coarsen: 0.5, ..Default::default() }
    }

    /// Derivative criterion only; used by the advection and Burgers problems.
    pub fn derivative_only() -> Self {
        Self { deriv_threshold: Some(1.0), deriv_coarsen: 0.5, ..Default::default() }
    }
}

/// Scales captured at the start of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub u0_norm: f64,
    /// Longest domain length.
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineEstimate {
    pub epsilon: f64,
    pub lambda: f64,
    pub c: f64,
    /// Largest magnitude among the fitted coefficients.
    pub tail: f64,
}

/// Fits `ln|u_j| = ln C - lambda j` over the last `m` Legendre coefficients and
/// estimates the truncation error of the line.
pub fn spectral_line_estimate(basis: &GllBasis, values: &[f64], m: usize) -> LineEstimate {
    let coeffs = basis.legendre_coeffs(values).expect("line length matches basis");
    estimate_from_coeffs(&coeffs, m)
}

pub fn estimate_from_coeffs(coeffs: &[f64], m: usize) -> LineEstimate {
    let p = coeffs.len() - 1;
    let m = m.min(p).max(2).min(p + 1);
    let scale = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let window = &coeffs[p + 1 - m..];
    let wmax = window.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let top = coeffs[p].abs() / (p as f64 + 0.5).sqrt();
    if scale == 0.0 || wmax <= NOISE_RATIO * scale {
        return LineEstimate { epsilon: top, lambda: f64::INFINITY, c: 0.0, tail: wmax };
    }
    let js: Vec<f64> = (p + 1 - m..=p).map(|j| j as f64).collect();
    let logs: Vec<f64> = window.iter().map(|c| c.abs().max(COEFF_FLOOR).ln()).collect();
    let (ln_c, slope, _) = linear_fit(&js, &logs);
    let lambda = -slope;
    let c = ln_c.exp();
    if !(lambda > 0.0) {
        return LineEstimate { epsilon: f64::INFINITY, lambda, c, tail: wmax };
    }
    let ph = p as f64 + 0.5;
    let tail = c * c * (-2.0 * lambda * p as f64).exp() / (2.0 * lambda * ph);
    LineEstimate { epsilon: (top * top + tail).sqrt(), lambda, c, tail: wmax }
}

/// Worst (largest error, smallest decay rate) over all lines of element `e`,
/// all directions and components. Lines whose fitted coefficients stay below
/// `floor` count with their coefficient size and no decay rate.
pub fn element_spectral(mesh: &Mesh, e: usize, fields: &[&[f64]], m: usize, floor: f64) -> (f64, f64) {
    let basis = mesh.basis();
    let n = mesh.degree() + 1;
    let npe = mesh.nodes_per_element();
    let dim = mesh.dim();
    let mut eps = 0.0f64;
    let mut lam = f64::INFINITY;
    let mut line = vec![0.0; n];
    for f in fields {
        let u = &f[e * npe..(e + 1) * npe];
        for mu in 0..dim {
            let stride = n.pow(mu as u32);
            for base in (0..npe).filter(|i| (i / stride) % n == 0) {
                for (j, v) in line.iter_mut().enumerate() {
                    *v = u[base + j * stride];
                }
                let est = spectral_line_estimate(basis, &line, m);
                if est.tail < floor {
                    eps = eps.max(est.epsilon.min(est.tail));
                } else {
                    eps = eps.max(est.epsilon);
                    lam = lam.min(est.lambda);
                }
            }
        }
    }
    (eps, lam)
}

/// Per-element maximum of `|d^2 u / dx_mu^2|` over nodes, components and
/// directions.
pub fn second_derivative_max(mesh: &Mesh, ops: &MeshOps, fields: &[&[f64]]) -> Vec<f64> {
    let npe = mesh.nodes_per_element();
    let mut out = vec![0.0f64; mesh.len()];
    for f in fields {
        for mu in 0..mesh.dim() {
            let d1 = ops.derivative(mu, f).expect("field length");
            let d2 = ops.derivative(mu, &d1).expect("field length");
            for (e, o) in out.iter_mut().enumerate() {
                *o = d2[e * npe..(e + 1) * npe].iter().fold(*o, |a, v| a.max(v.abs()));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Refine,
    Coarsen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementMetrics {
    pub id: ElemId,
    pub level: u32,
    /// Normalized spectral error estimate.
    pub epsilon: f64,
    pub lambda: f64,
    /// Normalized second-derivative metric.
    pub deriv: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, Default)]
pub struct Tags {
    pub refine: BTreeSet<ElemId>,
    pub coarsen: BTreeSet<ElemId>,
    pub metrics: Vec<ElementMetrics>,
}

/// Applies the refinement criteria to every element and the sibling rule for
/// coarsening.
pub fn tag_elements(mesh: &Mesh, ops: &MeshOps, fields: &[&[f64]], cfg: &EstimatorConfig, norm: &Normalization) -> Tags {
    let dim = mesh.dim();
    let deriv_scale = norm.length * norm.length / norm.u0_norm;
    let deriv = if cfg.deriv_threshold.is_some() { second_derivative_max(mesh, ops, fields) } else { vec![0.0; mesh.len()] };
    let floor = cfg.lambda_floor * norm.u0_norm;
    let mut tags = Tags::default();
    let mut quiet = Vec::with_capacity(mesh.len());
    for (e, el) in mesh.elements().iter().enumerate() {
        let (eps, lam) = element_spectral(mesh, e, fields, cfg.fit_count, floor);
        let eps = eps / norm.u0_norm;
        let d = deriv[e] * deriv_scale;
        let mut refine = lam < cfg.lambda_threshold;
        let mut calm = !refine;
        if let Some(t) = cfg.spectral_threshold {
            refine |= eps > t;
            calm &= eps < cfg.spectral_coarsen * t;
        }
        if let Some(t) = cfg.deriv_threshold {
            refine |= d > t;
            calm &= d < cfg.deriv_coarsen * t;
        }
        if refine {
            tags.refine.insert(el.id);
        }
        quiet.push(calm && !refine && el.level > 0);
        tags.metrics.push(ElementMetrics { id: el.id, level: el.level, epsilon: eps, lambda: lam, deriv: d, decision: if refine { Decision::Refine } else { Decision::Keep } });
    }

    let mut groups: BTreeMap<ElemId, Vec<usize>> = BTreeMap::new();
    for (e, el) in mesh.elements().iter().enumerate() {
        if el.level > 0 {
            groups.entry(el.id.parent(dim)).or_default().push(e);
        }
    }
    for members in groups.values() {
        if members.len() == 1 << dim && members.iter().all(|&e| quiet[e]) {
            debug_assert!(members.iter().enumerate().all(|(i, &e)| child_index(mesh.elements()[e].id.key, dim) == i));
            for &e in members {
                tags.coarsen.insert(mesh.elements()[e].id);
                tags.metrics[e].decision = Decision::Coarsen;
            }
        }
    }
    tags
}

/// Writes one CSV row per element: root, key, level, epsilon, lambda, deriv, decision.
pub fn write_tags_csv<W: Write>(out: &mut W, step: usize, metrics: &[ElementMetrics], header: bool) -> std::io::Result<()> {
    if header {
        writeln!(out, "step,root,key,level,epsilon,lambda,deriv,decision")?;
    }
    for m in metrics {
        let d = match m.decision {
            Decision::Keep => "keep",
            Decision::Refine => "refine",
            Decision::Coarsen => "coarsen",
        };
        writeln!(out, "{step},{},{},{},{:e},{:e},{:e},{d}", m.id.root, m.id.key, m.level, m.epsilon, m.lambda, m.deriv)?;
    }
    Ok(())
}
