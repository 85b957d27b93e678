//! Matrix-free element operators: mass, advection, weak Laplacian and Helmholtz.
//!
//! Every operator is a sequence of 1D matrix applications along one tensor
//! direction at a time; no d-dimensional matrix is ever formed.

use thiserror::Error;

use crate::basis::GllBasis;
use crate::mesh::Mesh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("vector length {got} does not match {expected}")]
    Shape { expected: usize, got: usize },
    #[error("advecting field has {got} components, expected {expected}")]
    Components { expected: usize, got: usize },
    #[error("diffusivity must be non-negative, got {0}")]
    NegativeNu(f64),
}

/// `out = (I ⊗ .. ⊗ M ⊗ .. ⊗ I) input` with `M` acting along `axis`.
pub fn apply_axis(m: &[f64], n: usize, dim: usize, axis: usize, input: &[f64], out: &mut [f64]) {
    let stride = n.pow(axis as u32);
    let outer = n.pow((dim - 1 - axis) as u32);
    if stride == 1 {
        for hi in 0..outer {
            let base = hi * n;
            let src = &input[base..base + n];
            for i in 0..n {
                let row = &m[i * n..(i + 1) * n];
                let mut s = 0.0;
                for j in 0..n {
                    s += row[j] * src[j];
                }
                out[base + i] = s;
            }
        }
        return;
    }
    for hi in 0..outer {
        let base = hi * n * stride;
        for i in 0..n {
            let o = base + i * stride;
            out[o..o + stride].iter_mut().for_each(|v| *v = 0.0);
            for j in 0..n {
                let c = m[i * n + j];
                let ib = base + j * stride;
                for lo in 0..stride {
                    out[o + lo] += c * input[ib + lo];
                }
            }
        }
    }
}

/// Geometry and basis of one affine element.
#[derive(Debug, Clone, Copy)]
pub struct ElementOps<'a> {
    pub basis: &'a GllBasis,
    pub dim: usize,
    pub size: [f64; 3],
}

impl<'a> ElementOps<'a> {
    pub fn new(basis: &'a GllBasis, dim: usize, size: [f64; 3]) -> Self {
        Self { basis, dim, size }
    }

    pub fn len(&self) -> usize {
        self.basis.n().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn check(&self, v: &[f64]) -> Result<(), OperatorError> {
        if v.len() != self.len() {
            return Err(OperatorError::Shape { expected: self.len(), got: v.len() });
        }
        Ok(())
    }

    /// Chain-rule factor 2/h along `mu`.
    #[inline]
    pub fn metric(&self, mu: usize) -> f64 {
        2.0 / self.size[mu]
    }

    pub fn jacobian(&self) -> f64 {
        self.size[..self.dim].iter().map(|h| 0.5 * h).product()
    }

    /// Diagonal of the mass matrix: GLL weights times the affine Jacobian.
    pub fn mass_diag(&self) -> Vec<f64> {
        let n = self.basis.n();
        let w = self.basis.weights();
        let jac = self.jacobian();
        (0..self.len())
            .map(|i| {
                let mut rem = i;
                let mut v = jac;
                for _ in 0..self.dim {
                    v *= w[rem % n];
                    rem /= n;
                }
                v
            })
            .collect()
    }

    /// Diagonal of the weak Laplacian.
    pub fn stiffness_diag(&self) -> Vec<f64> {
        let n = self.basis.n();
        let w = self.basis.weights();
        let d = self.basis.deriv_matrix();
        let jac = self.jacobian();
        // sum_k w_k D[k][i]^2 per direction
        let dd: Vec<f64> = (0..n).map(|i| (0..n).map(|k| w[k] * d.get(k, i).powi(2)).sum()).collect();
        (0..self.len())
            .map(|idx| {
                let mut ii = [0usize; 3];
                let mut rem = idx;
                for v in ii.iter_mut().take(self.dim) {
                    *v = rem % n;
                    rem /= n;
                }
                let mut s = 0.0;
                for mu in 0..self.dim {
                    let mut t = dd[ii[mu]] * self.metric(mu).powi(2);
                    for (nu, &i_nu) in ii.iter().enumerate().take(self.dim) {
                        if nu != mu {
                            t *= w[i_nu];
                        }
                    }
                    s += t;
                }
                s * jac
            })
            .collect()
    }

    pub fn apply_mass(&self, u: &[f64]) -> Result<Vec<f64>, OperatorError> {
        self.check(u)?;
        Ok(self.mass_diag().iter().zip(u).map(|(m, v)| m * v).collect())
    }

    /// Physical derivative along `mu` at every node.
    pub fn derivative(&self, mu: usize, u: &[f64]) -> Result<Vec<f64>, OperatorError> {
        self.check(u)?;
        let mut out = vec![0.0; u.len()];
        apply_axis(self.basis.deriv_matrix().as_slice(), self.basis.n(), self.dim, mu, u, &mut out);
        let g = self.metric(mu);
        out.iter_mut().for_each(|v| *v *= g);
        Ok(out)
    }

    /// `W (a · ∇u)` with a collocated advecting field.
    pub fn apply_advection(&self, a: &[&[f64]], u: &[f64]) -> Result<Vec<f64>, OperatorError> {
        self.check(u)?;
        if a.len() != self.dim {
            return Err(OperatorError::Components { expected: self.dim, got: a.len() });
        }
        let mut rate = vec![0.0; u.len()];
        for (mu, am) in a.iter().enumerate() {
            self.check(am)?;
            let du = self.derivative(mu, u)?;
            for i in 0..u.len() {
                rate[i] += am[i] * du[i];
            }
        }
        Ok(self.mass_diag().iter().zip(rate).map(|(m, r)| m * r).collect())
    }

    pub fn apply_stiffness(&self, u: &[f64]) -> Result<Vec<f64>, OperatorError> {
        self.check(u)?;
        let mut out = vec![0.0; u.len()];
        let mut s1 = vec![0.0; u.len()];
        let mut s2 = vec![0.0; u.len()];
        let w = self.mass_diag();
        stiffness_kernel(self, &w, u, &mut out, &mut s1, &mut s2);
        Ok(out)
    }

    pub fn apply_helmholtz(&self, beta: f64, nu: f64, u: &[f64]) -> Result<Vec<f64>, OperatorError> {
        if nu < 0.0 {
            return Err(OperatorError::NegativeNu(nu));
        }
        let mut out = self.apply_stiffness(u)?;
        let w = self.mass_diag();
        for i in 0..u.len() {
            out[i] = beta * w[i] * u[i] + nu * out[i];
        }
        Ok(out)
    }
}

/// `out = sum_mu g_mu^2 D_mu^T (W D_mu u)`.
fn stiffness_kernel(ops: &ElementOps, w: &[f64], u: &[f64], out: &mut [f64], s1: &mut [f64], s2: &mut [f64]) {
    let n = ops.basis.n();
    let d = ops.basis.deriv_matrix().as_slice();
    let dt = ops.basis.deriv_matrix_t().as_slice();
    out.iter_mut().for_each(|v| *v = 0.0);
    for mu in 0..ops.dim {
        let g2 = ops.metric(mu).powi(2);
        apply_axis(d, n, ops.dim, mu, u, s1);
        for i in 0..s1.len() {
            s1[i] *= w[i] * g2;
        }
        apply_axis(dt, n, ops.dim, mu, s1, s2);
        for i in 0..out.len() {
            out[i] += s2[i];
        }
    }
}

/// Mesh-wide operators over concatenated local vectors.
#[derive(Debug, Clone)]
pub struct MeshOps {
    dim: usize,
    npe: usize,
    sizes: Vec<[f64; 3]>,
    mass: Vec<f64>,
    stiff_diag: Vec<f64>,
    basis: std::sync::Arc<GllBasis>,
}

impl MeshOps {
    pub fn new(mesh: &Mesh) -> Self {
        let basis = mesh.basis().clone();
        let dim = mesh.dim();
        let sizes: Vec<[f64; 3]> = mesh.elements().iter().map(|e| e.size).collect();
        let mut mass = Vec::with_capacity(mesh.n_local());
        let mut stiff_diag = Vec::with_capacity(mesh.n_local());
        for s in &sizes {
            let ops = ElementOps::new(&basis, dim, *s);
            mass.extend(ops.mass_diag());
            stiff_diag.extend(ops.stiffness_diag());
        }
        Self { dim, npe: mesh.nodes_per_element(), sizes, mass, stiff_diag, basis }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn nodes_per_element(&self) -> usize {
        self.npe
    }

    pub fn basis(&self) -> &GllBasis {
        &self.basis
    }

    pub fn element(&self, e: usize) -> ElementOps<'_> {
        ElementOps::new(&self.basis, self.dim, self.sizes[e])
    }

    /// Diagonal mass matrix over all local nodes.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn stiffness_diag(&self) -> &[f64] {
        &self.stiff_diag
    }

    fn check(&self, v: &[f64]) -> Result<(), OperatorError> {
        if v.len() != self.len() {
            return Err(OperatorError::Shape { expected: self.len(), got: v.len() });
        }
        Ok(())
    }

    /// `out = beta M u + nu L u` on every element.
    pub fn helmholtz(&self, beta: f64, nu: f64, u: &[f64], out: &mut [f64]) -> Result<(), OperatorError> {
        self.check(u)?;
        self.check(out)?;
        if nu < 0.0 {
            return Err(OperatorError::NegativeNu(nu));
        }
        let npe = self.npe;
        let mut s1 = vec![0.0; npe];
        let mut s2 = vec![0.0; npe];
        let mut lu = vec![0.0; npe];
        for (e, size) in self.sizes.iter().enumerate() {
            let r = e * npe..(e + 1) * npe;
            let w = &self.mass[r.clone()];
            let ue = &u[r.clone()];
            let oe = &mut out[r];
            if nu > 0.0 {
                let ops = ElementOps::new(&self.basis, self.dim, *size);
                stiffness_kernel(&ops, w, ue, &mut lu, &mut s1, &mut s2);
                for i in 0..npe {
                    oe[i] = beta * w[i] * ue[i] + nu * lu[i];
                }
            } else {
                for i in 0..npe {
                    oe[i] = beta * w[i] * ue[i];
                }
            }
        }
        Ok(())
    }

    /// Collocated derivative along `mu` of a whole local vector.
    pub fn derivative(&self, mu: usize, u: &[f64]) -> Result<Vec<f64>, OperatorError> {
        self.check(u)?;
        let npe = self.npe;
        let n = self.basis.n();
        let d = self.basis.deriv_matrix().as_slice();
        let mut out = vec![0.0; u.len()];
        for (e, size) in self.sizes.iter().enumerate() {
            let r = e * npe..(e + 1) * npe;
            apply_axis(d, n, self.dim, mu, &u[r.clone()], &mut out[r.clone()]);
            let g = 2.0 / size[mu];
            out[r].iter_mut().for_each(|v| *v *= g);
        }
        Ok(out)
    }

    /// Collocated advection rate `a · ∇u` (no quadrature weight).
    pub fn advection_rate(&self, a: &[&[f64]], u: &[f64]) -> Result<Vec<f64>, OperatorError> {
        if a.len() != self.dim {
            return Err(OperatorError::Components { expected: self.dim, got: a.len() });
        }
        let mut rate = vec![0.0; u.len()];
        for (mu, am) in a.iter().enumerate() {
            self.check(am)?;
            let du = self.derivative(mu, u)?;
            for i in 0..u.len() {
                rate[i] += am[i] * du[i];
            }
        }
        Ok(rate)
    }

    /// Collocated rate for a spatially constant advecting velocity.
    pub fn constant_advection_rate(&self, c: &[f64], u: &[f64]) -> Result<Vec<f64>, OperatorError> {
        let mut rate = vec![0.0; u.len()];
        for (mu, &cm) in c.iter().enumerate().take(self.dim) {
            if cm == 0.0 {
                continue;
            }
            let du = self.derivative(mu, u)?;
            for i in 0..u.len() {
                rate[i] += cm * du[i];
            }
        }
        Ok(rate)
    }
}
