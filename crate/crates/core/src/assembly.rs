//! Global continuity machinery: scatter `Q = J Q_conf`, its transpose, the
//! Dirichlet mask, inverse multiplicity `W`, direct stiffness summation and
//! the smoothing projections `S` / `S_f`.
//!
//! Local nodes on a face that is half of a coarser neighbor's face ("child
//! face" nodes) are never global degrees of freedom; their values are
//! interpolated from the parent face, recursively when the parent face node is
//! itself interpolated.

use std::collections::HashMap;

use thiserror::Error;

use crate::linalg::Matrix;
use crate::mesh::vdb::morton;
use crate::mesh::{face_nodes, Mesh, Neighbor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("vector length {got} does not match {expected}")]
    Shape { expected: usize, got: usize },
    #[error("interpolated node {node} of element {elem} references no global degree of freedom")]
    Topology { elem: usize, node: usize },
}

const NOT_GLOBAL: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct DofMap {
    n_global: usize,
    /// Global index per local node, or `NOT_GLOBAL` for interpolated nodes.
    conf: Vec<u32>,
    /// (local node, start, end) ranges into `entries`.
    interp: Vec<(usize, usize, usize)>,
    entries: Vec<(u32, f64)>,
    mult: Vec<f64>,
    dirichlet: Vec<bool>,
    global_points: Vec<[f64; 3]>,
}

impl DofMap {
    pub fn build(mesh: &Mesh) -> Result<Self, AssemblyError> {
        let dim = mesh.dim();
        let n = mesh.degree() + 1;
        let npe = mesh.nodes_per_element();
        let nl = mesh.n_local();
        let q = mesh.quantizer();

        let mut child = vec![false; nl];
        for (e, el) in mesh.elements().iter().enumerate() {
            for (f, nb) in el.neighbors.iter().enumerate() {
                if matches!(nb, Neighbor::Coarser { .. }) {
                    for i in face_nodes(dim, n, f) {
                        child[e * npe + i] = true;
                    }
                }
            }
        }

        let mut keys: Vec<([i64; 3], [f64; 3])> = Vec::new();
        let mut local_key = vec![[0i64; 3]; nl];
        for e in 0..mesh.len() {
            for i in 0..npe {
                let l = e * npe + i;
                if child[l] {
                    continue;
                }
                let x = mesh.node_point(e, i);
                let k = q.quantize(&x);
                local_key[l] = k;
                keys.push((k, x));
            }
        }
        keys.sort_by(|a, b| morton(&a.0, dim).cmp(&morton(&b.0, dim)).then(a.0.cmp(&b.0)));
        keys.dedup_by(|a, b| a.0 == b.0);
        let gid: HashMap<[i64; 3], u32> = keys.iter().enumerate().map(|(g, (k, _))| (*k, g as u32)).collect();
        let global_points = keys.iter().map(|(_, x)| *x).collect();
        let n_global = keys.len();

        let mut conf = vec![NOT_GLOBAL; nl];
        let mut count = vec![0u32; n_global];
        for l in 0..nl {
            if !child[l] {
                let g = gid[&local_key[l]];
                conf[l] = g;
                count[g as usize] += 1;
            }
        }

        let mut memo: HashMap<usize, Vec<(u32, f64)>> = HashMap::new();
        let mut interp = Vec::new();
        let mut entries = Vec::new();
        for l in 0..nl {
            if child[l] {
                let row = resolve(mesh, &conf, &child, &mut memo, l / npe, l % npe)?;
                let start = entries.len();
                entries.extend_from_slice(&row);
                interp.push((l, start, entries.len()));
            }
        }

        let mut dirichlet = vec![false; n_global];
        if mesh.domain().dirichlet {
            for (e, el) in mesh.elements().iter().enumerate() {
                for (f, nb) in el.neighbors.iter().enumerate() {
                    if *nb == Neighbor::Boundary {
                        for i in face_nodes(dim, n, f) {
                            let g = conf[e * npe + i];
                            if g != NOT_GLOBAL {
                                dirichlet[g as usize] = true;
                            }
                        }
                    }
                }
            }
        }

        let mult = (0..nl)
            .map(|l| if child[l] { 0.0 } else { 1.0 / count[conf[l] as usize] as f64 })
            .collect();
        Ok(Self { n_global, conf, interp, entries, mult, dirichlet, global_points })
    }

    pub fn n_global(&self) -> usize {
        self.n_global
    }

    pub fn n_local(&self) -> usize {
        self.conf.len()
    }

    /// Diagonal of the inverse multiplicity matrix.
    pub fn multiplicity(&self) -> &[f64] {
        &self.mult
    }

    pub fn dirichlet_global(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn global_points(&self) -> &[[f64; 3]] {
        &self.global_points
    }

    /// Global index of a local node, `None` for interpolated (child-face) nodes.
    pub fn global_of(&self, l: usize) -> Option<usize> {
        let g = self.conf[l];
        (g != NOT_GLOBAL).then_some(g as usize)
    }

    /// Interpolation row (global index, weight) for every interpolated local node.
    pub fn interp_rows(&self) -> impl Iterator<Item = (usize, &[(u32, f64)])> {
        self.interp.iter().map(|&(l, a, b)| (l, &self.entries[a..b]))
    }

    /// Local nodes whose global image is a Dirichlet node.
    pub fn dirichlet_local(&self) -> Vec<bool> {
        self.conf
            .iter()
            .map(|&g| g != NOT_GLOBAL && self.dirichlet[g as usize])
            .collect()
    }

    fn check_local(&self, u: &[f64]) -> Result<(), AssemblyError> {
        if u.len() != self.n_local() {
            return Err(AssemblyError::Shape { expected: self.n_local(), got: u.len() });
        }
        Ok(())
    }

    fn check_global(&self, u: &[f64]) -> Result<(), AssemblyError> {
        if u.len() != self.n_global {
            return Err(AssemblyError::Shape { expected: self.n_global, got: u.len() });
        }
        Ok(())
    }

    /// `u = Q u_g`.
    pub fn scatter(&self, ug: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        self.check_global(ug)?;
        let mut out = vec![0.0; self.n_local()];
        self.scatter_into(ug, &mut out);
        Ok(out)
    }

    fn scatter_into(&self, ug: &[f64], out: &mut [f64]) {
        for (o, &g) in out.iter_mut().zip(&self.conf) {
            if g != NOT_GLOBAL {
                *o = ug[g as usize];
            }
        }
        for &(l, a, b) in &self.interp {
            out[l] = self.entries[a..b].iter().map(|&(g, w)| w * ug[g as usize]).sum();
        }
    }

    /// `u_g = Q^T u`.
    pub fn gather(&self, u: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        self.check_local(u)?;
        let mut ug = vec![0.0; self.n_global];
        self.gather_into(u, &mut ug);
        Ok(ug)
    }

    fn gather_into(&self, u: &[f64], ug: &mut [f64]) {
        ug.iter_mut().for_each(|v| *v = 0.0);
        for (&v, &g) in u.iter().zip(&self.conf) {
            if g != NOT_GLOBAL {
                ug[g as usize] += v;
            }
        }
        for &(l, a, b) in &self.interp {
            let v = u[l];
            for &(g, w) in &self.entries[a..b] {
                ug[g as usize] += w * v;
            }
        }
    }

    /// `Q_conf^T W u`: the average of the global copies of every node.
    pub fn average(&self, u: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        self.check_local(u)?;
        let mut ug = vec![0.0; self.n_global];
        self.average_into(u, &mut ug);
        Ok(ug)
    }

    fn average_into(&self, u: &[f64], ug: &mut [f64]) {
        ug.iter_mut().for_each(|v| *v = 0.0);
        for ((&v, &g), &w) in u.iter().zip(&self.conf).zip(&self.mult) {
            if g != NOT_GLOBAL {
                ug[g as usize] += w * v;
            }
        }
    }

    fn mask(&self, ug: &mut [f64]) {
        for (v, &d) in ug.iter_mut().zip(&self.dirichlet) {
            if d {
                *v = 0.0;
            }
        }
    }

    /// Direct stiffness summation `J M Q_conf Q_conf^T M J^T u` (mask optional).
    pub fn dss(&self, u: &[f64], masked: bool) -> Result<Vec<f64>, AssemblyError> {
        let mut out = vec![0.0; self.n_local()];
        let mut ug = vec![0.0; self.n_global];
        self.dss_into(u, masked, &mut ug, &mut out)?;
        Ok(out)
    }

    pub fn dss_into(&self, u: &[f64], masked: bool, ug: &mut [f64], out: &mut [f64]) -> Result<(), AssemblyError> {
        self.check_local(u)?;
        self.check_local(out)?;
        self.check_global(ug)?;
        self.gather_into(u, ug);
        if masked {
            self.mask(ug);
        }
        self.scatter_into(ug, out);
        Ok(())
    }

    /// Smoothing projection: `S` when `masked`, `S_f` otherwise.
    pub fn smooth(&self, u: &[f64], masked: bool) -> Result<Vec<f64>, AssemblyError> {
        let mut out = vec![0.0; self.n_local()];
        let mut ug = vec![0.0; self.n_global];
        self.smooth_into(u, masked, &mut ug, &mut out)?;
        Ok(out)
    }

    pub fn smooth_into(&self, u: &[f64], masked: bool, ug: &mut [f64], out: &mut [f64]) -> Result<(), AssemblyError> {
        self.check_local(u)?;
        self.check_local(out)?;
        self.check_global(ug)?;
        self.average_into(u, ug);
        if masked {
            self.mask(ug);
        }
        self.scatter_into(ug, out);
        Ok(())
    }

    /// `a^T W b`.
    pub fn w_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += a[i] * self.mult[i] * b[i];
        }
        s
    }

    /// Largest deviation of `u` from its continuous projection.
    pub fn continuity_defect(&self, u: &[f64]) -> Result<f64, AssemblyError> {
        let s = self.smooth(u, false)?;
        Ok(u.iter().zip(&s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// Dense `Q` (local × global); intended for tests and small meshes.
    pub fn q_dense(&self) -> Matrix {
        let mut q = Matrix::zeros(self.n_local(), self.n_global);
        for (l, &g) in self.conf.iter().enumerate() {
            if g != NOT_GLOBAL {
                q.set(l, g as usize, 1.0);
            }
        }
        for (l, row) in self.interp_rows() {
            for &(g, w) in row {
                q.set(l, g as usize, q.get(l, g as usize) + w);
            }
        }
        q
    }
}

fn resolve(
    mesh: &Mesh,
    conf: &[u32],
    child: &[bool],
    memo: &mut HashMap<usize, Vec<(u32, f64)>>,
    e: usize,
    i: usize,
) -> Result<Vec<(u32, f64)>, AssemblyError> {
    let npe = mesh.nodes_per_element();
    let l = e * npe + i;
    if !child[l] {
        return Ok(vec![(conf[l], 1.0)]);
    }
    if let Some(r) = memo.get(&l) {
        return Ok(r.clone());
    }
    let dim = mesh.dim();
    let n = mesh.degree() + 1;
    let el = &mesh.elements()[e];
    let (f, p, pf, half) = el
        .neighbors
        .iter()
        .enumerate()
        .find_map(|(f, nb)| match nb {
            Neighbor::Coarser { elem, face, half } if face_nodes(dim, n, f).contains(&i) => Some((f, *elem, *face, *half)),
            _ => None,
        })
        .ok_or(AssemblyError::Topology { elem: e, node: i })?;
    let k = face_nodes(dim, n, f).iter().position(|&j| j == i).unwrap();
    let pnodes = face_nodes(dim, n, pf);
    let h = mesh.basis().half_matrix(half);
    let mut acc: Vec<(u32, f64)> = Vec::new();
    for (j, &pj) in pnodes.iter().enumerate() {
        let w = h.get(k, j);
        if w == 0.0 {
            continue;
        }
        for (g, wg) in resolve(mesh, conf, child, memo, p, pj)? {
            match acc.iter_mut().find(|(a, _)| *a == g) {
                Some(entry) => entry.1 += w * wg,
                None => acc.push((g, w * wg)),
            }
        }
    }
    acc.sort_by_key(|(g, _)| *g);
    memo.insert(l, acc.clone());
    Ok(acc)
}
