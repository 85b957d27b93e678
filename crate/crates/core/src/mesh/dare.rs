//! Dynamic adaptive refinement: tag rules and field transfer.
//!
//! Refinement tags are finalized first (level cap, then the one-level balance
//! closure). Coarsening tags are then filtered against the final refinement
//! list, level by level from the finest, together with the sibling check.

use std::collections::{BTreeMap, BTreeSet};

use super::{child_index, child_keys, ElemId, Element, Mesh, MeshError};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DareOutcome {
    /// Elements that were split.
    pub refined: Vec<ElemId>,
    /// New parents created by coarsening.
    pub coarsened: Vec<ElemId>,
}

impl DareOutcome {
    pub fn changed(&self) -> bool {
        !self.refined.is_empty() || !self.coarsened.is_empty()
    }
}

impl Mesh {
    fn neighbor_indices(&self, e: usize) -> Vec<usize> {
        use super::Neighbor::*;
        let mut out = Vec::new();
        for n in &self.elements[e].neighbors {
            match n {
                Boundary => {}
                Conforming { elem, .. } | Coarser { elem, .. } => out.push(*elem),
                Finer { elems, .. } => out.extend_from_slice(elems),
            }
        }
        out
    }

    /// Applies the level cap and the balance closure to a refinement request.
    pub fn finalize_refine(&self, refine: &BTreeSet<ElemId>) -> BTreeSet<ElemId> {
        let mut out: BTreeSet<ElemId> = refine
            .iter()
            .filter(|id| self.find(**id).map(|e| self.elements[e].level < self.lmax).unwrap_or(false))
            .copied()
            .collect();
        let mut frontier: Vec<ElemId> = out.iter().copied().collect();
        while let Some(id) = frontier.pop() {
            let e = self.index[&id];
            let level = self.elements[e].level;
            for n in self.neighbor_indices(e) {
                let nb = &self.elements[n];
                if nb.level < level && out.insert(nb.id) {
                    frontier.push(nb.id);
                }
            }
        }
        out
    }

    /// Filters a coarsening request against a finalized refinement list.
    pub fn finalize_coarsen(&self, refine: &BTreeSet<ElemId>, coarsen: &BTreeSet<ElemId>) -> BTreeSet<ElemId> {
        let d = self.dim;
        let mut cql: BTreeSet<ElemId> = coarsen
            .iter()
            .filter(|id| match self.find(**id) {
                Some(e) => self.elements[e].level > 0 && !refine.contains(id),
                None => false,
            })
            .copied()
            .collect();
        loop {
            let before = cql.len();
            cql = self.sibling_complete(&cql);
            let mut by_level: BTreeMap<u32, Vec<ElemId>> = BTreeMap::new();
            for id in &cql {
                by_level.entry(self.elements[self.index[id]].level).or_default().push(*id);
            }
            for (&level, ids) in by_level.iter().rev() {
                let snapshot = cql.clone();
                for id in ids {
                    let e = self.index[id];
                    let ok = self.neighbor_indices(e).into_iter().all(|n| {
                        let nb = &self.elements[n];
                        let a = nb.level <= level || snapshot.contains(&nb.id);
                        let b = nb.level < level || !refine.contains(&nb.id);
                        a && b
                    });
                    if !ok {
                        cql.remove(id);
                    }
                }
            }
            cql = self.sibling_complete(&cql);
            if cql.len() == before {
                break;
            }
        }
        debug_assert!(cql.iter().all(|id| id.key >= 1 << d));
        cql
    }

    fn sibling_complete(&self, set: &BTreeSet<ElemId>) -> BTreeSet<ElemId> {
        let d = self.dim;
        set.iter()
            .filter(|id| {
                let base = (id.key >> d) << d;
                (0..1u64 << d).all(|c| set.contains(&ElemId::new(id.root, base + c)))
            })
            .copied()
            .collect()
    }

    /// Restriction matrix from child half `half` onto the parent nodes it owns;
    /// the shared midpoint belongs to the lower half.
    pub fn restriction_matrix(&self, half: usize) -> Matrix {
        let b = &self.basis;
        let n = b.n();
        let mut m = Matrix::zeros(n, n);
        for (i, &xi) in b.nodes().iter().enumerate() {
            let owner = if xi <= 0.0 { 0 } else { 1 };
            if owner != half {
                continue;
            }
            let eta = if half == 0 { 2.0 * xi + 1.0 } else { 2.0 * xi - 1.0 };
            let row = b.lagrange_matrix(&[eta.clamp(-1.0, 1.0)]).expect("target in range");
            for j in 0..n {
                m.set(i, j, row.get(0, j));
            }
        }
        m
    }

    /// Refines and coarsens the mesh, transferring every vector in `fields`.
    /// Each field is a local vector laid out element by element.
    pub fn apply_dare(
        &mut self,
        fields: &mut [Vec<f64>],
        refine: &BTreeSet<ElemId>,
        coarsen: &BTreeSet<ElemId>,
    ) -> Result<DareOutcome, MeshError> {
        let npe = self.nodes_per_element();
        for f in fields.iter() {
            if f.len() != self.n_local() {
                return Err(MeshError::FieldLength { expected: self.n_local(), got: f.len() });
            }
        }
        let r = self.finalize_refine(refine);
        let c = self.finalize_coarsen(&r, coarsen);
        if r.is_empty() && c.is_empty() {
            return Ok(DareOutcome::default());
        }
        let d = self.dim;
        let halves = [self.basis.half_matrix(0).clone(), self.basis.half_matrix(1).clone()];
        let restrict = [self.restriction_matrix(0), self.restriction_matrix(1)];
        let mut outcome = DareOutcome::default();
        let mut new_elems: Vec<(Element, Vec<Vec<f64>>)> = Vec::with_capacity(self.elements.len() + 3 * r.len());

        for (e, el) in self.elements.iter().enumerate() {
            let slice = |f: &Vec<f64>| f[e * npe..(e + 1) * npe].to_vec();
            if r.contains(&el.id) {
                let kids = child_keys(el.id.key, el.id.root, d, self.lmax)?;
                for key in kids {
                    let ci = child_index(key, d);
                    let mut origin = el.origin;
                    let mut size = el.size;
                    let mut mats: Vec<&Matrix> = Vec::with_capacity(d);
                    for mu in 0..d {
                        size[mu] *= 0.5;
                        let bit = ci >> mu & 1;
                        origin[mu] += bit as f64 * size[mu];
                        mats.push(&halves[bit]);
                    }
                    let vals = fields.iter().map(|f| self.tensor_apply(&mats, &slice(f))).collect();
                    let child = Element { id: ElemId::new(el.id.root, key), level: el.level + 1, origin, size, neighbors: vec![] };
                    new_elems.push((child, vals));
                }
                outcome.refined.push(el.id);
            } else if c.contains(&el.id) {
                if child_index(el.id.key, d) != 0 {
                    continue;
                }
                let pid = el.id.parent(d);
                let (origin, size) = el.parent_box(d);
                let mut vals = vec![vec![0.0; npe]; fields.len()];
                for ci in 0..1usize << d {
                    let sid = ElemId::new(el.id.root, el.id.key + ci as u64);
                    let s = self.index[&sid];
                    let mats: Vec<&Matrix> = (0..d).map(|mu| &restrict[ci >> mu & 1]).collect();
                    for (k, f) in fields.iter().enumerate() {
                        let part = self.tensor_apply(&mats, &f[s * npe..(s + 1) * npe]);
                        for (v, p) in vals[k].iter_mut().zip(part) {
                            *v += p;
                        }
                    }
                }
                let parent = Element { id: pid, level: el.level - 1, origin, size, neighbors: vec![] };
                new_elems.push((parent, vals));
                outcome.coarsened.push(pid);
            } else {
                let vals = fields.iter().map(slice).collect();
                new_elems.push((el.clone(), vals));
            }
        }

        new_elems.sort_by_key(|(el, _)| el.id);
        let count = new_elems.len();
        for (k, f) in fields.iter_mut().enumerate() {
            let mut out = Vec::with_capacity(count * npe);
            for (_, vals) in &new_elems {
                out.extend_from_slice(&vals[k]);
            }
            *f = out;
        }
        self.elements = new_elems.into_iter().map(|(el, _)| el).collect();
        self.index = self.elements.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
        self.build_mortars()?;
        Ok(outcome)
    }

    /// True when no face neighbor differs by more than one level.
    pub fn is_balanced(&self) -> bool {
        (0..self.elements.len()).all(|e| {
            let l = self.elements[e].level as i64;
            self.neighbor_indices(e).into_iter().all(|n| (self.elements[n].level as i64 - l).abs() <= 1)
        })
    }
}
