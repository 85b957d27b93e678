//! Quadtree element forest with affine element maps, voxel-database neighbor
//! discovery, mortar construction and the DARe rule engine.
//!
//! Faces are numbered from the south edge counterclockwise in 2D
//! (0 south, 1 east, 2 north, 3 west) and left/right in 1D. Local nodes are
//! stored with the x index running fastest.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::basis::{self, BasisError, GllBasis};
use crate::linalg::Matrix;

pub mod dare;
pub mod keys;
pub mod vdb;

pub use dare::DareOutcome;
pub use keys::{child_index, child_keys, level_of, next_root_key, parent_key, ElemId};
use vdb::{Component, Quantizer, VdbRecord, VoxelDatabase};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("key {key} lies below root key {root}")]
    KeyBelowRoot { key: u64, root: u64 },
    #[error("refining key {key} would reach level {level} above the maximum {lmax}")]
    LevelOverflow { key: u64, level: u32, lmax: u32 },
    #[error("dimension {0} is not supported by the mesh (use 1 or 2)")]
    UnsupportedDimension(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("face {face} of element ({root}, {key}) has no neighbor but is interior to the domain")]
    Dangling { root: u64, key: u64, face: usize },
    #[error("face {face} of element ({root}, {key}) touches an element more than one level finer")]
    LevelJump { root: u64, key: u64, face: usize },
    #[error("field length {got} does not match the mesh ({expected} local nodes)")]
    FieldLength { expected: usize, got: usize },
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Axis and side (0 low, 1 high) of a face.
pub fn face_axis_side(dim: usize, face: usize) -> (usize, usize) {
    if dim == 1 {
        return (0, face);
    }
    match face {
        0 => (1, 0),
        1 => (0, 1),
        2 => (1, 1),
        _ => (0, 0),
    }
}

pub fn face_of(dim: usize, axis: usize, side: usize) -> usize {
    if dim == 1 {
        return side;
    }
    match (axis, side) {
        (1, 0) => 0,
        (0, 1) => 1,
        (1, 1) => 2,
        _ => 3,
    }
}

pub fn opposite_face(dim: usize, face: usize) -> usize {
    let (a, s) = face_axis_side(dim, face);
    face_of(dim, a, 1 - s)
}

/// Local node indices on `face`, ordered by increasing tangential coordinate.
pub fn face_nodes(dim: usize, n: usize, face: usize) -> Vec<usize> {
    let (a, s) = face_axis_side(dim, face);
    let fixed = s * (n - 1);
    if dim == 1 {
        return vec![fixed];
    }
    (0..n)
        .map(|k| if a == 0 { fixed + n * k } else { k + n * fixed })
        .collect()
}

/// Relationship of an element face to the elements across it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Neighbor {
    Boundary,
    /// Same-size face; also used for every face in 1D.
    Conforming { elem: usize, face: usize },
    /// Two half-size faces across, ordered by tangential position.
    Finer { elems: [usize; 2], face: usize },
    /// This face is half `half` of a coarser neighbor's face.
    Coarser { elem: usize, face: usize, half: usize },
}

#[derive(Debug, Clone)]
pub struct Element {
    pub id: ElemId,
    pub level: u32,
    pub origin: [f64; 3],
    pub size: [f64; 3],
    pub neighbors: Vec<Neighbor>,
}

impl Element {
    pub fn key(&self) -> u64 {
        self.id.key
    }

    pub fn root(&self) -> u64 {
        self.id.root
    }

    /// Largest per-direction extent.
    pub fn diameter(&self, dim: usize) -> f64 {
        self.size[..dim].iter().cloned().fold(0.0, f64::max)
    }

    pub fn measure(&self, dim: usize) -> f64 {
        self.size[..dim].iter().product()
    }

    /// Physical coordinates of the GLL nodes along direction `mu`.
    pub fn node_coords(&self, basis: &GllBasis, mu: usize) -> Vec<f64> {
        basis.nodes().iter().map(|&xi| self.map(mu, xi)).collect()
    }

    #[inline]
    pub fn map(&self, mu: usize, xi: f64) -> f64 {
        self.origin[mu] + 0.5 * (xi + 1.0) * self.size[mu]
    }

    pub fn vertices(&self, dim: usize) -> Vec<[f64; 3]> {
        (0..1usize << dim)
            .map(|v| {
                let mut x = self.origin;
                for mu in 0..dim {
                    if v >> mu & 1 == 1 {
                        x[mu] += self.size[mu];
                    }
                }
                x
            })
            .collect()
    }

    /// Midpoint of `face`, or of half `half` of it when given.
    pub fn face_point(&self, dim: usize, face: usize, half: Option<usize>) -> [f64; 3] {
        let (a, s) = face_axis_side(dim, face);
        let mut x = [0.0; 3];
        for mu in 0..dim {
            x[mu] = if mu == a {
                self.origin[mu] + s as f64 * self.size[mu]
            } else {
                match half {
                    None => self.origin[mu] + 0.5 * self.size[mu],
                    Some(h) => self.origin[mu] + (0.25 + 0.5 * h as f64) * self.size[mu],
                }
            };
        }
        x
    }

    /// Geometry of this element's parent, derived from its child index.
    pub fn parent_box(&self, dim: usize) -> ([f64; 3], [f64; 3]) {
        let c = child_index(self.id.key, dim);
        let mut origin = self.origin;
        let mut size = self.size;
        for mu in 0..dim {
            if c >> mu & 1 == 1 {
                origin[mu] -= self.size[mu];
            }
            size[mu] *= 2.0;
        }
        (origin, size)
    }
}

/// Axis-aligned domain box.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    pub periodic: [bool; 3],
    /// Non-periodic boundary faces carry Dirichlet data when set.
    pub dirichlet: bool,
}

impl Domain {
    pub fn unit(dim: usize, periodic: bool, dirichlet: bool) -> Self {
        let mut upper = [0.0; 3];
        let mut per = [false; 3];
        for mu in 0..dim {
            upper[mu] = 1.0;
            per[mu] = periodic;
        }
        Self { lower: [0.0; 3], upper, periodic: per, dirichlet }
    }

    /// Longest domain length.
    pub fn longest(&self, dim: usize) -> f64 {
        (0..dim).map(|mu| self.upper[mu] - self.lower[mu]).fold(0.0, f64::max)
    }
}

/// Interface between a parent face and one (conforming) or two child faces.
#[derive(Debug, Clone, PartialEq)]
pub struct Mortar {
    /// (element index, face)
    pub parent: (usize, usize),
    pub children: Vec<(usize, usize)>,
    pub conforming: bool,
    /// Physical coordinates of the parent face nodes.
    pub nodes: Vec<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    degree: usize,
    lmax: u32,
    domain: Domain,
    strict: bool,
    basis: Arc<GllBasis>,
    quantizer: Quantizer,
    elements: Vec<Element>,
    index: HashMap<ElemId, usize>,
    mortars: Vec<Mortar>,
}

impl Mesh {
    /// Tensor grid of root elements with vertex coordinates `vertices[mu]`;
    /// roots are numbered from 1 with x running fastest.
    pub fn from_root_grid(
        dim: usize,
        degree: usize,
        lmax: u32,
        vertices: &[Vec<f64>],
        periodic: [bool; 3],
        dirichlet: bool,
    ) -> Result<Self, MeshError> {
        check_dim(dim)?;
        if vertices.len() != dim {
            return Err(MeshError::InvalidGrid(format!("expected {dim} vertex arrays, got {}", vertices.len())));
        }
        for v in vertices {
            if v.len() < 2 || v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(MeshError::InvalidGrid("vertex arrays must be strictly increasing with two or more entries".into()));
            }
        }
        let counts: Vec<usize> = vertices.iter().map(|v| v.len() - 1).collect();
        let total: usize = counts.iter().product();
        let mut elements = Vec::with_capacity(total);
        for r in 0..total {
            let mut origin = [0.0; 3];
            let mut size = [0.0; 3];
            let mut rem = r;
            for mu in 0..dim {
                let i = rem % counts[mu];
                rem /= counts[mu];
                origin[mu] = vertices[mu][i];
                size[mu] = vertices[mu][i + 1] - vertices[mu][i];
            }
            let root = r as u64 + 1;
            elements.push(Element { id: ElemId::new(root, root), level: 0, origin, size, neighbors: vec![] });
        }
        let mut lower = [0.0; 3];
        let mut upper = [0.0; 3];
        for mu in 0..dim {
            lower[mu] = vertices[mu][0];
            upper[mu] = *vertices[mu].last().unwrap();
        }
        let domain = Domain { lower, upper, periodic, dirichlet };
        Self::assemble(dim, degree, lmax, domain, true, elements)
    }

    /// Uniform `k[mu]` root grid over `domain`.
    pub fn uniform(dim: usize, degree: usize, lmax: u32, k: &[usize], domain: &Domain) -> Result<Self, MeshError> {
        let vertices: Vec<Vec<f64>> = (0..dim)
            .map(|mu| {
                let (a, b) = (domain.lower[mu], domain.upper[mu]);
                (0..=k[mu]).map(|i| a + (b - a) * i as f64 / k[mu] as f64).collect()
            })
            .collect();
        Self::from_root_grid(dim, degree, lmax, &vertices, domain.periodic, domain.dirichlet)
    }

    /// Arbitrary collection of tree elements given as (root, key, origin, size).
    /// Faces without neighbors are treated as domain boundary.
    pub fn from_elements(
        dim: usize,
        degree: usize,
        lmax: u32,
        elems: &[(u64, u64, [f64; 3], [f64; 3])],
        dirichlet: bool,
    ) -> Result<Self, MeshError> {
        check_dim(dim)?;
        let mut lower = [f64::INFINITY; 3];
        let mut upper = [f64::NEG_INFINITY; 3];
        let mut elements = Vec::with_capacity(elems.len());
        for &(root, key, origin, size) in elems {
            let level = level_of(key, root, dim)?;
            for mu in 0..dim {
                lower[mu] = lower[mu].min(origin[mu]);
                upper[mu] = upper[mu].max(origin[mu] + size[mu]);
            }
            elements.push(Element { id: ElemId::new(root, key), level, origin, size, neighbors: vec![] });
        }
        for mu in dim..3 {
            lower[mu] = 0.0;
            upper[mu] = 0.0;
        }
        let domain = Domain { lower, upper, periodic: [false; 3], dirichlet };
        Self::assemble(dim, degree, lmax, domain, false, elements)
    }

    pub(crate) fn assemble(
        dim: usize,
        degree: usize,
        lmax: u32,
        domain: Domain,
        strict: bool,
        mut elements: Vec<Element>,
    ) -> Result<Self, MeshError> {
        let basis = basis::basis(degree)?;
        let quantizer = Quantizer::new(dim, domain.lower, domain.upper, domain.periodic);
        elements.sort_by_key(|e| e.id);
        let index = elements.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
        let mut mesh = Self {
            dim,
            degree,
            lmax,
            domain,
            strict,
            basis,
            quantizer,
            elements,
            index,
            mortars: vec![],
        };
        mesh.build_mortars()?;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn lmax(&self) -> u32 {
        self.lmax
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn basis(&self) -> &Arc<GllBasis> {
        &self.basis
    }

    pub fn quantizer(&self) -> &Quantizer {
        &self.quantizer
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn mortars(&self) -> &[Mortar] {
        &self.mortars
    }

    pub fn find(&self, id: ElemId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Nodes per element, (P+1)^d.
    pub fn nodes_per_element(&self) -> usize {
        (self.degree + 1).pow(self.dim as u32)
    }

    pub fn n_local(&self) -> usize {
        self.elements.len() * self.nodes_per_element()
    }

    /// Physical coordinates of local node `i` of element `e`.
    pub fn node_point(&self, e: usize, i: usize) -> [f64; 3] {
        let n = self.degree + 1;
        let el = &self.elements[e];
        let mut x = [0.0; 3];
        let mut rem = i;
        for (mu, xm) in x.iter_mut().enumerate().take(self.dim) {
            *xm = el.map(mu, self.basis.nodes()[rem % n]);
            rem /= n;
        }
        x
    }

    /// Evaluates `f` at every local node, element by element.
    pub fn sample(&self, mut f: impl FnMut([f64; 3]) -> f64) -> Vec<f64> {
        let npe = self.nodes_per_element();
        let mut out = Vec::with_capacity(self.n_local());
        for e in 0..self.elements.len() {
            for i in 0..npe {
                out.push(f(self.node_point(e, i)));
            }
        }
        out
    }

    fn on_domain_boundary(&self, el: &Element, face: usize) -> bool {
        let (a, s) = face_axis_side(self.dim, face);
        if self.domain.periodic[a] {
            return false;
        }
        let x = el.origin[a] + s as f64 * el.size[a];
        let bound = if s == 0 { self.domain.lower[a] } else { self.domain.upper[a] };
        let extent = self.domain.upper[a] - self.domain.lower[a];
        (x - bound).abs() <= 1e-9 * extent
    }

    fn opposite_record(&self, db: &VoxelDatabase, point: [f64; 3], face: usize, exclude: (usize, usize)) -> Option<VdbRecord> {
        let want = opposite_face(self.dim, face);
        db.lookup(&self.quantizer.quantize(&point))
            .iter()
            .find(|r| r.aux == want && (r.elem, r.aux) != exclude)
            .copied()
    }

    /// Rebuilds neighbor records and the mortar list from two voxel databases.
    pub fn build_mortars(&mut self) -> Result<(), MeshError> {
        let dim = self.dim;
        let nfaces = 2 * dim;
        let mut verts = VoxelDatabase::new();
        let mut mids = VoxelDatabase::new();
        for (e, el) in self.elements.iter().enumerate() {
            for (v, x) in el.vertices(dim).iter().enumerate() {
                verts.insert(VdbRecord {
                    point: self.quantizer.quantize(x),
                    component: Component::Vertex,
                    elem: e,
                    key: el.id.key,
                    root: el.id.root,
                    aux: v,
                });
            }
            for f in 0..nfaces {
                mids.insert(VdbRecord {
                    point: self.quantizer.quantize(&el.face_point(dim, f, None)),
                    component: Component::Midpoint,
                    elem: e,
                    key: el.id.key,
                    root: el.id.root,
                    aux: f,
                });
            }
        }

        let mut all = Vec::with_capacity(self.elements.len());
        for (e, el) in self.elements.iter().enumerate() {
            let mut nbrs = Vec::with_capacity(nfaces);
            for f in 0..nfaces {
                nbrs.push(self.classify(&verts, &mids, e, el, f)?);
            }
            all.push(nbrs);
        }
        for (el, nbrs) in self.elements.iter_mut().zip(all) {
            el.neighbors = nbrs;
        }

        let mut mortars = Vec::new();
        for (e, el) in self.elements.iter().enumerate() {
            for f in 0..nfaces {
                match &el.neighbors[f] {
                    Neighbor::Conforming { elem, face } => {
                        if (e, f) < (*elem, *face) {
                            mortars.push(Mortar {
                                parent: (e, f),
                                children: vec![(*elem, *face)],
                                conforming: true,
                                nodes: self.face_node_points(e, f),
                            });
                        }
                    }
                    Neighbor::Finer { elems, face } => mortars.push(Mortar {
                        parent: (e, f),
                        children: vec![(elems[0], *face), (elems[1], *face)],
                        conforming: false,
                        nodes: self.face_node_points(e, f),
                    }),
                    _ => {}
                }
            }
        }
        self.mortars = mortars;
        Ok(())
    }

    fn face_node_points(&self, e: usize, f: usize) -> Vec<[f64; 3]> {
        face_nodes(self.dim, self.degree + 1, f).into_iter().map(|i| self.node_point(e, i)).collect()
    }

    fn classify(&self, verts: &VoxelDatabase, mids: &VoxelDatabase, e: usize, el: &Element, f: usize) -> Result<Neighbor, MeshError> {
        let dim = self.dim;
        let mid = el.face_point(dim, f, None);
        if let Some(r) = self.opposite_record(mids, mid, f, (e, f)) {
            return Ok(Neighbor::Conforming { elem: r.elem, face: r.aux });
        }
        let (a, s) = face_axis_side(dim, f);
        let opp = opposite_face(dim, f);
        if dim > 1 && !verts.lookup(&self.quantizer.quantize(&mid)).is_empty() {
            let c0 = self.opposite_record(mids, el.face_point(dim, f, Some(0)), f, (e, f));
            let c1 = self.opposite_record(mids, el.face_point(dim, f, Some(1)), f, (e, f));
            return match (c0, c1) {
                (Some(c0), Some(c1))
                    if self.elements[c0.elem].level == el.level + 1 && self.elements[c1.elem].level == el.level + 1 =>
                {
                    Ok(Neighbor::Finer { elems: [c0.elem, c1.elem], face: opp })
                }
                _ => Err(MeshError::LevelJump { root: el.id.root, key: el.id.key, face: f }),
            };
        }
        if dim > 1 && el.level > 0 && child_index(el.id.key, dim) >> a & 1 == s {
            let (po, ps) = el.parent_box(dim);
            let parent = Element { id: el.id.parent(dim), level: el.level - 1, origin: po, size: ps, neighbors: vec![] };
            if let Some(r) = self.opposite_record(mids, parent.face_point(dim, f, None), f, (e, f)) {
                if self.elements[r.elem].level + 1 == el.level {
                    let t = 1 - a;
                    let half = child_index(el.id.key, dim) >> t & 1;
                    return Ok(Neighbor::Coarser { elem: r.elem, face: r.aux, half });
                }
                return Err(MeshError::LevelJump { root: el.id.root, key: el.id.key, face: f });
            }
        }
        if !self.strict || self.on_domain_boundary(el, f) {
            return Ok(Neighbor::Boundary);
        }
        Err(MeshError::Dangling { root: el.id.root, key: el.id.key, face: f })
    }

    /// Plain-text snapshot: one element per line with key, root, level, corners and degree.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for el in &self.elements {
            let _ = write!(out, "{} {} {}", el.id.key, el.id.root, el.level);
            for v in el.vertices(self.dim) {
                for x in &v[..self.dim] {
                    let _ = write!(out, " {x:.17e}");
                }
            }
            let _ = writeln!(out, " {}", self.degree);
        }
        out
    }

    /// Tensor-product application of per-direction 1D matrices to one element's values.
    pub fn tensor_apply(&self, mats: &[&Matrix], input: &[f64]) -> Vec<f64> {
        let n = self.degree + 1;
        let mut cur = input.to_vec();
        let mut tmp = vec![0.0; cur.len()];
        for (mu, m) in mats.iter().enumerate().take(self.dim) {
            crate::operators::apply_axis(m.as_slice(), n, self.dim, mu, &cur, &mut tmp);
            std::mem::swap(&mut cur, &mut tmp);
        }
        cur
    }
}

fn check_dim(dim: usize) -> Result<(), MeshError> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(MeshError::UnsupportedDimension(dim))
    }
}
