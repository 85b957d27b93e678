//! Voxel database: quantized point lookup for element vertices and face midpoints.

use std::collections::HashMap;

/// Ticks per unit of normalized domain extent.
pub const TICKS: i64 = 1 << 30;

/// Maps physical coordinates to integer lattice points, wrapping periodic directions.
#[derive(Debug, Clone)]
pub struct Quantizer {
    dim: usize,
    lower: [f64; 3],
    extent: [f64; 3],
    periodic: [bool; 3],
}

impl Quantizer {
    pub fn new(dim: usize, lower: [f64; 3], upper: [f64; 3], periodic: [bool; 3]) -> Self {
        let mut extent = [1.0; 3];
        for mu in 0..dim {
            extent[mu] = upper[mu] - lower[mu];
        }
        Self { dim, lower, extent, periodic }
    }

    pub fn quantize(&self, x: &[f64; 3]) -> [i64; 3] {
        let mut q = [0i64; 3];
        for mu in 0..self.dim {
            let t = ((x[mu] - self.lower[mu]) / self.extent[mu] * TICKS as f64).round() as i64;
            q[mu] = if self.periodic[mu] { t.rem_euclid(TICKS) } else { t };
        }
        q
    }
}

/// Interleaves the bits of the lattice coordinates into a Morton index.
pub fn morton(q: &[i64; 3], dim: usize) -> u128 {
    let mut code = 0u128;
    for bit in 0..32 {
        for (mu, &c) in q.iter().enumerate().take(dim) {
            let b = ((c as u64) >> bit) & 1;
            code |= (b as u128) << (bit * dim + mu);
        }
    }
    code
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Vertex,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VdbRecord {
    pub point: [i64; 3],
    pub component: Component,
    /// Index of the element in the mesh element list.
    pub elem: usize,
    pub key: u64,
    pub root: u64,
    /// Vertex number or face id, depending on `component`.
    pub aux: usize,
}

#[derive(Debug, Default)]
pub struct VoxelDatabase {
    map: HashMap<[i64; 3], Vec<VdbRecord>>,
}

impl VoxelDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, rec: VdbRecord) {
        self.map.entry(rec.point).or_default().push(rec);
    }

    pub fn lookup(&self, point: &[i64; 3]) -> &[VdbRecord] {
        self.map.get(point).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.map.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
