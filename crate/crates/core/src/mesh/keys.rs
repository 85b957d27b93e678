//! Quadtree key arithmetic.
//!
//! Children of key `k` are `2^d k .. 2^d (k+1) - 1`; the parent is `k / 2^d`.

use super::MeshError;

/// Identity of a live element: root ordinal plus tree key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElemId {
    pub root: u64,
    pub key: u64,
}

impl ElemId {
    pub fn new(root: u64, key: u64) -> Self {
        Self { root, key }
    }

    pub fn parent(&self, d: usize) -> Self {
        Self { root: self.root, key: parent_key(self.key, d) }
    }
}

/// Level of `key` within the tree rooted at `root`, in exact integer arithmetic.
pub fn level_of(key: u64, root: u64, d: usize) -> Result<u32, MeshError> {
    if root == 0 || key < root {
        return Err(MeshError::KeyBelowRoot { key, root });
    }
    let mut level = 0;
    let mut lo = root as u128;
    let k = key as u128;
    while k >= lo << d {
        lo <<= d;
        level += 1;
    }
    Ok(level)
}

/// True when `key` lies inside the valid key range of its level for `root`.
pub fn key_in_range(key: u64, root: u64, d: usize) -> bool {
    match level_of(key, root, d) {
        Ok(l) => {
            let shift = d as u32 * l;
            (key as u128) < ((root as u128 + 1) << shift)
        }
        Err(_) => false,
    }
}

pub fn child_keys(key: u64, root: u64, d: usize, lmax: u32) -> Result<Vec<u64>, MeshError> {
    let level = level_of(key, root, d)?;
    if level >= lmax {
        return Err(MeshError::LevelOverflow { key, level: level + 1, lmax });
    }
    let base = key.checked_shl(d as u32).filter(|b| b >> d == key).ok_or(MeshError::LevelOverflow {
        key,
        level: level + 1,
        lmax,
    })?;
    Ok((0..1u64 << d).map(|c| base + c).collect())
}

#[inline]
pub fn parent_key(key: u64, d: usize) -> u64 {
    key >> d
}

/// Position of `key` among its siblings; bit `mu` selects the upper half in direction `mu`.
#[inline]
pub fn child_index(key: u64, d: usize) -> usize {
    (key & ((1u64 << d) - 1)) as usize
}

/// First root key that cannot collide with any descendant of `root` up to `lmax`.
pub fn next_root_key(root: u64, d: usize, lmax: u32) -> Option<u64> {
    let shift = d as u32 * lmax;
    if shift >= 64 {
        return None;
    }
    (1u64 << shift).checked_mul(root + 1)
}
