#![allow(dead_code)]

use hsem::assembly::DofMap;
use hsem::linalg::Matrix;
use hsem::mesh::Mesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn pair_mesh(dirichlet: bool) -> Mesh {
    Mesh::from_elements(
        2,
        2,
        3,
        &[(1, 1, [0.0, 0.0, 0.0], [1.0, 1.0, 0.0]), (2, 2, [1.0, 0.0, 0.0], [1.0, 1.0, 0.0])],
        dirichlet,
    )
    .unwrap()
}

pub fn hanging_mesh(dirichlet: bool) -> Mesh {
    Mesh::from_elements(
        2,
        2,
        3,
        &[
            (1, 1, [0.0, 0.0, 0.0], [1.0, 1.0, 0.0]),
            (2, 8, [1.0, 0.0, 0.0], [0.5, 0.5, 0.0]),
            (2, 10, [1.0, 0.5, 0.0], [0.5, 0.5, 0.0]),
        ],
        dirichlet,
    )
    .unwrap()
}

/// Reference scatter matrix of the conforming two-element mesh, written row by
/// row as (global index, weight) lists.
pub fn pair_q() -> Matrix {
    let mut rows: Vec<Vec<(usize, f64)>> = (0..9).map(|i| vec![(i, 1.0)]).collect();
    for g in [2, 9, 10, 5, 11, 12, 8, 13, 14] {
        rows.push(vec![(g, 1.0)]);
    }
    dense(&rows, 15)
}

/// Reference scatter matrix of the three-element mesh with one hanging edge.
pub fn hanging_q() -> Matrix {
    let mut rows: Vec<Vec<(usize, f64)>> = (0..9).map(|i| vec![(i, 1.0)]).collect();
    let lo = vec![(2, 0.375), (5, 0.75), (8, -0.125)];
    let hi = vec![(2, -0.125), (5, 0.75), (8, 0.375)];
    for r in [vec![(2, 1.0)], vec![(9, 1.0)], vec![(10, 1.0)], lo, vec![(11, 1.0)], vec![(12, 1.0)], vec![(5, 1.0)], vec![(13, 1.0)], vec![(14, 1.0)]] {
        rows.push(r);
    }
    for r in [vec![(5, 1.0)], vec![(13, 1.0)], vec![(14, 1.0)], hi, vec![(15, 1.0)], vec![(16, 1.0)], vec![(8, 1.0)], vec![(17, 1.0)], vec![(18, 1.0)]] {
        rows.push(r);
    }
    dense(&rows, 19)
}

pub const PAIR_W: [f64; 18] = [1., 1., 0.5, 1., 1., 0.5, 1., 1., 0.5, 0.5, 1., 1., 0.5, 1., 1., 0.5, 1., 1.];

pub const HANGING_W: [f64; 27] = [
    1., 1., 1., 1., 1., 1., 1., 1., 1., 0., 1., 1., 0., 1., 1., 0., 0.5, 0.5, 0., 0.5, 0.5, 0., 1., 1., 0., 1., 1.,
];

fn dense(rows: &[Vec<(usize, f64)>], cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows.len(), cols);
    for (i, r) in rows.iter().enumerate() {
        for &(j, v) in r {
            m.set(i, j, v);
        }
    }
    m
}

/// Maps each reference global index to the library's, using Boolean rows.
pub fn column_permutation(reference: &Matrix, dof: &DofMap) -> Vec<usize> {
    let mut perm = vec![usize::MAX; reference.cols()];
    for l in 0..reference.rows() {
        let row = reference.row(l);
        let ones: Vec<usize> = (0..row.len()).filter(|&j| row[j] == 1.0).collect();
        let nonzero = row.iter().filter(|v| **v != 0.0).count();
        if ones.len() == 1 && nonzero == 1 && perm[ones[0]] == usize::MAX {
            if let Some(g) = dof.global_of(l) {
                perm[ones[0]] = g;
            }
        }
    }
    perm
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct OracleReport {
    pub global_count: bool,
    pub permutation: bool,
    pub boolean_exact: bool,
    pub interp_err: f64,
    pub multiplicity_exact: bool,
    pub sigma_err: f64,
    pub smooth_err: f64,
    pub smooth_final_err: f64,
}

impl OracleReport {
    pub fn passes(&self) -> bool {
        self.global_count
            && self.permutation
            && self.boolean_exact
            && self.multiplicity_exact
            && self.interp_err <= 1e-13
            && self.sigma_err <= 1e-12
            && self.smooth_err <= 1e-12
            && self.smooth_final_err <= 1e-12
    }
}

/// Compares the library's Q, W, Σ, S and S_f against dense matrices built
/// from the reference scatter matrix and multiplicity list.
pub fn assembly_oracle(mesh: &Mesh, reference: &Matrix, w_ref: &[f64]) -> OracleReport {
    let dof = DofMap::build(mesh).unwrap();
    let nl = reference.rows();
    let ng = reference.cols();
    let global_count = dof.n_global() == ng && dof.n_local() == nl;
    let perm = column_permutation(reference, &dof);
    let mut seen = vec![false; ng];
    let mut permutation = global_count;
    for &g in &perm {
        if g >= ng || seen[g] {
            permutation = false;
            break;
        }
        seen[g] = true;
    }
    if !permutation {
        return OracleReport {
            global_count,
            permutation,
            boolean_exact: false,
            interp_err: f64::INFINITY,
            multiplicity_exact: false,
            sigma_err: f64::INFINITY,
            smooth_err: f64::INFINITY,
            smooth_final_err: f64::INFINITY,
        };
    }

    let mut q = Matrix::zeros(nl, ng);
    for l in 0..nl {
        for c in 0..ng {
            q.set(l, perm[c], reference.get(l, c));
        }
    }
    let mine = dof.q_dense();
    let mut boolean_exact = true;
    let mut interp_err: f64 = 0.0;
    for l in 0..nl {
        let boolean = q.row(l).iter().all(|&v| v == 0.0 || v == 1.0);
        for g in 0..ng {
            if boolean {
                boolean_exact &= mine.get(l, g) == q.get(l, g);
            } else {
                interp_err = interp_err.max((mine.get(l, g) - q.get(l, g)).abs());
            }
        }
    }
    let multiplicity_exact = dof.multiplicity() == w_ref;

    // global coordinates and Dirichlet flags from the reference Boolean rows
    let (lo, hi) = bounding_box(mesh);
    let mut on_boundary = vec![false; ng];
    for l in 0..nl {
        if w_ref[l] > 0.0 {
            let g = (0..ng).find(|&g| q.get(l, g) == 1.0).unwrap();
            let x = mesh.node_point(l / mesh.nodes_per_element(), l % mesh.nodes_per_element());
            on_boundary[g] = mesh.domain().dirichlet && (0..2).any(|mu| x[mu] == lo[mu] || x[mu] == hi[mu]);
        }
    }
    let mask = |ug: &mut Vec<f64>| {
        for (v, &b) in ug.iter_mut().zip(&on_boundary) {
            if b {
                *v = 0.0;
            }
        }
    };
    let qt = q.transpose();
    // Q_conf^T W: only copies with nonzero multiplicity are Boolean rows of Q
    let mut cw = Matrix::zeros(ng, nl);
    for l in 0..nl {
        if w_ref[l] > 0.0 {
            let g = (0..ng).find(|&g| q.get(l, g) == 1.0).unwrap();
            cw.set(g, l, w_ref[l]);
        }
    }

    let mut sigma_err: f64 = 0.0;
    let mut smooth_err: f64 = 0.0;
    let mut smooth_final_err: f64 = 0.0;
    for seed in 0..4 {
        let u = random_vector(nl, seed);
        for masked in [false, true] {
            let mut ug = qt.mul_vec(&u);
            if masked {
                mask(&mut ug);
            }
            sigma_err = sigma_err.max(max_abs_diff(&q.mul_vec(&ug), &dof.dss(&u, masked).unwrap()));
        }
        let mut ug = cw.mul_vec(&u);
        smooth_final_err = smooth_final_err.max(max_abs_diff(&q.mul_vec(&ug), &dof.smooth(&u, false).unwrap()));
        mask(&mut ug);
        smooth_err = smooth_err.max(max_abs_diff(&q.mul_vec(&ug), &dof.smooth(&u, true).unwrap()));
    }
    OracleReport { global_count, permutation, boolean_exact, interp_err, multiplicity_exact, sigma_err, smooth_err, smooth_final_err }
}

fn bounding_box(mesh: &Mesh) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for e in mesh.elements() {
        for mu in 0..mesh.dim() {
            lo[mu] = lo[mu].min(e.origin[mu]);
            hi[mu] = hi[mu].max(e.origin[mu] + e.size[mu]);
        }
    }
    (lo, hi)
}

/// Largest difference between the PCG solution and a dense direct solve of the
/// assembled Helmholtz system `Q^T H Q` over the free global unknowns.
pub fn solver_oracle(mesh: &Mesh, beta: f64, nu: f64, exact: impl Fn([f64; 3]) -> f64) -> f64 {
    use hsem::linalg::solve_dense;
    use hsem::operators::MeshOps;
    use hsem::solver::{pcg_solve, PcgOptions};

    let dof = DofMap::build(mesh).unwrap();
    let ops = MeshOps::new(mesh);
    let nl = dof.n_local();
    let ng = dof.n_global();
    let mut h = Matrix::zeros(nl, nl);
    let mut col = vec![0.0; nl];
    for j in 0..nl {
        let mut e = vec![0.0; nl];
        e[j] = 1.0;
        ops.helmholtz(beta, nu, &e, &mut col).unwrap();
        for i in 0..nl {
            h.set(i, j, col[i]);
        }
    }
    let q = dof.q_dense();
    let fixed = dof.dirichlet_global();
    let free: Vec<usize> = (0..ng).filter(|&g| !fixed[g]).collect();
    let mut gb = vec![0.0; ng];
    for g in 0..ng {
        if fixed[g] {
            gb[g] = exact(dof.global_points()[g]);
        }
    }

    let source = mesh.sample(|x| exact(x) * (beta + 2.0 * nu));
    let f: Vec<f64> = source.iter().zip(ops.mass()).map(|(s, m)| s * m).collect();
    let hub = h.mul_vec(&q.mul_vec(&gb));
    let rhs_local: Vec<f64> = f.iter().zip(&hub).map(|(a, b)| a - b).collect();
    let qt = q.transpose();
    let qthq = qt.mul(&h).mul(&q);
    let rhs_global = qt.mul_vec(&rhs_local);
    let mut a = Matrix::zeros(free.len(), free.len());
    for (i, &gi) in free.iter().enumerate() {
        for (j, &gj) in free.iter().enumerate() {
            a.set(i, j, qthq.get(gi, gj));
        }
    }
    let b: Vec<f64> = free.iter().map(|&g| rhs_global[g]).collect();
    let x = solve_dense(&a, &b).unwrap();
    let mut ug = gb.clone();
    for (i, &g) in free.iter().enumerate() {
        ug[g] = x[i];
    }
    let expect = q.mul_vec(&ug);

    let dl = dof.dirichlet_local();
    let ub: Vec<f64> = (0..nl)
        .map(|l| if dl[l] { exact(mesh.node_point(l / mesh.nodes_per_element(), l % mesh.nodes_per_element())) } else { 0.0 })
        .collect();
    let res = pcg_solve(&dof, &ops, beta, nu, &f, &ub, &PcgOptions::default()).unwrap();
    assert!(res.converged);
    max_abs_diff(&res.u, &expect)
}

/// Brute-force face adjacency of two axis-aligned boxes, with optional wrap.
fn share_face(a: &hsem::mesh::Element, b: &hsem::mesh::Element, dim: usize, period: [Option<f64>; 3]) -> bool {
    let tol = 1e-12;
    let close = |x: f64, y: f64, p: Option<f64>| match p {
        Some(l) => {
            let d = (x - y).rem_euclid(l);
            d < tol || l - d < tol
        }
        None => (x - y).abs() < tol,
    };
    let overlap = |a0: f64, a1: f64, b0: f64, b1: f64, p: Option<f64>| {
        let shifts: &[f64] = match p {
            Some(l) => &[-l, 0.0, l][..],
            None => &[0.0][..],
        };
        shifts.iter().any(|s| (a1.min(b1 + s) - a0.max(b0 + s)) > tol)
    };
    for mu in 0..dim {
        let touches = close(a.origin[mu] + a.size[mu], b.origin[mu], period[mu]) || close(b.origin[mu] + b.size[mu], a.origin[mu], period[mu]);
        if !touches {
            continue;
        }
        if (0..dim)
            .filter(|&nu| nu != mu)
            .all(|nu| overlap(a.origin[nu], a.origin[nu] + a.size[nu], b.origin[nu], b.origin[nu] + b.size[nu], period[nu]))
        {
            return true;
        }
    }
    false
}

/// Applies `steps` random DARe requests to a random quadtree mesh and checks
/// the refinement and coarsening rules, key bookkeeping, geometry, balance,
/// field transfer and the rebuilt assembly after each one.
pub fn dare_sequence_check(seed: u64, steps: usize) -> Result<(), String> {
    use hsem::mesh::keys::key_in_range;
    use hsem::mesh::{child_index, level_of, Domain, ElemId};
    use std::collections::{BTreeMap, BTreeSet, HashSet};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 2;
    let grid = [rng.gen_range(1..=2usize), rng.gen_range(1..=2usize)];
    let periodic = rng.gen_bool(0.5);
    let lmax = rng.gen_range(1..=3u32);
    let domain = Domain::unit(d, periodic, false);
    let mut mesh = Mesh::uniform(d, 2, lmax, &grid, &domain).map_err(|e| e.to_string())?;
    let roots: BTreeMap<u64, ([f64; 3], [f64; 3])> = mesh.elements().iter().map(|e| (e.id.root, (e.origin, e.size))).collect();
    let period = [if periodic { Some(1.0) } else { None }, if periodic { Some(1.0) } else { None }, None];
    let poly = |x: [f64; 3]| 1.0 + 2.0 * x[0] - 3.0 * x[1] + x[0] * x[1] - 0.5 * x[0] * x[0] * x[1] * x[1];
    let mut fields = vec![mesh.sample(poly)];

    for step in 0..steps {
        let ctx = |msg: String| format!("seed {seed} step {step}: {msg}");
        let before: BTreeMap<ElemId, u32> = mesh.elements().iter().map(|e| (e.id, e.level)).collect();
        let p_ref = rng.gen_range(0.0..0.4);
        let p_family = rng.gen_range(0.0..0.9);
        let p_single = rng.gen_range(0.0..0.3);
        let mut refine = BTreeSet::new();
        let mut coarsen = BTreeSet::new();
        let mut family_choice: BTreeMap<ElemId, bool> = BTreeMap::new();
        for e in mesh.elements() {
            if rng.gen_bool(p_ref) {
                refine.insert(e.id);
                continue;
            }
            let fam = *family_choice.entry(e.id.parent(d)).or_insert_with(|| rng.gen_bool(p_family));
            if fam || rng.gen_bool(p_single) {
                coarsen.insert(e.id);
            }
        }
        let closed = mesh.finalize_refine(&refine);
        if !refine.iter().filter(|id| before[id] < lmax).all(|id| closed.contains(id)) {
            return Err(ctx("refinement closure dropped a valid tag".into()));
        }
        if closed.iter().any(|id| before[id] >= lmax) {
            return Err(ctx("r1: closure contains an element at the level cap".into()));
        }
        mesh.apply_dare(&mut fields, &refine, &coarsen).map_err(|e| ctx(e.to_string()))?;
        let after: BTreeMap<ElemId, u32> = mesh.elements().iter().map(|e| (e.id, e.level)).collect();

        if after.len() != mesh.len() {
            return Err(ctx("duplicate element identity".into()));
        }
        let keys: HashSet<(u64, u64)> = mesh.elements().iter().map(|e| (e.id.root, e.id.key)).collect();
        if keys.len() != mesh.len() {
            return Err(ctx("duplicate key".into()));
        }
        for e in mesh.elements() {
            if e.level > lmax {
                return Err(ctx(format!("r1: {:?} at level {}", e.id, e.level)));
            }
            if level_of(e.id.key, e.id.root, d).ok() != Some(e.level) || !key_in_range(e.id.key, e.id.root, d) {
                return Err(ctx(format!("key {:?} inconsistent with level {}", e.id, e.level)));
            }
            // geometry from the key path
            let (mut o, mut s) = roots[&e.id.root];
            let mut path = Vec::new();
            let mut k = e.id.key;
            for _ in 0..e.level {
                path.push(child_index(k, d));
                k >>= d;
            }
            for &c in path.iter().rev() {
                for mu in 0..d {
                    s[mu] *= 0.5;
                    o[mu] += (c >> mu & 1) as f64 * s[mu];
                }
            }
            if (0..d).any(|mu| (o[mu] - e.origin[mu]).abs() > 1e-14 || (s[mu] - e.size[mu]).abs() > 1e-14) {
                return Err(ctx(format!("geometry of {:?} disagrees with its key", e.id)));
            }
        }
        let area: f64 = mesh.elements().iter().map(|e| e.size[0] * e.size[1]).sum();
        if (area - 1.0).abs() > 1e-12 {
            return Err(ctx(format!("elements cover area {area}")));
        }

        for (id, &lvl) in &before {
            let present = after.contains_key(id);
            if closed.contains(id) {
                let kids = (0..4u64).all(|c| after.contains_key(&ElemId::new(id.root, id.key * 4 + c)));
                if present || !kids {
                    return Err(ctx(format!("{id:?} in the refinement list was not split")));
                }
            } else if present {
                continue;
            } else {
                let parent = id.parent(d);
                if lvl == 0 {
                    return Err(ctx(format!("c1: root {id:?} disappeared")));
                }
                if !after.contains_key(&parent) {
                    return Err(ctx(format!("{id:?} vanished without a parent")));
                }
                for c in 0..4u64 {
                    let sib = ElemId::new(id.root, parent.key * 4 + c);
                    if !coarsen.contains(&sib) {
                        return Err(ctx(format!("c2: sibling {sib:?} of coarsened {id:?} was not tagged")));
                    }
                    if closed.contains(&sib) || refine.contains(&sib) {
                        return Err(ctx(format!("c3: {sib:?} both refined and coarsened")));
                    }
                }
            }
        }

        let els = mesh.elements();
        for i in 0..els.len() {
            for j in i + 1..els.len() {
                if share_face(&els[i], &els[j], d, period) && els[i].level.abs_diff(els[j].level) > 1 {
                    return Err(ctx(format!("r2/c4: {:?} and {:?} differ by more than one level", els[i].id, els[j].id)));
                }
            }
        }
        if !mesh.is_balanced() {
            return Err(ctx("mesh reports imbalance".into()));
        }

        let expect = mesh.sample(poly);
        let err = max_abs_diff(&fields[0], &expect);
        if err > 1e-11 {
            return Err(ctx(format!("transferred polynomial field off by {err:e}")));
        }

        let dof = DofMap::build(&mesh).map_err(|e| ctx(e.to_string()))?;
        for (l, row) in dof.interp_rows() {
            let sum: f64 = row.iter().map(|(_, w)| w).sum();
            if (sum - 1.0).abs() > 1e-13 {
                return Err(ctx(format!("Q row {l} sums to {sum}")));
            }
        }
        let u = random_vector(dof.n_local(), seed ^ step as u64);
        let s1 = dof.smooth(&u, false).unwrap();
        let s2 = dof.smooth(&s1, false).unwrap();
        if max_abs_diff(&s1, &s2) > 1e-12 {
            return Err(ctx("S_f is not idempotent".into()));
        }
        let ug = random_vector(dof.n_global(), seed.wrapping_add(99));
        let cont = dof.scatter(&ug).unwrap();
        if max_abs_diff(&dof.smooth(&cont, false).unwrap(), &cont) > 1e-12 {
            return Err(ctx("S_f moves a continuous field".into()));
        }
        if !periodic && max_abs_diff(&dof.smooth(&expect, false).unwrap(), &expect) > 1e-11 {
            return Err(ctx("S_f moves the sampled polynomial".into()));
        }
    }
    Ok(())
}
