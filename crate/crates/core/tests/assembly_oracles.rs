mod common;

use common::*;
use hsem::assembly::DofMap;

#[test]
fn conforming_pair_matches_reference_matrices() {
    for dirichlet in [false, true] {
        let r = assembly_oracle(&pair_mesh(dirichlet), &pair_q(), &PAIR_W);
        assert!(r.passes(), "{r:?}");
    }
}

#[test]
fn hanging_edge_matches_reference_matrices() {
    for dirichlet in [false, true] {
        let r = assembly_oracle(&hanging_mesh(dirichlet), &hanging_q(), &HANGING_W);
        assert!(r.passes(), "{r:?}");
    }
}

#[test]
fn reference_matrices_have_unit_row_sums() {
    for q in [pair_q(), hanging_q()] {
        for l in 0..q.rows() {
            assert!((q.row(l).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }
}

#[test]
fn parent_corner_scatter_reaches_child_midpoint() {
    let dof = DofMap::build(&hanging_mesh(false)).unwrap();
    let mut ug = vec![0.0; dof.n_global()];
    ug[dof.global_of(8).unwrap()] = 1.0;
    let u = dof.scatter(&ug).unwrap();
    assert!((u[12] + 0.125).abs() < 1e-15);
    assert!((u[21] - 0.375).abs() < 1e-15);
}

#[test]
fn smoothing_fixes_continuous_fields() {
    for mesh in [pair_mesh(false), hanging_mesh(false)] {
        let dof = DofMap::build(&mesh).unwrap();
        let ug = random_vector(dof.n_global(), 7);
        let u = dof.scatter(&ug).unwrap();
        assert!(max_abs_diff(&dof.smooth(&u, false).unwrap(), &u) < 1e-12);
    }
}
