mod common;

use common::*;
use hsem::assembly::DofMap;
use hsem::basis::{gll_nodes_weights, GllBasis};
use hsem::mesh::{Domain, ElemId, Mesh};
use hsem::operators::MeshOps;
use hsem::solver::PcgOptions;
use hsem::timestepping::{advance_step, bdf_ext_coeffs, Advection, StepParams, TimeState};
use proptest::prelude::*;
use std::collections::BTreeSet;

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn dare_rules_hold_for_random_tag_sequences(seed in any::<u64>()) {
        if let Err(msg) = dare_sequence_check(seed, 4) {
            prop_assert!(false, "{}", msg);
        }
    }
}

proptest! {
    #[test]
    fn gll_quadrature_exact_to_degree_2p_minus_1(p in 1usize..=24, frac in 0.0f64..1.0) {
        let (x, w) = gll_nodes_weights(p).unwrap();
        let k = ((2 * p - 1) as f64 * frac).round() as i32;
        let quad: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k)).sum();
        let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
        prop_assert!((quad - exact).abs() < 1e-13, "p {} k {} quad {} exact {}", p, k, quad, exact);
    }

    #[test]
    fn gll_quadrature_misses_degree_2p(p in 1usize..=10) {
        let (x, w) = gll_nodes_weights(p).unwrap();
        let k = 2 * p as i32;
        let quad: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k)).sum();
        prop_assert!((quad - 2.0 / (k as f64 + 1.0)).abs() > 1e-9);
    }

    #[test]
    fn interpolation_reproduces_polynomials(p in 1usize..=16, c in proptest::collection::vec(-1.0f64..1.0, 17), x in -1.0f64..1.0) {
        let b = GllBasis::new(p).unwrap();
        let poly = |t: f64| c[..=p].iter().rev().fold(0.0, |acc, ci| acc * t + ci);
        let vals: Vec<f64> = b.nodes().iter().map(|&t| poly(t)).collect();
        prop_assert!((b.interpolate(&vals, x) - poly(x)).abs() < 1e-11);
    }

    #[test]
    fn bdf_ext_order_conditions(m in 1usize..=3, ratios in proptest::collection::vec(0.5f64..2.0, 3), t0 in -1.0f64..1.0, dt in 1e-3f64..0.5) {
        let mut stamps = vec![t0];
        let mut h = dt;
        for r in &ratios {
            let last = *stamps.last().unwrap();
            stamps.push(last - h);
            h *= r;
        }
        let (bdf, ext) = bdf_ext_coeffs(&stamps, m, m).unwrap();
        // shifted monomials keep the conditions well scaled
        for k in 0..=m {
            let p = |t: f64| ((t - t0) / dt).powi(k as i32);
            let dp = if k == 0 { 0.0 } else { k as f64 / dt * ((stamps[0] - t0) / dt).powi(k as i32 - 1) };
            let lhs = bdf[0] * p(stamps[0]) - (1..=m).map(|j| bdf[j] * p(stamps[j])).sum::<f64>();
            let scale = bdf.iter().enumerate().map(|(j, b)| (b * p(stamps[j])).abs()).sum::<f64>().max(1.0);
            prop_assert!((lhs - dp).abs() <= 1e-12 * scale, "bdf m {} k {} {} vs {}", m, k, lhs, dp);
        }
        for k in 0..m {
            let p = |t: f64| ((t - t0) / dt).powi(k as i32);
            let lhs: f64 = (0..m).map(|j| ext[j] * p(stamps[j + 1])).sum();
            let scale = (0..m).map(|j| (ext[j] * p(stamps[j + 1])).abs()).sum::<f64>().max(1.0);
            prop_assert!((lhs - p(stamps[0])).abs() <= 1e-12 * scale, "ext m {} k {}", m, k);
        }
    }

    #[test]
    fn smoothing_is_idempotent_on_random_meshes(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut mesh = Mesh::uniform(2, 3, 2, &[2, 2], &Domain::unit(2, rng.gen_bool(0.5), rng.gen_bool(0.5))).unwrap();
        let tags: BTreeSet<ElemId> = mesh.elements().iter().filter(|_| rng.gen_bool(0.5)).map(|e| e.id).collect();
        mesh.apply_dare(&mut [], &tags, &BTreeSet::new()).unwrap();
        let dof = DofMap::build(&mesh).unwrap();
        let q = dof.q_dense();
        for l in 0..q.rows() {
            prop_assert!((q.row(l).iter().sum::<f64>() - 1.0).abs() < 1e-13);
        }
        let u = random_vector(dof.n_local(), seed);
        for masked in [false, true] {
            let s = dof.smooth(&u, masked).unwrap();
            prop_assert!(max_abs_diff(&dof.smooth(&s, masked).unwrap(), &s) < 1e-12);
        }
    }
}

fn periodic_mass_drift(mesh: &Mesh, advection: Advection, steps: usize) -> f64 {
    let dof = DofMap::build(mesh).unwrap();
    let ops = MeshOps::new(mesh);
    let tau = 2.0 * std::f64::consts::PI;
    let u0 = dof.smooth(&mesh.sample(|x| 1.0 + (tau * x[0]).sin() * (tau * x[1]).cos() + 0.3 * (2.0 * tau * x[1]).sin()), false).unwrap();
    let mass = |u: &[f64]| u.iter().zip(ops.mass()).map(|(a, m)| a * m).sum::<f64>();
    let m0 = mass(&u0);
    let rates = hsem::timestepping::advection_rates(&ops, &advection, &[u0.clone()]);
    let mut state = TimeState { times: vec![0.0], fields: vec![vec![u0]], rates: vec![rates], step: 0 };
    let params = StepParams { m_bdf: 3, m_ext: 3, nu: 0.05, advection: &advection, solver: PcgOptions::default() };
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        advance_step(&mut state, &dof, &ops, &params, 1e-3, None).unwrap();
        worst = worst.max((mass(&state.current()[0]) - m0).abs() / m0.abs());
    }
    worst
}

#[test]
fn heat_steps_conserve_mass_on_periodic_meshes() {
    let mut mesh = Mesh::uniform(2, 6, 2, &[2, 2], &Domain::unit(2, true, false)).unwrap();
    assert!(periodic_mass_drift(&mesh, Advection::None, 6) < 1e-10);
    let tags: BTreeSet<ElemId> = [ElemId::new(1, 1), ElemId::new(4, 4)].into_iter().collect();
    mesh.apply_dare(&mut [], &tags, &BTreeSet::new()).unwrap();
    assert!(periodic_mass_drift(&mesh, Advection::None, 6) < 1e-10);
}

#[test]
fn constant_advection_conserves_mass_on_periodic_grid() {
    let mesh = Mesh::uniform(2, 6, 2, &[3, 2], &Domain::unit(2, true, false)).unwrap();
    assert!(periodic_mass_drift(&mesh, Advection::Constant([1.0, 0.5, 0.0]), 6) < 1e-10);
}
