use hsem::problems::{gaussian_solution, nwave_potential, nwave_solution, parabola_vertex, FrontTracker, ProblemKind, ProblemSpec};
use proptest::prelude::*;

const H: f64 = 1e-4;

fn central<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> (f64, f64) {
    let (fm, f0, fp) = (f(x - h), f(x), f(x + h));
    ((fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h))
}

/// `u_t + c . grad u - nu lap u` by central differences, with the sum of the
/// magnitudes of its terms.
fn linear_residual(spec: &ProblemSpec, x: [f64; 3], t: f64) -> (f64, f64) {
    let u = |x: [f64; 3], t: f64| gaussian_solution(spec, x, t).unwrap();
    let (ut, _) = central(|s| u(x, s), t, H);
    let mut r = ut;
    let mut scale = ut.abs();
    for mu in 0..spec.dim {
        let (d1, d2) = central(
            |s| {
                let mut y = x;
                y[mu] = s;
                u(y, t)
            },
            x[mu],
            H,
        );
        r += spec.c[mu] * d1 - spec.nu * d2;
        scale += (spec.c[mu] * d1).abs() + (spec.nu * d2).abs();
    }
    (r, scale)
}

proptest! {
    #[test]
    fn heat_solution_satisfies_pde(x in 0.0f64..1.0, y in 0.0f64..1.0, t in 0.01f64..0.3) {
        let spec = ProblemSpec::heat(2);
        let (r, scale) = linear_residual(&spec, [x, y, 0.0], t);
        prop_assert!(r.abs() < 1e-4 * scale + 1e-7, "{} of {}", r, scale);
    }

    #[test]
    fn advected_solution_satisfies_pde(x in 0.0f64..1.0, y in 0.0f64..1.0, t in 0.01f64..0.3) {
        let spec = ProblemSpec::advection(2);
        let (r, scale) = linear_residual(&spec, [x, y, 0.0], t);
        prop_assert!(r.abs() < 1e-4 * scale + 1e-7, "{} of {}", r, scale);
    }

    #[test]
    fn gaussian_is_periodic(x in 0.0f64..1.0, y in 0.0f64..1.0, t in 0.0f64..0.3) {
        let spec = ProblemSpec::advection(2);
        let a = gaussian_solution(&spec, [x, y, 0.0], t).unwrap();
        let b = gaussian_solution(&spec, [x + 1.0, y - 1.0, 0.0], t).unwrap();
        prop_assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn advection_is_a_translation_of_heat(x in 0.0f64..1.0, y in 0.0f64..1.0, t in 0.0f64..0.3) {
        let adv = ProblemSpec::advection(2);
        let heat = ProblemSpec { nu: adv.nu, ..ProblemSpec::heat(2) };
        let a = gaussian_solution(&adv, [x, y, 0.0], t).unwrap();
        let b = gaussian_solution(&heat, [x - t, y, 0.0], t).unwrap();
        prop_assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn nwave_is_cole_hopf_of_potential(x in 0.0f64..1.0, y in 0.0f64..1.0, t in 0.05f64..1.0) {
        let spec = ProblemSpec::nwave();
        let u = nwave_solution(&spec, [x, y, 0.0], t).unwrap();
        let h = 1e-6;
        for mu in 0..2 {
            let mut p = [x, y, 0.0];
            let mut m = [x, y, 0.0];
            p[mu] += h;
            m[mu] -= h;
            let dlog = (nwave_potential(&spec, p, t).ln() - nwave_potential(&spec, m, t).ln()) / (2.0 * h);
            let expect = -2.0 * spec.nu * dlog;
            prop_assert!((u[mu] - expect).abs() < 1e-6 * (1.0 + expect.abs()), "{} vs {}", u[mu], expect);
        }
    }

    #[test]
    fn nwave_potential_solves_heat_equation(x in 0.3f64..0.7, y in 0.3f64..0.7, t in 0.05f64..1.0) {
        let spec = ProblemSpec::nwave();
        let chi = |x: [f64; 3], t: f64| nwave_potential(&spec, x, t);
        let h = 1e-4;
        let (ct, _) = central(|s| chi([x, y, 0.0], s), t, 1e-5);
        let (_, cxx) = central(|s| chi([s, y, 0.0], t), x, h);
        let (_, cyy) = central(|s| chi([x, s, 0.0], t), y, h);
        let scale = chi([x, y, 0.0], t);
        prop_assert!((ct - spec.nu * (cxx + cyy)).abs() < 1e-5 * scale * (1.0 + 1.0 / (t * t)));
    }

    #[test]
    fn nwave_satisfies_burgers(x in 0.0f64..1.0, y in 0.0f64..1.0, t in 0.1f64..1.0) {
        let spec = ProblemSpec::nwave();
        let u = |x: [f64; 3], t: f64| nwave_solution(&spec, x, t).unwrap();
        let p = [x, y, 0.0];
        let u0 = u(p, t);
        let h = 1e-4;
        for c in 0..2 {
            let (ut, _) = central(|s| u(p, s)[c], t, 1e-5);
            let mut r = ut;
            for mu in 0..2 {
                let (d1, d2) = central(
                    |s| {
                        let mut q = p;
                        q[mu] = s;
                        u(q, t)[c]
                    },
                    p[mu],
                    h,
                );
                r += u0[mu] * d1 - spec.nu * d2;
            }
            prop_assert!(r.abs() < 5e-3, "component {} residual {}", c, r);
        }
    }

    #[test]
    fn parabola_vertex_exact(a in -5.0f64..-0.1, tv in -1.0f64..1.0, vv in -3.0f64..3.0, h in 0.01f64..0.3, shift in -0.9f64..0.9) {
        let f = |t: f64| a * (t - tv).powi(2) + vv;
        let t1 = tv + shift * h;
        let (t, v) = parabola_vertex([t1 - h, t1, t1 + h], [f(t1 - h), f(t1), f(t1 + h)]).unwrap();
        prop_assert!((t - tv).abs() < 1e-9 && (v - vv).abs() < 1e-9);
    }
}

#[test]
fn nwave_initial_profile_vanishes_far_from_centre() {
    let spec = ProblemSpec::nwave();
    let u = nwave_solution(&spec, [0.0, 0.0, 0.0], spec.t0).unwrap();
    assert!(u[0].abs() < 1e-100 && u[1].abs() < 1e-100);
    assert!(nwave_solution(&spec, [0.5, 0.5, 0.0], 0.0).is_err());
}

#[test]
fn front_tracker_refines_discrete_peak() {
    let mut tr = FrontTracker::new();
    for i in 0..20 {
        let t = 0.01 * i as f64;
        tr.push(t, 10.0 - (t - 0.1234).powi(2) * 100.0);
    }
    let (t, v) = tr.peak().unwrap();
    assert!((t - 0.1234).abs() < 1e-10 && (v - 10.0).abs() < 1e-10);
}

#[test]
fn kinds_round_trip_names() {
    for k in [ProblemKind::Heat, ProblemKind::Advection, ProblemKind::BurgersFront, ProblemKind::NWave] {
        assert_eq!(ProblemKind::parse(k.name()), Some(k));
        ProblemSpec::default_for(k).validate().unwrap();
    }
    assert_eq!(ProblemKind::parse("navier_stokes"), None);
}
