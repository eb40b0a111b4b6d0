use std::f64::consts::PI;

use approx::assert_relative_eq;
use cloaksim::mode_solver::*;
use cloaksim::specfun::{bessel_j_zeros, sph_bessel_dj, sph_bessel_j, sph_hankel1};
use cloaksim::vsh::{self, build_quadrature, project, CVec3, ModeIndex, TangentialBasis, TangentialFieldSamples};
use nalgebra::{Matrix2, Vector2, Vector3};
use num_complex::Complex64;
use std::sync::Arc;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn z1() -> f64 {
    bessel_j_zeros(1, 1, 10.0)[0].x
}

fn plane(rho: f64, omega: f64) -> TransmissionSolution {
    let cfg = ScenarioConfig::new(rho, omega, SourceSpec::PlaneWave(PlaneWave::reference())).unwrap();
    solve_plane_wave(&cfg).unwrap()
}

fn interior(rho: f64, omega: f64, terms: Vec<InteriorTerm>) -> TransmissionSolution {
    let cfg = ScenarioConfig::new(rho, omega, SourceSpec::Interior(terms)).unwrap();
    solve_interior_source(&cfg).unwrap()
}

fn curl<F: Fn(&Vector3<f64>) -> CVec3>(f: F, x: &Vector3<f64>, h: f64) -> CVec3 {
    let d = |k: usize| {
        let mut e = Vector3::zeros();
        e[k] = h;
        (f(&(x + e)) - f(&(x - e))) / Complex64::from(2.0 * h)
    };
    let (dx, dy, dz) = (d(0), d(1), d(2));
    CVec3::new(dy[2] - dz[1], dz[0] - dx[2], dx[1] - dy[0])
}

fn rel(a: &CVec3, b: &CVec3) -> f64 {
    (a - b).norm() / b.norm().max(a.norm())
}

fn current(terms: &[InteriorTerm], omega: f64, x: &Vector3<f64>) -> CVec3 {
    let r = x.norm();
    terms
        .iter()
        .map(|t| {
            let v = vsh::eval_vnm(t.mode.n, t.mode.m, x).unwrap();
            v * (t.amplitude * t.profile.eval(omega, r))
        })
        .sum()
}

#[test]
fn synthesized_fields_solve_maxwell_on_both_sides() {
    let (rho, omega) = (0.3, 2.0);
    let sol = plane(rho, omega);
    let k = rho * omega;
    for x in [Vector3::new(0.9, -1.1, 0.7), Vector3::new(-0.3, 0.4, 0.35)] {
        let outside = x.norm() > 1.0;
        let kk = if outside { k } else { omega };
        let e = |y: &Vector3<f64>| sol.synthesize(y).0;
        let h = |y: &Vector3<f64>| sol.synthesize(y).1;
        let (e0, h0) = sol.synthesize(&x);
        assert!(rel(&curl(e, &x, 1e-5), &(h0 * (I * kk))) < 1e-7, "curl E at {x}");
        assert!(rel(&curl(h, &x, 1e-5), &(e0 * (-I * kk))) < 1e-7, "curl H at {x}");
    }

    let terms = vec![
        InteriorTerm::bessel(1, 1).unwrap(),
        InteriorTerm {
            mode: ModeIndex::te(2, -1).unwrap(),
            profile: RadialProfile::custom(|r| Complex64::new(1.0 - r * r, 0.5 * r)),
            amplitude: Complex64::new(0.3, -0.8),
        },
    ];
    let sol = interior(0.2, 1.0, terms.clone());
    let x = Vector3::new(0.2, 0.45, -0.3);
    let (e0, h0) = sol.synthesize(&x);
    let ce = curl(|y| sol.synthesize(y).0, &x, 1e-5);
    let ch = curl(|y| sol.synthesize(y).1, &x, 1e-5);
    assert!(rel(&ce, &(h0 * I)) < 1e-7);
    let rhs = e0 * (-I) + current(&terms, 1.0, &x);
    assert!(rel(&ch, &rhs) < 1e-7);

    let x = Vector3::new(2.0, 1.0, -1.5);
    let (e0, h0) = sol.synthesize(&x);
    let ce = curl(|y| sol.synthesize(y).0, &x, 1e-4);
    assert!(rel(&ce, &(h0 * (I * 0.2))) < 1e-6);
    let ch = curl(|y| sol.synthesize(y).1, &x, 1e-4);
    assert!(rel(&ch, &(e0 * (-I * 0.2))) < 1e-6);
}

#[test]
fn interface_conditions_hold_pointwise() {
    let sol = interior(0.1, 1.0, vec![InteriorTerm::bessel(1, 1).unwrap()]);
    let x = Vector3::new(0.48, -0.6, 0.64);
    let (ei, hi) = sol.synthesize_side(&x, Side::Interior);
    let (eo, ho) = sol.synthesize_side(&x, Side::Exterior);
    let xh = x.map(Complex64::from);
    assert!((xh.cross(&(eo - ei))).norm() < 1e-10 * ei.norm());
    assert!((xh.cross(&(ho - hi))).norm() < 1e-10 * hi.norm());

    // Plane wave: the jump equals minus the incident tangential trace.
    let (rho, omega) = (0.2, 1.0);
    let sol = plane(rho, omega);
    let (ei, hi) = sol.synthesize_side(&x, Side::Interior);
    let (eo, ho) = sol.synthesize_side(&x, Side::Exterior);
    let (einc, hinc) = PlaneWave::reference().fields(rho * omega, &x);
    assert!((xh.cross(&(eo - ei + einc))).norm() < 1e-10);
    assert!((xh.cross(&(ho - hi + hinc))).norm() < 1e-10);
}

#[test]
fn residuals_are_recorded_below_tolerance() {
    for rho in [2f64.powi(-4), 2f64.powi(-12)] {
        for omega in [1.0, 2.0] {
            let sol = plane(rho, omega);
            assert!(sol.max_residual() <= RESIDUAL_TOL);
            assert!(sol.modes.len() >= 2 * 8 * 10);
        }
    }
}

#[test]
fn plane_wave_matches_quotient_formula_and_dense_solve() {
    let (rho, omega) = (0.1, 1.0);
    let sol = plane(rho, omega);
    let mode = ModeIndex::te(1, 1).unwrap();
    let ms = sol.mode(&mode).unwrap();

    let quad = Arc::new(build_quadrature(40).unwrap());
    let k = rho * omega;
    let pw = PlaneWave::reference();
    let e = TangentialFieldSamples::from_fn(quad.clone(), |x| pw.fields(k, x).0);
    let h = TangentialFieldSamples::from_fn(quad, |x| pw.fields(k, x).1);
    let alpha = -project(&e, TangentialBasis::V, 1, 1).unwrap();
    let beta = -project(&h, TangentialBasis::U, 1, 1).unwrap();

    let a_ext = admittance_ext(1, k).unwrap();
    let a_int = admittance_int(1, omega).unwrap();
    let quotient = (beta - alpha * a_int) / (a_ext - a_int);
    assert_relative_eq!(ms.a_ext.re, quotient.re, max_relative = 1e-11);
    assert_relative_eq!(ms.a_ext.im, quotient.im, max_relative = 1e-11);

    // beta = alpha a_int(ωρ) for an entire incident field.
    let b2 = alpha * admittance_int(1, k).unwrap();
    assert!((beta - b2).norm() < 1e-12 * beta.norm());

    let m = Matrix2::new(Complex64::from(1.0), Complex64::from(-1.0), a_ext, -a_int);
    let x = m.lu().solve(&Vector2::new(alpha, beta)).unwrap();
    assert!((x[0] - ms.a_ext).norm() < 1e-11 * ms.a_ext.norm(), "{} vs {}", x[0], ms.a_ext);
    assert!((x[1] - ms.a_int).norm() < 1e-11 * ms.a_int.norm());
}

#[test]
fn alpha_scales_like_j1_of_rho_omega() {
    let omega = 1.0;
    let quad = Arc::new(build_quadrature(24).unwrap());
    let pw = PlaneWave::reference();
    let mut ratios = Vec::new();
    let mut alphas = Vec::new();
    for rho in [0.4, 0.1, 0.01, 0.001] {
        let e = TangentialFieldSamples::from_fn(quad.clone(), |x| pw.fields(rho * omega, x).0);
        let alpha = -project(&e, TangentialBasis::V, 1, 1).unwrap();
        ratios.push(alpha / sph_bessel_j(1, rho * omega));
        alphas.push(alpha.norm());
    }
    for r in &ratios[1..] {
        assert!((r - ratios[0]).norm() < 1e-12 * ratios[0].norm());
    }
    for (a, rho) in alphas.iter().zip([0.4, 0.1, 0.01, 0.001]) {
        let c = a / rho;
        assert!(c > 0.5 && c < 5.0, "alpha/rho = {c}");
    }
}

#[test]
fn particular_solution_solves_the_radial_ode() {
    let omega = 2.5;
    let profiles = [
        RadialProfile::Bessel { order: 2 },
        RadialProfile::custom(|r| Complex64::new((3.0 * r).cos(), r * r)),
    ];
    for profile in profiles {
        let n = 2;
        let ps = ParticularSolution::new(n, omega, profile.clone(), Complex64::new(0.7, 0.2)).unwrap();
        let lam = (n * (n + 1)) as f64;
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            let r = 0.02 + 0.96 * i as f64 / 199.0;
            let h = 2e-3 * r;
            let (u, _) = ps.u(r);
            let du = |t: f64| ps.u(t).1;
            let (up, um) = (ps.u(r + h).0, ps.u(r - h).0);
            let d2 = (up - 2.0 * u + um) / (h * h);
            let d2b = (du(r - 2.0 * h) - 8.0 * du(r - h) + 8.0 * du(r + h) - du(r + 2.0 * h)) / (12.0 * h);
            let q = -I * omega * r * ps.source(r);
            let res = d2b + u * (omega * omega - lam / (r * r)) - q;
            let scale = q.norm() + u.norm() * (omega * omega + lam / (r * r));
            worst = worst.max(res.norm() / scale);
            // second difference of u agrees with the derivative channel
            assert!((d2 - d2b).norm() < 1e-4 * scale);
        }
        assert!(worst < 1e-8, "ODE residual {worst}");
    }
}

#[test]
fn particular_solution_for_bessel_profile_has_closed_form() {
    // P_p - (i/2) r j_n'(ωr) is a multiple of j_n(ωr).
    let omega = 1.0;
    let n = 1;
    let ps = ParticularSolution::new(n, omega, RadialProfile::Bessel { order: n }, Complex64::from(1.0)).unwrap();
    let coef = |r: f64| {
        let closed = I * 0.5 * r * sph_bessel_dj(n, omega * r).unwrap();
        (ps.eval(r).0 - closed) / sph_bessel_j(n, omega * r)
    };
    let c0 = coef(0.5);
    for r in [0.1, 0.3, 0.7, 0.95, 1.0] {
        assert!((coef(r) - c0).norm() < 1e-10, "r = {r}");
    }
}

#[test]
fn linearity_and_additivity() {
    let a = InteriorTerm::bessel(1, 1).unwrap();
    let b = InteriorTerm {
        mode: ModeIndex::te(1, 1).unwrap(),
        profile: RadialProfile::custom(|r| Complex64::from(r)),
        amplitude: Complex64::new(0.0, 2.0),
    };
    let (rho, omega) = (0.05, 1.0);
    let sa = interior(rho, omega, vec![a.clone()]);
    let sb = interior(rho, omega, vec![b.clone()]);
    let sab = interior(rho, omega, vec![a.clone(), b.clone()]);
    let s2 = interior(rho, omega, vec![a.scaled(Complex64::new(2.0, -1.0))]);
    let (ma, mb, mab, m2) = (&sa.modes[0], &sb.modes[0], &sab.modes[0], &s2.modes[0]);
    let close = |x: Complex64, y: Complex64| (x - y).norm() <= 1e-12 * x.norm().max(y.norm());
    assert!(close(mab.a_ext, ma.a_ext + mb.a_ext));
    assert!(close(mab.c_int, ma.c_int + mb.c_int));
    assert!(close(m2.a_ext, ma.a_ext * Complex64::new(2.0, -1.0)));

    let pw = PlaneWave {
        amplitude: Complex64::new(0.0, 3.0),
        ..PlaneWave::reference()
    };
    let cfg = ScenarioConfig::new(rho, omega, SourceSpec::PlaneWave(pw)).unwrap();
    let s3 = solve_plane_wave(&cfg).unwrap();
    let s1 = plane(rho, omega);
    let top = s3.modes.iter().map(|m| m.a_ext.norm()).fold(0.0, f64::max);
    for (x, y) in s3.modes.iter().zip(&s1.modes) {
        assert_eq!(x.mode, y.mode);
        assert!((x.a_ext - y.a_ext * Complex64::new(0.0, 3.0)).norm() <= 1e-12 * top);
    }
}

#[test]
fn exterior_factor_is_the_normalised_hankel_ratio() {
    let (rho, omega) = (0.05, 1.0);
    let sol = interior(rho, omega, vec![InteriorTerm::bessel(1, 1).unwrap()]);
    let mode = ModeIndex::te(1, 1).unwrap();
    let a = sol.mode(&mode).unwrap().a_ext;
    for r in [1.5, 2.0 / rho, 40.0] {
        let cf = eval_field(&sol, r, &mode);
        let want = a * sph_hankel1(1, rho * omega * r).unwrap() / sph_hankel1(1, rho * omega).unwrap();
        assert!((cf.e[2] - want).norm() < 1e-13 * want.norm());
    }
    let near = eval_field(&sol, 1.0, &mode).e[2].norm();
    let far = eval_field(&sol, 2.0 / rho, &mode).e[2].norm();
    let shape = rho * rho * (1.0 + 2.0 * omega);
    assert!(far / near < 10.0 * shape && far / near > 0.01 * shape);
}

#[test]
fn silver_mueller_combination_decays() {
    for rho in [0.1, 0.01] {
        let sol = plane(rho, 1.0);
        let dir = Vector3::new(0.3, -0.4, 0.866).normalize();
        let sm = |r: f64| {
            let x = dir * r;
            let (e, h) = sol.synthesize(&x);
            let xh = dir.map(Complex64::from);
            ((h.cross(&xh) - e) * Complex64::from(r)).norm()
        };
        let mut r = 10.0 / rho;
        while r < 40.0 / rho {
            assert!(sm(r) >= 2.0 * sm(2.0 * r), "rho = {rho}, r = {r}");
            r *= 2.0;
        }
    }
}

#[test]
fn resonance_space_examples() {
    let s = resonance_space(1.0, 20).unwrap();
    assert!(s.is_empty());
    let s = resonance_space(z1(), 8).unwrap();
    assert_eq!(s.pairs(), vec![(1, -1), (1, 0), (1, 1)]);
    assert_eq!(s.basis.len(), 6);
    assert_eq!(s.degrees(), vec![1]);
    assert!(resonance_space(PI, 8).unwrap().is_empty());

    // Each element has vanishing normal curls on the sphere.
    for f in &s.basis {
        let cf = f.channels(z1(), 1.0);
        // curl E = iωH and curl H = -iωE; radial channels are index 0.
        assert!(cf.h[0].norm() < 1e-12 && cf.e[0].norm() < 1e-12);
    }
}

#[test]
fn compatibility_examples() {
    let omega = z1();
    let space = resonance_space(omega, 8).unwrap();
    let incompatible = SourceSpec::Interior(vec![InteriorTerm::bessel(1, 1).unwrap()]);
    let pairs = compatibility(&incompatible, &space).unwrap();
    assert!(!is_compatible(&pairs));
    let hit: Vec<_> = pairs.iter().filter(|p| p.value.norm() > 1e-12).collect();
    assert_eq!(hit.len(), 1);
    assert_eq!(hit[0].field, ModeIndex::te(1, 1).unwrap());
    assert!((hit[0].value - 0.023595224612905638973).norm() < 1e-10);

    let compatible = SourceSpec::Interior(vec![InteriorTerm::bessel(2, 1).unwrap()]);
    let pairs = compatibility(&compatible, &space).unwrap();
    assert!(pairs.iter().all(|p| p.value.norm() <= 1e-12));
    assert!(is_compatible(&pairs));

    let empty = resonance_space(1.0, 8).unwrap();
    assert!(compatibility(&incompatible, &empty).unwrap().is_empty());
}

#[test]
fn energy_identity_holds_on_and_off_resonance() {
    let term = InteriorTerm::bessel(1, 1).unwrap();
    for (omega, rho) in [(z1(), 2f64.powi(-8)), (1.0, 0.1)] {
        let sol = interior(rho, omega, vec![term.clone()]);
        let id = energy_identity(&sol, &term).unwrap();
        assert!(id.relative_error() < 1e-8, "{id:?}");
        assert!(id.volume > 0.0);
    }
}

#[test]
fn limit_field_matches_small_rho_solve() {
    let src = SourceSpec::Interior(vec![InteriorTerm::bessel(1, 1).unwrap()]);
    let limit = solve_limit_interior(&src, 1.0).unwrap();
    let mode = ModeIndex::te(1, 1).unwrap();
    let lm = limit.mode(&mode).unwrap();
    assert!(lm.boundary_residual <= 1e-10);
    assert!(limit.channels(&mode, 1.0).e[2].norm() < 1e-12);

    let sol = interior(1e-4, 1.0, vec![InteriorTerm::bessel(1, 1).unwrap()]);
    let ms = sol.mode(&mode).unwrap();
    assert!((ms.c_int - lm.c).norm() < 1e-3 * lm.c.norm());
    for r in [0.3, 0.8, 1.0] {
        let a = sol.channels(ms, r, Side::Interior);
        let b = limit.channels(&mode, r);
        assert!((a.h[1] - b.h[1]).norm() < 1e-3 * b.h[1].norm(), "r = {r}");
    }

    let zero = SourceSpec::interior_mode(mode, RadialProfile::custom(|_| Complex64::new(0.0, 0.0)));
    let z = solve_limit_interior(&zero, 1.0).unwrap();
    assert_eq!(z.modes[0].c, Complex64::new(0.0, 0.0));

    let twice = SourceSpec::Interior(vec![InteriorTerm::bessel(1, 1).unwrap().scaled(2.0.into())]);
    let l2 = solve_limit_interior(&twice, 1.0).unwrap();
    assert!((l2.modes[0].c - lm.c * 2.0).norm() < 1e-12 * lm.c.norm());

    assert!(matches!(
        solve_limit_interior(&src, z1()),
        Err(SolverError::OutOfScope { n: 1, .. })
    ));
    let two = SourceSpec::Interior(vec![InteriorTerm::bessel(2, 1).unwrap()]);
    assert!(solve_limit_interior(&two, 1.0).is_ok());
}
