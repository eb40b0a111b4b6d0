use cloaksim::transform::*;
use cloaksim::vsh::CVec3;
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use proptest::prelude::*;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn fd_jacobian(map: &TransformMap, x: &Vector3<f64>) -> Matrix3<f64> {
    let h = 1e-6 * x.norm();
    let mut j = Matrix3::zeros();
    for k in 0..3 {
        let mut e = Vector3::zeros();
        e[k] = h;
        let col = (map.eval_f(&(x + e)) - map.eval_f(&(x - e))) / (2.0 * h);
        j.set_column(k, &col);
    }
    j
}

fn shell_points() -> Vec<Vector3<f64>> {
    let mut pts = Vec::with_capacity(1000);
    for a in 0..10 {
        let r = 1.0 + (a as f64 + 0.5) / 10.0;
        for b in 0..10 {
            let ct = -0.95 + 1.9 * (b as f64 + 0.3) / 10.0;
            let st = (1.0 - ct * ct).sqrt();
            for c in 0..10 {
                let phi = 0.2 + c as f64 * 0.62;
                pts.push(r * Vector3::new(st * phi.cos(), st * phi.sin(), ct));
            }
        }
    }
    pts
}

fn sorted_eigs(m: &Matrix3<f64>) -> [f64; 3] {
    let mut e: Vec<f64> = m.symmetric_eigenvalues().iter().cloned().collect();
    e.sort_by(f64::total_cmp);
    [e[0], e[1], e[2]]
}

#[test]
fn closed_form_eigenvalues_match_finite_difference_assembly() {
    for rho in [0.4, 0.1, 0.01] {
        let map = TransformMap::new(rho).unwrap();
        let pts = shell_points();
        assert_eq!(pts.len(), 1000);
        for y in pts {
            let x = map.eval_finv(&y);
            let j = fd_jacobian(&map, &x);
            let t = j * j.transpose() / j.determinant().abs();
            let fd = sorted_eigs(&t);
            let mm = pushforward_identity_tensor(rho, &y).unwrap();
            let mut closed = [mm.eigen_radial, mm.eigen_tangential, mm.eigen_tangential];
            closed.sort_by(f64::total_cmp);
            for (a, b) in fd.iter().zip(closed) {
                assert!((a - b).abs() <= 1e-6 * b.abs(), "rho = {rho}, |y| = {}: {a} vs {b}", y.norm());
            }
            let full = sorted_eigs(&mm.tensor(&y));
            for (a, b) in full.iter().zip(closed) {
                assert!((a - b).abs() <= 1e-12 * b.abs());
            }
        }
    }
}

#[test]
fn material_examples() {
    let outside = cloak_material(0.1, &Vector3::new(2.5, 0.0, 0.0)).unwrap();
    assert_eq!((outside.eigen_radial, outside.eigen_tangential, outside.region), (1.0, 1.0, Region::Exterior));
    let near = cloak_material(0.01, &Vector3::new(0.0, 1.0 + 1e-9, 0.0)).unwrap();
    assert!((near.eigen_tangential - 1.99).abs() < 1e-12);
    assert!(near.eigen_radial < 1e-3);
    let eq = equivalent_material(0.25, &Vector3::new(0.0, 0.0, 0.5 * 0.25)).unwrap();
    assert_eq!((eq.eigen_radial, eq.region), (4.0, Region::Inclusion));
    assert!(pushforward_identity_tensor(0.1, &Vector3::new(0.5, 0.0, 0.0)).is_err());
    assert!(cloak_material(0.5, &Vector3::x()).is_err());

    let aniso = |_: &Vector3<f64>| Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
    let m = equivalent_material_with(0.2, &Vector3::new(0.1, 0.0, 0.0), aniso).unwrap();
    assert!((m[(2, 2)] - 15.0).abs() < 1e-12);
    let bad = |_: &Vector3<f64>| Matrix3::new(1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
    assert!(equivalent_material_with(0.2, &Vector3::new(0.1, 0.0, 0.0), bad).is_err());
}

#[test]
fn map_is_continuous_across_branch_radii() {
    for rho in [0.4, 0.1, 0.01] {
        let map = TransformMap::new(rho).unwrap();
        let d = Vector3::new(0.48, -0.6, 0.64);
        for r in [rho, 2.0] {
            let lo = map.eval_f(&(d * (r * (1.0 - 1e-12))));
            let hi = map.eval_f(&(d * (r * (1.0 + 1e-12))));
            assert!((lo - hi).norm() < 1e-10);
        }
    }
}

fn curl<F: Fn(&Vector3<f64>) -> CVec3>(f: F, y: &Vector3<f64>, h: f64) -> CVec3 {
    let d = |k: usize| {
        let mut e = Vector3::zeros();
        e[k] = h;
        (f(&(y + e)) - f(&(y - e))) / Complex64::from(2.0 * h)
    };
    let (dx, dy, dz) = (d(0), d(1), d(2));
    CVec3::new(dy[2] - dz[1], dz[0] - dx[2], dx[1] - dy[0])
}

#[test]
fn pushed_plane_wave_solves_maxwell_in_the_cloak() {
    let omega = 1.3;
    let dir = Vector3::new(0.0, 0.6, 0.8);
    let pol = Vector3::new(1.0, 0.0, 0.0);
    let e0 = move |x: &Vector3<f64>| pol.map(Complex64::from) * (I * omega * dir.dot(x)).exp();
    let h0 = move |x: &Vector3<f64>| dir.cross(&pol).map(Complex64::from) * (I * omega * dir.dot(x)).exp();
    for rho in [0.4, 0.1, 0.01] {
        let map = TransformMap::new(rho).unwrap();
        let ec = |y: &Vector3<f64>| map.push_field(e0, y);
        let hc = |y: &Vector3<f64>| map.push_field(h0, y);
        for y in [Vector3::new(1.2, 0.4, -0.3), Vector3::new(-0.5, 1.1, 0.9), Vector3::new(0.1, 0.2, 1.7)] {
            let mu = cloak_material(rho, &y).unwrap().tensor(&y).map(Complex64::from);
            let lhs_e = curl(ec, &y, 1e-5);
            let rhs_e = mu * hc(&y) * (I * omega);
            assert!((lhs_e - rhs_e).norm() < 1e-6 * rhs_e.norm(), "rho = {rho}");
            let lhs_h = curl(hc, &y, 1e-5);
            let rhs_h = -mu * ec(&y) * (I * omega);
            assert!((lhs_h - rhs_h).norm() < 1e-6 * rhs_h.norm(), "rho = {rho}");
        }
    }
}

proptest! {
    #[test]
    fn inverse_round_trip(rho in 0.001f64..0.499, r in 0.0f64..3.0, ct in -1.0f64..1.0, phi in 0.0f64..6.28) {
        let map = TransformMap::new(rho).unwrap();
        let st = (1.0 - ct * ct).sqrt();
        let x = r * Vector3::new(st * phi.cos(), st * phi.sin(), ct);
        let back = map.eval_finv(&map.eval_f(&x));
        prop_assert!((back - x).norm() <= 1e-12 * (1.0 + r));
        let y = map.eval_f(&map.eval_finv(&x));
        prop_assert!((y - x).norm() <= 1e-12 * (1.0 + r));
    }

    #[test]
    fn jacobian_matches_differences(rho in 0.01f64..0.49, r in 0.001f64..3.0, ct in -0.9f64..0.9) {
        let map = TransformMap::new(rho).unwrap();
        prop_assume!((r - rho).abs() > 1e-3 && (r - 2.0).abs() > 1e-3);
        let st = (1.0 - ct * ct).sqrt();
        let x = r * Vector3::new(st, 0.0, ct);
        let exact = map.jacobian(&x);
        let fd = fd_jacobian(&map, &x);
        prop_assert!((exact - fd).norm() <= 1e-6 * exact.norm());
        let y = map.eval_f(&x);
        let inv_t = map.inverse_transpose_jacobian_at_image(&y);
        prop_assert!((inv_t * exact.transpose() - Matrix3::identity()).norm() < 1e-12);
    }
}
