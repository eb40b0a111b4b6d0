use cloaksim::specfun::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn log_grid(a: f64, b: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| a * (b / a).powf(i as f64 / (count - 1) as f64))
        .collect()
}

#[test]
fn wronskian_on_the_reference_grid() {
    for n in 0..=20 {
        for x in log_grid(0.1, 50.0, 50) {
            let (j, dj) = sph_bessel_j_with_derivative(n, x).unwrap();
            let (y, dy) = sph_bessel_y_with_derivative(n, x).unwrap();
            let w = x * x * (j * dy - dj * y);
            assert!((w - 1.0).abs() <= 1e-10, "n = {n}, x = {x}: {w}");
        }
    }
}

#[test]
fn h1_matches_the_elementary_form() {
    for x in log_grid(0.1, 50.0, 50) {
        let closed = -Complex64::new(0.0, x).exp() * Complex64::new(x, 1.0) / (x * x);
        let h = sph_hankel1(1, x).unwrap();
        assert!((h - closed).norm() <= 1e-12 * closed.norm(), "x = {x}");
    }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    assert!(fa * f(b) < 0.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m) * fa > 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-15 {
            break;
        }
    }
    0.5 * (a + b)
}

#[test]
fn zeros_agree_with_bisection_of_elementary_forms() {
    let j1 = |x: f64| (x.sin() - x * x.cos()) / (x * x);
    let zeros = bessel_j_zeros(1, 2, 10.0);
    assert_eq!(zeros.len(), 2);
    let oracle = [bisect(j1, 4.0, 5.0), bisect(j1, 7.0, 8.0)];
    for (z, o) in zeros.iter().zip(oracle) {
        assert!((z.x - o).abs() < 1e-10, "{} vs {o}", z.x);
        assert_eq!(z.n, 1);
    }
    assert_eq!((zeros[0].k, zeros[1].k), (1, 2));
    assert!((zeros[0].x - 4.4934095).abs() < 1e-7);
    assert!((zeros[1].x - 7.7252518).abs() < 1e-7);

    let j2 = |x: f64| (3.0 / (x * x) - 1.0) * x.sin() / x - 3.0 * x.cos() / (x * x);
    let z = bessel_j_zeros(2, 1, 10.0)[0].x;
    assert!((z - bisect(j2, 5.0, 6.5)).abs() < 1e-10);

    assert!(bessel_j_zeros(1, 5, 4.0).is_empty());
}

#[test]
fn zeros_interlace() {
    for n in 1..12 {
        let a = bessel_j_zeros(n, 6, 40.0);
        let b = bessel_j_zeros(n + 1, 6, 40.0);
        for (lo, hi) in a.iter().zip(&b) {
            assert!(lo.x < hi.x);
        }
        for (lo, hi) in b.iter().zip(a.iter().skip(1)) {
            assert!(lo.x < hi.x);
        }
    }
}

#[test]
fn domain_errors() {
    assert!(sph_bessel_y(1, 0.0).is_err());
    assert!(sph_bessel_y(1, -1.0).is_err());
    assert!(sph_hankel1(MAX_ORDER + 1, 1.0).is_err());
    assert_eq!(sph_bessel_j(0, 0.0), 1.0);
    assert_eq!(sph_bessel_j(3, 0.0), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn wronskian_holds(n in 0u32..=30, x in 0.1f64..50.0) {
        let (j, dj) = sph_bessel_j_with_derivative(n, x).unwrap();
        let (y, dy) = sph_bessel_y_with_derivative(n, x).unwrap();
        prop_assert!((x * x * (j * dy - dj * y) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn three_term_recurrence(n in 1u32..40, x in 0.1f64..60.0) {
        let j = sph_bessel_j_seq(n + 1, x);
        let lhs = j[n as usize - 1] + j[n as usize + 1];
        let rhs = (2 * n + 1) as f64 / x * j[n as usize];
        let scale = j[n as usize - 1].abs() + j[n as usize + 1].abs() + rhs.abs();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);

        let y = sph_bessel_y_seq(n + 1, x).unwrap();
        let lhs = y[n as usize - 1] + y[n as usize + 1];
        let rhs = (2 * n + 1) as f64 / x * y[n as usize];
        let scale = y[n as usize - 1].abs() + y[n as usize + 1].abs() + rhs.abs();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }

    #[test]
    fn riccati_forms_are_consistent(n in 0u32..20, x in 0.1f64..30.0) {
        let (psi, dpsi) = riccati_j(n, x).unwrap();
        let (j, dj) = sph_bessel_j_with_derivative(n, x).unwrap();
        prop_assert!((psi - x * j).abs() <= 1e-14 * (1.0 + psi.abs()));
        prop_assert!((dpsi - (j + x * dj)).abs() <= 1e-13 * (1.0 + dpsi.abs()));
        let (xi, _) = riccati_h(n, x).unwrap();
        let h = sph_hankel1(n, x).unwrap();
        prop_assert!((xi - h * x).norm() <= 1e-14 * xi.norm());
    }
}

#[test]
fn resonant_frequencies_are_sorted_across_orders() {
    let all = resonant_frequencies(3, 12.0, ZeroOptions::default());
    assert!(all.windows(2).all(|w| w[0].x <= w[1].x));
    let per_order: usize = (1..=3).map(|n| bessel_j_zeros(n, 100, 12.0).len()).sum();
    assert_eq!(all.len(), per_order);
    assert_eq!((all[0].n, all[0].k), (1, 1));
    assert!(resonant_frequencies(1, 4.0, ZeroOptions::default()).is_empty());
}
