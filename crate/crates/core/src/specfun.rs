//! Spherical Bessel, Neumann and Hankel functions of integer order.
//!
//! `j_n` comes from Miller's downward recurrence normalised with the sum rule
//! `Σ (2k+1) j_k(x)² = 1`, except deep in the oscillatory region (`x > 2n`)
//! where the upward recurrence from the closed forms of `j_0`, `j_1` is
//! stable. `y_n` always uses the upward recurrence. Hankel functions are
//! assembled as `j_n + i y_n`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest order accepted by the public entry points.
pub const MAX_ORDER: u32 = 64;

/// Absolute tolerance on `|j_n(x)|` used by the zero finder.
pub const DEFAULT_ROOT_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecFunError {
    #[error("argument x = {x} outside the domain x > 0")]
    Domain { x: f64 },
    #[error("order {n} exceeds the supported maximum {MAX_ORDER}")]
    Order { n: u32 },
}

/// A positive zero of `j_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselZero {
    pub n: u32,
    /// 1-based index of the zero in increasing order.
    pub k: u32,
    pub x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroOptions {
    pub tol: f64,
}

impl Default for ZeroOptions {
    fn default() -> Self {
        ZeroOptions {
            tol: DEFAULT_ROOT_TOL,
        }
    }
}

fn check_order(n: u32) -> Result<(), SpecFunError> {
    if n > MAX_ORDER {
        Err(SpecFunError::Order { n })
    } else {
        Ok(())
    }
}

fn check_positive(x: f64) -> Result<(), SpecFunError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(SpecFunError::Domain { x })
    }
}

/// `j_0 .. j_{n_max}` at `x >= 0`.
pub fn sph_bessel_j_seq(n_max: u32, x: f64) -> Vec<f64> {
    let len = n_max as usize + 1;
    let mut out = vec![0.0; len];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if x < 0.0 {
        // j_n(-x) = (-1)^n j_n(x)
        let mut v = sph_bessel_j_seq(n_max, -x);
        for (k, val) in v.iter_mut().enumerate() {
            if k % 2 == 1 {
                *val = -*val;
            }
        }
        return v;
    }

    let (s, c) = x.sin_cos();
    if x >= 2.0 && (n_max as f64) < 0.5 * x {
        out[0] = s / x;
        if len > 1 {
            out[1] = s / (x * x) - c / x;
        }
        for k in 1..len.saturating_sub(1) {
            out[k + 1] = (2 * k + 1) as f64 / x * out[k] - out[k - 1];
        }
        return out;
    }

    miller_downward(&mut out, x);
    out
}

fn miller_downward(out: &mut [f64], x: f64) {
    let n_max = out.len() - 1;
    let top = n_max.max(x.ceil() as usize);
    let start = top + 20 + (40.0 * top.max(1) as f64).sqrt() as usize;

    let mut f = vec![0.0f64; start + 2];
    f[start] = 1e-30;
    for k in (1..=start).rev() {
        f[k - 1] = (2 * k + 1) as f64 / x * f[k] - f[k + 1];
        if f[k - 1].abs() > 1e250 {
            for v in f[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }

    let peak = f.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let sum: f64 = f
        .iter()
        .enumerate()
        .map(|(k, v)| (2 * k + 1) as f64 * (v / peak) * (v / peak))
        .sum();
    let mut scale = 1.0 / (peak * sum.sqrt());

    // The sum rule fixes only |scale|; the sign comes from whichever of the
    // closed forms j_0, j_1 is better conditioned at this x.
    let (s, c) = x.sin_cos();
    let j0 = if x < 1e-3 { 1.0 - x * x / 6.0 } else { s / x };
    let j1 = if x < 1e-3 {
        x / 3.0 * (1.0 - x * x / 10.0)
    } else {
        (s - x * c) / (x * x)
    };
    let reference = if j0.abs() >= j1.abs() {
        j0 * f[0]
    } else {
        j1 * f[1]
    };
    if reference < 0.0 {
        scale = -scale;
    }
    for (dst, src) in out.iter_mut().zip(f.iter()) {
        *dst = src * scale;
    }
}

/// `j_n(x)`; total on `x >= 0` with `j_n(0)` given by its limit.
pub fn sph_bessel_j(n: u32, x: f64) -> f64 {
    sph_bessel_j_seq(n, x)[n as usize]
}

/// `y_0 .. y_{n_max}` at `x > 0`.
pub fn sph_bessel_y_seq(n_max: u32, x: f64) -> Result<Vec<f64>, SpecFunError> {
    check_positive(x)?;
    let len = n_max as usize + 1;
    let mut out = vec![0.0; len];
    let (s, c) = x.sin_cos();
    out[0] = -c / x;
    if len > 1 {
        out[1] = -c / (x * x) - s / x;
    }
    for k in 1..len.saturating_sub(1) {
        out[k + 1] = (2 * k + 1) as f64 / x * out[k] - out[k - 1];
    }
    Ok(out)
}

pub fn sph_bessel_y(n: u32, x: f64) -> Result<f64, SpecFunError> {
    Ok(sph_bessel_y_seq(n, x)?[n as usize])
}

fn derivative_from(n: u32, x: f64, lower: f64, value: f64, next: f64) -> f64 {
    if n == 0 {
        -next
    } else {
        lower - (n + 1) as f64 / x * value
    }
}

/// `(j_n(x), j_n'(x))` for `x > 0`.
pub fn sph_bessel_j_with_derivative(n: u32, x: f64) -> Result<(f64, f64), SpecFunError> {
    check_positive(x)?;
    let seq = sph_bessel_j_seq(n + 1, x);
    let n_us = n as usize;
    let lower = if n == 0 { 0.0 } else { seq[n_us - 1] };
    Ok((seq[n_us], derivative_from(n, x, lower, seq[n_us], seq[n_us + 1])))
}

/// `(y_n(x), y_n'(x))` for `x > 0`.
pub fn sph_bessel_y_with_derivative(n: u32, x: f64) -> Result<(f64, f64), SpecFunError> {
    let seq = sph_bessel_y_seq(n + 1, x)?;
    let n_us = n as usize;
    let lower = if n == 0 { 0.0 } else { seq[n_us - 1] };
    Ok((seq[n_us], derivative_from(n, x, lower, seq[n_us], seq[n_us + 1])))
}

pub fn sph_bessel_dj(n: u32, x: f64) -> Result<f64, SpecFunError> {
    check_order(n)?;
    Ok(sph_bessel_j_with_derivative(n, x)?.1)
}

pub fn sph_bessel_dy(n: u32, x: f64) -> Result<f64, SpecFunError> {
    check_order(n)?;
    Ok(sph_bessel_y_with_derivative(n, x)?.1)
}

/// `h_n^{(1)}(x) = j_n(x) + i y_n(x)`.
pub fn sph_hankel1(n: u32, x: f64) -> Result<Complex64, SpecFunError> {
    check_order(n)?;
    check_positive(x)?;
    let j = sph_bessel_j(n, x);
    let y = sph_bessel_y(n, x)?;
    Ok(Complex64::new(j, y))
}

/// `(h_n^{(1)}(x), h_n^{(1)}'(x))`.
pub fn sph_hankel1_with_derivative(n: u32, x: f64) -> Result<(Complex64, Complex64), SpecFunError> {
    check_order(n)?;
    let (j, dj) = sph_bessel_j_with_derivative(n, x)?;
    let (y, dy) = sph_bessel_y_with_derivative(n, x)?;
    Ok((Complex64::new(j, y), Complex64::new(dj, dy)))
}

pub fn sph_hankel1_d(n: u32, x: f64) -> Result<Complex64, SpecFunError> {
    Ok(sph_hankel1_with_derivative(n, x)?.1)
}

/// Riccati–Bessel `ψ_n(x) = x j_n(x)` and its derivative `j_n + x j_n'`.
pub fn riccati_j(n: u32, x: f64) -> Result<(f64, f64), SpecFunError> {
    let (j, dj) = sph_bessel_j_with_derivative(n, x)?;
    Ok((x * j, j + x * dj))
}

/// Riccati–Hankel `ξ_n(x) = x h_n^{(1)}(x)` and its derivative.
pub fn riccati_h(n: u32, x: f64) -> Result<(Complex64, Complex64), SpecFunError> {
    let (h, dh) = sph_hankel1_with_derivative(n, x)?;
    Ok((h * x, h + dh * x))
}

fn bisect_zero(n: u32, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut f_lo = sph_bessel_j(n, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = sph_bessel_j(n, mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi && f_mid.abs() <= tol {
            break;
        }
    }
    if sph_bessel_j(n, lo).abs() <= sph_bessel_j(n, hi).abs() {
        lo
    } else {
        hi
    }
}

/// Zeros of `j_order` below `limit`, found through interlacing with the
/// zeros of `j_{order-1}`, seeded from `j_0` zeros at `kπ`.
fn zeros_below(order: u32, limit: f64, tol: f64) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    let mut zeros: Vec<f64> = (1..)
        .map(|k| k as f64 * pi)
        .take_while(|&z| z <= limit)
        .collect();
    for n in 1..=order {
        zeros = zeros
            .windows(2)
            .map(|w| bisect_zero(n, w[0], w[1], tol))
            .collect();
    }
    zeros
}

/// Positive zeros of `j_n` in `(0, x_max]`, ascending, at most `count`.
pub fn bessel_j_zeros(n: u32, count: usize, x_max: f64) -> Vec<BesselZero> {
    bessel_j_zeros_with(n, count, x_max, ZeroOptions::default())
}

/// Zeros of every `j_n`, `1 <= n <= n_max`, in `(0, x_max]`, sorted by
/// value and then by order.
pub fn resonant_frequencies(n_max: u32, x_max: f64, opts: ZeroOptions) -> Vec<BesselZero> {
    let mut out: Vec<BesselZero> = (1..=n_max.min(MAX_ORDER))
        .flat_map(|n| bessel_j_zeros_with(n, usize::MAX, x_max, opts))
        .collect();
    out.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.n.cmp(&b.n)));
    out
}

pub fn bessel_j_zeros_with(
    n: u32,
    count: usize,
    x_max: f64,
    opts: ZeroOptions,
) -> Vec<BesselZero> {
    if count == 0 || !(x_max > 0.0) || n > MAX_ORDER {
        return Vec::new();
    }
    // Each interlacing level loses the zero above the last bracket; grow the
    // seed range until the top zero of j_n clears x_max.
    let mut limit = x_max + 2.0 * std::f64::consts::PI * (n as f64 + 2.0);
    let zeros = loop {
        let z = zeros_below(n, limit, opts.tol);
        if z.last().is_some_and(|&top| top > x_max) {
            break z;
        }
        limit *= 1.5;
    };
    zeros
        .into_iter()
        .filter(|&x| x <= x_max)
        .take(count)
        .enumerate()
        .map(|(i, x)| BesselZero {
            n,
            k: i as u32 + 1,
            x,
        })
        .collect()
}
