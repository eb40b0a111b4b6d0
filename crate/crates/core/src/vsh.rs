//! Scalar and vector spherical harmonics on the unit sphere.
//!
//! Conventions: `Y_n^m` is fully orthonormal with the Condon–Shortley phase,
//! `U_n^m = ∇_S Y_n^m / sqrt(n(n+1))` and `V_n^m = x̂ × U_n^m`, so the triple
//! `{Y x̂, U, V}` is orthonormal in `L²(∂B_1)^3`. Coefficient arrays over all
//! `(n, m)` with `n <= n_max` use the flat index `n² + n + m`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::GaussLegendre;

pub type CVec3 = Vector3<Complex64>;

/// Largest degree accepted by [`build_quadrature`].
pub const MAX_QUADRATURE_DEGREE: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VshError {
    #[error("order m = {m} out of range for degree n = {n}")]
    Order { n: u32, m: i32 },
    #[error("vector harmonics need n >= 1")]
    DegreeZero,
    #[error("quadrature degree {0} outside 1..=64")]
    QuadratureDegree(u32),
    #[error("sample {index} is not tangential (|v·x̂| = {normal:e})")]
    NotTangential { index: usize, normal: f64 },
    #[error("expected {expected} samples, got {got}")]
    SampleCount { expected: usize, got: usize },
}

/// The two vector polarisation families of a degree/order pair. `TE` carries
/// its electric field along `V`, `TM` its magnetic field along `V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    TE,
    TM,
}

/// One vector-spherical-harmonic channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeIndex {
    pub n: u32,
    pub m: i32,
    pub pol: Polarization,
}

impl ModeIndex {
    pub fn new(n: u32, m: i32, pol: Polarization) -> Result<Self, VshError> {
        if n == 0 {
            return Err(VshError::DegreeZero);
        }
        check_order(n, m)?;
        Ok(ModeIndex { n, m, pol })
    }

    pub fn te(n: u32, m: i32) -> Result<Self, VshError> {
        Self::new(n, m, Polarization::TE)
    }

    pub fn tm(n: u32, m: i32) -> Result<Self, VshError> {
        Self::new(n, m, Polarization::TM)
    }

    pub fn flat(&self) -> usize {
        flat_index(self.n, self.m)
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(n={}, m={}, {:?})", self.n, self.m, self.pol)
    }
}

pub fn flat_index(n: u32, m: i32) -> usize {
    (n as i64 * n as i64 + n as i64 + m as i64) as usize
}

pub fn table_len(n_max: u32) -> usize {
    ((n_max + 1) * (n_max + 1)) as usize
}

fn check_order(n: u32, m: i32) -> Result<(), VshError> {
    if m.unsigned_abs() > n {
        Err(VshError::Order { n, m })
    } else {
        Ok(())
    }
}

/// Normalised associated Legendre values (no Condon–Shortley sign) together
/// with `P/sinθ` and `dP/dθ`, for `0 <= m <= n <= n_max`.
struct LegendreTable {
    p: Vec<f64>,
    q: Vec<f64>,
    dp: Vec<f64>,
}

fn tri(n: usize, m: usize) -> usize {
    n * (n + 1) / 2 + m
}

impl LegendreTable {
    fn new(n_max: usize, x: f64, s: f64) -> Self {
        let len = tri(n_max, n_max) + 1;
        let mut p = vec![0.0; len];
        let mut q = vec![0.0; len];
        let mut dp = vec![0.0; len];

        let p00 = 1.0 / (4.0 * PI).sqrt();
        p[0] = p00;
        if n_max >= 1 {
            p[tri(1, 0)] = 3f64.sqrt() * x * p00;
        }
        for n in 2..=n_max {
            let nf = n as f64;
            let a = ((4.0 * nf * nf - 1.0) / (nf * nf)).sqrt();
            let b = ((nf - 1.0) * (nf - 1.0) / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0)).sqrt();
            p[tri(n, 0)] = a * (x * p[tri(n - 1, 0)] - b * p[tri(n - 2, 0)]);
        }

        // m >= 1 columns carry one fewer power of sinθ so the poles stay finite.
        let mut qmm = 0.0;
        for m in 1..=n_max {
            let mf = m as f64;
            qmm = if m == 1 {
                (1.5f64).sqrt() * p00
            } else {
                ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * qmm
            };
            q[tri(m, m)] = qmm;
            if m < n_max {
                q[tri(m + 1, m)] = x * (2.0 * mf + 3.0).sqrt() * qmm;
            }
            for n in m + 2..=n_max {
                let nf = n as f64;
                let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
                let b = (((nf - 1.0) * (nf - 1.0) - mf * mf) / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0)).sqrt();
                q[tri(n, m)] = a * (x * q[tri(n - 1, m)] - b * q[tri(n - 2, m)]);
            }
            for n in m..=n_max {
                p[tri(n, m)] = s * q[tri(n, m)];
            }
        }

        for n in 1..=n_max {
            let nf = n as f64;
            dp[tri(n, 0)] = -(nf * (nf + 1.0)).sqrt() * p[tri(n, 1)];
            for m in 1..=n {
                let mf = m as f64;
                let lower = if n > m {
                    ((2.0 * nf + 1.0) * (nf + mf) * (nf - mf) / (2.0 * nf - 1.0)).sqrt() * q[tri(n - 1, m)]
                } else {
                    0.0
                };
                dp[tri(n, m)] = nf * x * q[tri(n, m)] - lower;
            }
        }
        LegendreTable { p, q, dp }
    }
}

/// Spherical angles of a (not necessarily unit) direction.
fn angles(dir: &Vector3<f64>) -> (f64, f64, f64, f64) {
    let rxy = dir.x.hypot(dir.y);
    let r = rxy.hypot(dir.z);
    let cos_t = dir.z / r;
    let sin_t = rxy / r;
    let phi = dir.y.atan2(dir.x);
    (cos_t, sin_t, phi, r)
}

/// All of `Y`, `U`, `V` with `n <= n_max` at one direction.
#[derive(Debug, Clone)]
pub struct VshTable {
    pub n_max: u32,
    pub y: Vec<Complex64>,
    pub u: Vec<CVec3>,
    pub v: Vec<CVec3>,
}

impl VshTable {
    pub fn new(n_max: u32, dir: &Vector3<f64>) -> Self {
        let (cos_t, sin_t, phi, _) = angles(dir);
        let nm = n_max as usize;
        let leg = LegendreTable::new(nm, cos_t, sin_t);
        let (sin_p, cos_p) = phi.sin_cos();
        let theta_hat = Vector3::new(cos_t * cos_p, cos_t * sin_p, -sin_t);
        let phi_hat = Vector3::new(-sin_p, cos_p, 0.0);
        let th = theta_hat.map(Complex64::from);
        let ph = phi_hat.map(Complex64::from);

        let len = table_len(n_max);
        let mut y = vec![Complex64::new(0.0, 0.0); len];
        let zero = CVec3::zeros();
        let mut u = vec![zero; len];
        let mut v = vec![zero; len];

        for n in 0..=nm {
            let norm = if n == 0 {
                0.0
            } else {
                1.0 / ((n * (n + 1)) as f64).sqrt()
            };
            for m in -(n as i64)..=(n as i64) {
                let am = m.unsigned_abs() as usize;
                let sign = if m > 0 && am % 2 == 1 { -1.0 } else { 1.0 };
                let phase = Complex64::from_polar(1.0, m as f64 * phi);
                let idx = flat_index(n as u32, m as i32);
                let t = tri(n, am);
                y[idx] = phase * (sign * leg.p[t]);
                if n == 0 {
                    continue;
                }
                let d_theta = phase * (sign * leg.dp[t]);
                let d_phi = if m == 0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    phase * Complex64::new(0.0, m as f64) * (sign * leg.q[t])
                };
                u[idx] = (th * d_theta + ph * d_phi) * Complex64::from(norm);
                v[idx] = (ph * d_theta - th * d_phi) * Complex64::from(norm);
            }
        }
        VshTable { n_max, y, u, v }
    }
}

/// `Y_n^m(x̂)`.
pub fn eval_ynm(n: u32, m: i32, dir: &Vector3<f64>) -> Result<Complex64, VshError> {
    check_order(n, m)?;
    Ok(VshTable::new(n, dir).y[flat_index(n, m)])
}

/// `U_n^m(x̂)`, unit-normalised surface gradient.
pub fn eval_unm(n: u32, m: i32, dir: &Vector3<f64>) -> Result<CVec3, VshError> {
    if n == 0 {
        return Err(VshError::DegreeZero);
    }
    check_order(n, m)?;
    Ok(VshTable::new(n, dir).u[flat_index(n, m)])
}

/// `V_n^m(x̂) = x̂ × U_n^m(x̂)`.
pub fn eval_vnm(n: u32, m: i32, dir: &Vector3<f64>) -> Result<CVec3, VshError> {
    if n == 0 {
        return Err(VshError::DegreeZero);
    }
    check_order(n, m)?;
    Ok(VshTable::new(n, dir).v[flat_index(n, m)])
}

/// Product rule on the sphere: Gauss–Legendre in `cosθ` times a uniform
/// trapezoid in `φ`.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    pub degree: u32,
    pub nodes: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

/// Rule with `degree + 1` polar and `2(degree + 1)` azimuthal nodes, exact
/// for products of spherical harmonics up to degree `degree` each.
pub fn build_quadrature(degree: u32) -> Result<SphereQuadrature, VshError> {
    if degree == 0 || degree > MAX_QUADRATURE_DEGREE {
        return Err(VshError::QuadratureDegree(degree));
    }
    Ok(sphere_rule(degree))
}

pub(crate) fn sphere_rule(degree: u32) -> SphereQuadrature {
    let n_theta = degree as usize + 1;
    let n_phi = 2 * n_theta;
    let gl = GaussLegendre::new(n_theta);
    let dphi = 2.0 * PI / n_phi as f64;
    let mut nodes = Vec::with_capacity(n_theta * n_phi);
    let mut weights = Vec::with_capacity(n_theta * n_phi);
    for (x, w) in gl.nodes.iter().zip(&gl.weights) {
        let s = (1.0 - x * x).max(0.0).sqrt();
        for j in 0..n_phi {
            let phi = j as f64 * dphi;
            nodes.push(Vector3::new(s * phi.cos(), s * phi.sin(), *x));
            weights.push(w * dphi);
        }
    }
    SphereQuadrature {
        degree,
        nodes,
        weights,
    }
}

impl SphereQuadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(&Vector3<f64>) -> Complex64>(&self, mut f: F) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| f(x) * *w)
            .sum()
    }
}

/// Tangential vector field sampled on a sphere quadrature.
#[derive(Debug, Clone)]
pub struct TangentialFieldSamples {
    pub quadrature: Arc<SphereQuadrature>,
    pub values: Vec<CVec3>,
}

impl TangentialFieldSamples {
    pub fn new(quadrature: Arc<SphereQuadrature>, values: Vec<CVec3>) -> Result<Self, VshError> {
        if values.len() != quadrature.len() {
            return Err(VshError::SampleCount {
                expected: quadrature.len(),
                got: values.len(),
            });
        }
        for (index, (x, v)) in quadrature.nodes.iter().zip(&values).enumerate() {
            let normal = normal_component(x, v).norm();
            if normal > 1e-10 * v.norm().max(1.0) {
                return Err(VshError::NotTangential { index, normal });
            }
        }
        Ok(TangentialFieldSamples { quadrature, values })
    }

    /// Samples the tangential part of an arbitrary vector field.
    pub fn from_fn<F: FnMut(&Vector3<f64>) -> CVec3>(quadrature: Arc<SphereQuadrature>, mut f: F) -> Self {
        let values = quadrature
            .nodes
            .iter()
            .map(|x| tangential_part(x, &f(x)))
            .collect();
        TangentialFieldSamples { quadrature, values }
    }

    pub fn zeros(quadrature: Arc<SphereQuadrature>) -> Self {
        let values = vec![CVec3::zeros(); quadrature.len()];
        TangentialFieldSamples { quadrature, values }
    }
}

fn normal_component(x: &Vector3<f64>, v: &CVec3) -> Complex64 {
    v.x * x.x + v.y * x.y + v.z * x.z
}

pub fn tangential_part(x: &Vector3<f64>, v: &CVec3) -> CVec3 {
    let vn = normal_component(x, v);
    v - x.map(Complex64::from) * vn
}

/// Hermitian pairing `a · conj(b)`.
pub fn dot_conj(a: &CVec3, b: &CVec3) -> Complex64 {
    a.x * b.x.conj() + a.y * b.y.conj() + a.z * b.z.conj()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TangentialBasis {
    U,
    V,
}

/// `∫ samples · conj(basis_n^m) ds`. Accurate while the sampled field's
/// band limit plus `n` stays within the rule's exactness.
pub fn project(samples: &TangentialFieldSamples, basis: TangentialBasis, n: u32, m: i32) -> Result<Complex64, VshError> {
    if n == 0 {
        return Err(VshError::DegreeZero);
    }
    check_order(n, m)?;
    let idx = flat_index(n, m);
    let quad = &samples.quadrature;
    Ok(quad
        .nodes
        .iter()
        .zip(&quad.weights)
        .zip(&samples.values)
        .map(|((x, w), val)| {
            let table = VshTable::new(n, x);
            let b = match basis {
                TangentialBasis::U => table.u[idx],
                TangentialBasis::V => table.v[idx],
            };
            dot_conj(val, &b) * *w
        })
        .sum())
}

/// `U` and `V` coefficients of a tangential field for every `n <= n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentialCoefficients {
    pub n_max: u32,
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
}

impl TangentialCoefficients {
    pub fn zeros(n_max: u32) -> Self {
        let len = table_len(n_max);
        TangentialCoefficients {
            n_max,
            u: vec![Complex64::new(0.0, 0.0); len],
            v: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn synthesize(&self, quadrature: Arc<SphereQuadrature>) -> TangentialFieldSamples {
        let values = quadrature
            .nodes
            .iter()
            .map(|x| {
                let table = VshTable::new(self.n_max, x);
                let mut acc = CVec3::zeros();
                for idx in 1..table_len(self.n_max) {
                    acc += table.u[idx] * self.u[idx] + table.v[idx] * self.v[idx];
                }
                acc
            })
            .collect();
        TangentialFieldSamples { quadrature, values }
    }
}

/// Projects onto every `U_n^m`, `V_n^m` with `1 <= n <= n_max` at once.
pub fn project_all(samples: &TangentialFieldSamples, n_max: u32) -> TangentialCoefficients {
    let mut out = TangentialCoefficients::zeros(n_max);
    let quad = &samples.quadrature;
    for ((x, w), val) in quad.nodes.iter().zip(&quad.weights).zip(&samples.values) {
        let table = VshTable::new(n_max, x);
        for idx in 1..table_len(n_max) {
            out.u[idx] += dot_conj(val, &table.u[idx]) * *w;
            out.v[idx] += dot_conj(val, &table.v[idx]) * *w;
        }
    }
    out
}
