//! The blow-up map `F_ρ`, its Jacobian, and the material tensors obtained by
//! pushing the identity forward through it.
//!
//! ```text
//! F_ρ(x) = x / ρ                                 |x| < ρ
//!        = ((2 - 2ρ)/(2 - ρ) + |x|/(2 - ρ)) x̂    ρ <= |x| < 2
//!        = x                                     |x| >= 2
//! ```

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vsh::CVec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("rho = {0} outside (0, 1/2)")]
    Rho(f64),
    #[error("point with |y| = {radius} lies outside the cloak shell 1 <= |y| <= 2")]
    OutsideShell { radius: f64 },
    #[error("material tensor at |x| = {radius} is not symmetric positive definite")]
    NotSpd { radius: f64 },
}

pub fn check_rho(rho: f64) -> Result<(), TransformError> {
    if rho > 0.0 && rho < 0.5 {
        Ok(())
    } else {
        Err(TransformError::Rho(rho))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Exterior,
    CloakShell,
    /// The cloaked ball `B_1` of the physical configuration.
    Cloaked,
    /// The small ball `B_ρ` of the equivalent configuration.
    Inclusion,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Exterior => "exterior",
            Region::CloakShell => "cloak-shell",
            Region::Cloaked => "cloaked",
            Region::Inclusion => "inclusion",
        }
    }
}

/// A radially symmetric material tensor `λ_r r̂r̂ᵀ + λ_t (I - r̂r̂ᵀ)` sampled
/// at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialMap {
    pub rho: f64,
    pub radius: f64,
    pub region: Region,
    pub eigen_radial: f64,
    /// Multiplicity two.
    pub eigen_tangential: f64,
}

impl MaterialMap {
    pub fn tensor(&self, direction: &Vector3<f64>) -> Matrix3<f64> {
        let n = direction.norm();
        if n == 0.0 {
            return Matrix3::identity() * self.eigen_tangential;
        }
        let r = direction / n;
        let rr = r * r.transpose();
        rr * self.eigen_radial + (Matrix3::identity() - rr) * self.eigen_tangential
    }

    pub fn det(&self) -> f64 {
        self.eigen_radial * self.eigen_tangential * self.eigen_tangential
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformMap {
    rho: f64,
}

impl TransformMap {
    pub fn new(rho: f64) -> Result<Self, TransformError> {
        check_rho(rho)?;
        Ok(TransformMap { rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Radial profile `g` of the shell branch.
    pub fn g(&self, r: f64) -> f64 {
        let rho = self.rho;
        (2.0 - 2.0 * rho) / (2.0 - rho) + r / (2.0 - rho)
    }

    pub fn g_prime(&self) -> f64 {
        1.0 / (2.0 - self.rho)
    }

    /// `|F_ρ(x)|` as a function of `|x|`.
    pub fn radial(&self, r: f64) -> f64 {
        if r < self.rho {
            r / self.rho
        } else if r < 2.0 {
            self.g(r)
        } else {
            r
        }
    }

    /// `|F_ρ^{-1}(y)|` as a function of `|y|`.
    pub fn radial_inv(&self, s: f64) -> f64 {
        if s < 1.0 {
            s * self.rho
        } else if s < 2.0 {
            (2.0 - self.rho) * s - (2.0 - 2.0 * self.rho)
        } else {
            s
        }
    }

    pub fn eval_f(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let r = x.norm();
        if r < self.rho {
            x / self.rho
        } else if r < 2.0 {
            x * (self.g(r) / r)
        } else {
            *x
        }
    }

    pub fn eval_finv(&self, y: &Vector3<f64>) -> Vector3<f64> {
        let s = y.norm();
        if s < 1.0 {
            y * self.rho
        } else if s < 2.0 {
            y * (self.radial_inv(s) / s)
        } else {
            *y
        }
    }

    /// `DF_ρ(x)`.
    pub fn jacobian(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        let r = x.norm();
        if r < self.rho {
            Matrix3::identity() / self.rho
        } else if r < 2.0 {
            let xh = x / r;
            let rr = xh * xh.transpose();
            rr * self.g_prime() + (Matrix3::identity() - rr) * (self.g(r) / r)
        } else {
            Matrix3::identity()
        }
    }

    /// `DF_ρ^{-T}` evaluated at `F_ρ^{-1}(y)`.
    pub fn inverse_transpose_jacobian_at_image(&self, y: &Vector3<f64>) -> Matrix3<f64> {
        let s = y.norm();
        if s < 1.0 {
            Matrix3::identity() * self.rho
        } else if s < 2.0 {
            let r = self.radial_inv(s);
            let yh = y / s;
            let rr = yh * yh.transpose();
            rr / self.g_prime() + (Matrix3::identity() - rr) * (r / s)
        } else {
            Matrix3::identity()
        }
    }

    /// Push-forward `F_*E (y) = DF^{-T} E(F^{-1}(y))` of a field.
    pub fn push_field<F: Fn(&Vector3<f64>) -> CVec3>(&self, field: F, y: &Vector3<f64>) -> CVec3 {
        let x = self.eval_finv(y);
        let m = self.inverse_transpose_jacobian_at_image(y).map(Complex64::from);
        m * field(&x)
    }

    /// Push-forward `DF A DFᵀ / |det DF|` of a general tensor field.
    pub fn push_tensor<F: Fn(&Vector3<f64>) -> Matrix3<f64>>(&self, tensor: F, y: &Vector3<f64>) -> Matrix3<f64> {
        let x = self.eval_finv(y);
        let j = self.jacobian(&x);
        j * tensor(&x) * j.transpose() / j.determinant().abs()
    }
}

pub fn eval_f(rho: f64, x: &Vector3<f64>) -> Result<Vector3<f64>, TransformError> {
    Ok(TransformMap::new(rho)?.eval_f(x))
}

pub fn eval_finv(rho: f64, y: &Vector3<f64>) -> Result<Vector3<f64>, TransformError> {
    Ok(TransformMap::new(rho)?.eval_finv(y))
}

/// Closed-form eigenvalues of `F_ρ*I` at a point of the closed shell
/// `1 <= |y| <= 2`.
pub fn pushforward_identity_tensor(rho: f64, y: &Vector3<f64>) -> Result<MaterialMap, TransformError> {
    let map = TransformMap::new(rho)?;
    let s = y.norm();
    if !(1.0..=2.0).contains(&s) {
        return Err(TransformError::OutsideShell { radius: s });
    }
    let r = map.radial_inv(s);
    let gp = map.g_prime();
    Ok(MaterialMap {
        rho,
        radius: s,
        region: Region::CloakShell,
        eigen_radial: gp * r * r / (s * s),
        eigen_tangential: 1.0 / gp,
    })
}

/// `ε_c = μ_c` of the cloak with identity filling in the cloaked ball.
pub fn cloak_material(rho: f64, y: &Vector3<f64>) -> Result<MaterialMap, TransformError> {
    check_rho(rho)?;
    let s = y.norm();
    let (region, value) = if s >= 2.0 {
        (Region::Exterior, 1.0)
    } else if s < 1.0 {
        (Region::Cloaked, 1.0)
    } else {
        return pushforward_identity_tensor(rho, y);
    };
    Ok(MaterialMap {
        rho,
        radius: s,
        region,
        eigen_radial: value,
        eigen_tangential: value,
    })
}

/// `ε_ρ = μ_ρ` of the small-inclusion configuration with `ε = I` inside.
pub fn equivalent_material(rho: f64, x: &Vector3<f64>) -> Result<MaterialMap, TransformError> {
    check_rho(rho)?;
    let r = x.norm();
    let (region, value) = if r < rho {
        (Region::Inclusion, 1.0 / rho)
    } else {
        (Region::Exterior, 1.0)
    };
    Ok(MaterialMap {
        rho,
        radius: r,
        region,
        eigen_radial: value,
        eigen_tangential: value,
    })
}

/// `ρ^{-1} ε(x/ρ)` inside `B_ρ` and `I` outside, for a user tensor `ε` on
/// `B_1`. The tensor must be symmetric positive definite where sampled.
pub fn equivalent_material_with<F: Fn(&Vector3<f64>) -> Matrix3<f64>>(
    rho: f64,
    x: &Vector3<f64>,
    eps: F,
) -> Result<Matrix3<f64>, TransformError> {
    check_rho(rho)?;
    let r = x.norm();
    if r >= rho {
        return Ok(Matrix3::identity());
    }
    let a = eps(&(x / rho));
    let sym = (a - a.transpose()).norm() <= 1e-12 * a.norm().max(1.0);
    let spd = sym && a.symmetric_eigenvalues().iter().all(|&l| l > 0.0);
    if !spd {
        return Err(TransformError::NotSpd { radius: r });
    }
    Ok(a / rho)
}
