//! Per-mode transmission solves on the rescaled unit-sphere system.
//!
//! In the unit-sphere frame the exterior `|x| > 1` carries wavenumber `ρω`,
//! the interior carries `ω`, and the tangential traces are matched on
//! `|x| = 1`. Each channel `(n, m, pol)` has one primary radial function
//! `P(r)`: the `V`-component of `E` for TE, of `H` for TM. With
//! `dP = (rP)'/r`, `λ = n(n+1)` and local wavenumber `k`,
//!
//! ```text
//! TE:  E = P V,   H = -(1/ik) [ sqrt(λ) P/r Y x̂ + dP U ]
//! TM:  H = P V,   E =  (1/ik) [ sqrt(λ) P/r Y x̂ + dP U ]
//! ```
//!
//! Exterior `P = A_ext h_n(kr)/h_n(k)`; interior `P = c j_n(ωr) + P_p(r)`
//! where `P_p` is the regular particular solution for an interior current.

use std::fmt;
use std::sync::Arc;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{integrate_graded_complex, rule20};
use crate::specfun::{self, SpecFunError};
use crate::transform::{check_rho, TransformError};
use crate::vsh::{
    dot_conj, flat_index, project_all, sphere_rule, CVec3, ModeIndex, Polarization, TangentialFieldSamples,
    VshError, VshTable,
};

/// `|j_n(ω)|` at or below this declares resonance.
pub const RESONANCE_TOL: f64 = 1e-12;
/// `|j_n(ω)|` below this (but above [`RESONANCE_TOL`]) logs a warning.
pub const ILL_CONDITIONED_TOL: f64 = 1e-6;
/// Smallest admissible denominator in admittances and 2×2 determinants.
pub const PIVOT_TOL: f64 = 1e-13;
/// Largest accepted relative transmission residual.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Pairings at or below this count as zero.
pub const COMPATIBILITY_TOL: f64 = 1e-10;
pub const MAX_OMEGA: f64 = 100.0;
pub const MAX_TRUNCATION: u32 = 64;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Vsh(#[from] VshError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
    #[error("admittance pole at r = {r} for n = {n} (resonance proximity)")]
    Pole { r: f64, n: u32 },
    #[error("near-singular matching system for mode {mode} (|det| = {det:e})")]
    Singular { mode: ModeIndex, det: f64 },
    #[error("omega = {omega} is resonant (j_{n}(omega) = 0); the plane-wave scenario needs a non-resonant frequency")]
    Resonant { omega: f64, n: u32 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("transmission residual {residual:e} for mode {mode} exceeds tolerance")]
    Residual { mode: ModeIndex, residual: f64 },
    #[error("plane-wave expansion not converged by degree {n_max}")]
    Truncation { n_max: u32 },
    #[error("omega = {omega} is resonant (j_{n}(omega) = 0); the limit problem there needs the nonlocal compatible-resonant system, which is not supported")]
    OutOfScope { omega: f64, n: u32 },
    #[error("no limit channel for mode {mode}")]
    ChannelMismatch { mode: ModeIndex },
    #[error("non-finite values while evaluating mode {mode}")]
    Numerical { mode: ModeIndex },
}

/// Scaling convention of a [`TransmissionSolution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// `x ↦ field(ρx)` of the scattered/total split; physical exterior field
    /// is the frame field at `R/ρ`, physical interior is `ρ` times it.
    Scattered,
    /// `x ↦ ρ field(ρx)`; physical exterior is `ρ^{-1}` times the frame
    /// field at `R/ρ`, physical interior is the frame field itself.
    Scaled,
}

impl Frame {
    pub fn exterior_scale(self, rho: f64) -> f64 {
        match self {
            Frame::Scattered => 1.0,
            Frame::Scaled => 1.0 / rho,
        }
    }

    pub fn interior_scale(self, rho: f64) -> f64 {
        match self {
            Frame::Scattered => rho,
            Frame::Scaled => 1.0,
        }
    }
}

#[derive(Clone)]
pub enum RadialProfile {
    /// `f(r) = j_order(ω r)`.
    Bessel { order: u32 },
    Custom(Arc<dyn Fn(f64) -> Complex64 + Send + Sync>),
}

impl RadialProfile {
    pub fn custom<F: Fn(f64) -> Complex64 + Send + Sync + 'static>(f: F) -> Self {
        RadialProfile::Custom(Arc::new(f))
    }

    pub fn eval(&self, omega: f64, r: f64) -> Complex64 {
        match self {
            RadialProfile::Bessel { order } => specfun::sph_bessel_j(*order, omega * r).into(),
            RadialProfile::Custom(f) => f(r),
        }
    }
}

impl fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialProfile::Bessel { order } => write!(f, "Bessel {{ order: {order} }}"),
            RadialProfile::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// One interior current `amplitude · f(r) · V_n^m(x̂)` in `B_1`.
#[derive(Debug, Clone)]
pub struct InteriorTerm {
    /// Must be a TE channel: the current points along `V_n^m`.
    pub mode: ModeIndex,
    pub profile: RadialProfile,
    pub amplitude: Complex64,
}

impl InteriorTerm {
    /// `j_n(ωr) V_n^m` with unit amplitude.
    pub fn bessel(n: u32, m: i32) -> Result<Self, SolverError> {
        Ok(InteriorTerm {
            mode: ModeIndex::te(n, m)?,
            profile: RadialProfile::Bessel { order: n },
            amplitude: Complex64::new(1.0, 0.0),
        })
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        InteriorTerm {
            amplitude: self.amplitude * factor,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneWave {
    pub direction: Vector3<f64>,
    pub polarization: Vector3<f64>,
    pub amplitude: Complex64,
}

impl PlaneWave {
    /// Normalises both vectors; they must be nonzero and orthogonal.
    pub fn new(direction: Vector3<f64>, polarization: Vector3<f64>, amplitude: Complex64) -> Result<Self, SolverError> {
        let dn = direction.norm();
        let pn = polarization.norm();
        if !(dn > 0.0 && pn > 0.0 && dn.is_finite() && pn.is_finite()) {
            return Err(SolverError::Config("plane-wave direction and polarization must be nonzero".into()));
        }
        let d = direction / dn;
        let p = polarization / pn;
        if d.dot(&p).abs() > 1e-12 {
            return Err(SolverError::Config("plane-wave polarization must be orthogonal to the direction".into()));
        }
        Ok(PlaneWave {
            direction: d,
            polarization: p,
            amplitude,
        })
    }

    /// `(0, 1, 0) e^{iω x₃}`.
    pub fn reference() -> Self {
        PlaneWave {
            direction: Vector3::new(0.0, 0.0, 1.0),
            polarization: Vector3::new(0.0, 1.0, 0.0),
            amplitude: Complex64::new(1.0, 0.0),
        }
    }

    /// Incident `(E, H)` at `x` for wavenumber `k` and unit impedance.
    pub fn fields(&self, k: f64, x: &Vector3<f64>) -> (CVec3, CVec3) {
        let phase = Complex64::from_polar(1.0, k * self.direction.dot(x)) * self.amplitude;
        let e = self.polarization.map(Complex64::from) * phase;
        let h = self.direction.cross(&self.polarization).map(Complex64::from) * phase;
        (e, h)
    }
}

#[derive(Debug, Clone)]
pub enum SourceSpec {
    PlaneWave(PlaneWave),
    Interior(Vec<InteriorTerm>),
}

impl SourceSpec {
    pub fn interior_mode(mode: ModeIndex, profile: RadialProfile) -> Self {
        SourceSpec::Interior(vec![InteriorTerm {
            mode,
            profile,
            amplitude: Complex64::new(1.0, 0.0),
        }])
    }

    /// Highest excited degree; `None` for the plane wave.
    pub fn band_limit(&self) -> Option<u32> {
        match self {
            SourceSpec::PlaneWave(_) => None,
            SourceSpec::Interior(terms) => Some(terms.iter().map(|t| t.mode.n).max().unwrap_or(0)),
        }
    }
}

pub fn default_n_max(band: u32) -> u32 {
    (band + 4).max(8)
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub rho: f64,
    pub omega: f64,
    pub source: SourceSpec,
    /// Truncation degree; chosen automatically when `None`.
    pub n_max: Option<u32>,
}

impl ScenarioConfig {
    pub fn new(rho: f64, omega: f64, source: SourceSpec) -> Result<Self, SolverError> {
        let cfg = ScenarioConfig {
            rho,
            omega,
            source,
            n_max: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_n_max(mut self, n_max: u32) -> Result<Self, SolverError> {
        self.n_max = Some(n_max);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        check_rho(self.rho)?;
        check_omega(self.omega)?;
        if let Some(n) = self.n_max {
            if n == 0 || n > MAX_TRUNCATION {
                return Err(SolverError::Config(format!("n_max = {n} outside 1..=64")));
            }
            if let Some(band) = self.source.band_limit() {
                if n < band {
                    return Err(SolverError::Config(format!(
                        "n_max = {n} below the source band limit {band}"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn check_omega(omega: f64) -> Result<(), SolverError> {
    if omega > 0.0 && omega <= MAX_OMEGA {
        Ok(())
    } else {
        Err(SolverError::Config(format!("omega = {omega} outside (0, 100]")))
    }
}

fn bessel_jd(n: u32, x: f64) -> (f64, f64) {
    specfun::sph_bessel_j_with_derivative(n, x.max(1e-300)).expect("positive argument")
}

fn bessel_yd(n: u32, x: f64) -> (f64, f64) {
    specfun::sph_bessel_y_with_derivative(n, x).expect("positive argument")
}

fn hankel_d(n: u32, x: f64) -> (Complex64, Complex64) {
    specfun::sph_hankel1_with_derivative(n, x).expect("positive argument")
}

/// `(h_n(r) + r h_n'(r)) / (-i r h_n(r))`.
pub fn admittance_ext(n: u32, r: f64) -> Result<Complex64, SolverError> {
    let (h, dh) = specfun::sph_hankel1_with_derivative(n, r)?;
    let den = -I * r * h;
    if den.norm() < PIVOT_TOL {
        return Err(SolverError::Pole { r, n });
    }
    Ok((h + dh * r) / den)
}

/// `(j_n(r) + r j_n'(r)) / (-i r j_n(r))`.
pub fn admittance_int(n: u32, r: f64) -> Result<Complex64, SolverError> {
    if n > specfun::MAX_ORDER {
        return Err(SpecFunError::Order { n }.into());
    }
    let (j, dj) = specfun::sph_bessel_j_with_derivative(n, r)?;
    let den = -I * r * j;
    if den.norm() < PIVOT_TOL {
        return Err(SolverError::Pole { r, n });
    }
    Ok(Complex64::from(j + r * dj) / den)
}

/// Regular solution of `u'' + (ω² - n(n+1)/r²) u = -iω r f(r)` on `[0, 1]`
/// by variation of parameters over `u1 = r j_n(ωr)`, `u2 = r y_n(ωr)`:
///
/// ```text
/// u(r) = ω [ u2(r) ∫_0^r u1 Q + u1(r) ∫_r^1 u2 Q ]
/// ```
///
/// The interior primary function is `P_p = u/r`. Cumulative integrals are
/// tabulated at panel breaks; evaluation adds one partial panel.
#[derive(Debug, Clone)]
pub struct ParticularSolution {
    pub n: u32,
    pub omega: f64,
    pub amplitude: Complex64,
    pub profile: RadialProfile,
    breaks: Vec<f64>,
    i1: Vec<Complex64>,
    i2: Vec<Complex64>,
}

impl ParticularSolution {
    pub fn new(n: u32, omega: f64, profile: RadialProfile, amplitude: Complex64) -> Result<Self, SolverError> {
        if n == 0 || n > specfun::MAX_ORDER {
            return Err(SolverError::Config(format!("source degree {n} outside 1..=64")));
        }
        check_omega(omega)?;
        let mut sol = ParticularSolution {
            n,
            omega,
            amplitude,
            profile,
            breaks: Vec::new(),
            i1: Vec::new(),
            i2: Vec::new(),
        };
        sol.breaks = sol.panel_breaks();
        sol.check_integrable()?;
        sol.tabulate();
        Ok(sol)
    }

    fn panel_breaks(&self) -> Vec<f64> {
        // Below r_min both u1 Q and u2 u1 are negligible, and y_n would
        // overflow for high orders.
        let r_min = 10f64.powf(-(12.0f64).min(200.0 / (self.n as f64 + 2.0)));
        let width = (1.0 / 8.0f64).min(1.0 / self.omega);
        let count = (1.0 / width).ceil() as usize;
        let w = 1.0 / count as f64;
        let mut inner = Vec::new();
        let mut r = w;
        while 0.5 * r > r_min {
            r *= 0.5;
            inner.push(r);
        }
        inner.push(r_min.min(r));
        inner.reverse();
        inner.dedup();
        let mut breaks = inner;
        breaks.extend((1..=count).map(|k| k as f64 * w));
        breaks
    }

    fn check_integrable(&self) -> Result<(), SolverError> {
        let rule = rule20();
        let mut contributions = Vec::with_capacity(self.breaks.len());
        for w in self.breaks.windows(2) {
            let c = rule.integrate(w[0], w[1], |r| r * r * self.profile.eval(self.omega, r).norm_sqr());
            if !c.is_finite() {
                return Err(SolverError::Domain("radial profile is not finite on (0, 1]".into()));
            }
            contributions.push(c);
        }
        let total: f64 = contributions.iter().sum();
        // Geometric panels near the origin: an integrable r²|f|² has panel
        // contributions that shrink towards r = 0.
        let growing = contributions.len() > 12 && contributions[1] > 0.0 && contributions[1] >= 0.999 * contributions[11];
        if !total.is_finite() || growing {
            return Err(SolverError::Domain(
                "radial profile is not square-integrable with weight r² on [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// `Q(r) = -iω r · amplitude · f(r)`.
    fn q(&self, r: f64) -> Complex64 {
        -I * self.omega * r * self.amplitude * self.profile.eval(self.omega, r)
    }

    fn u1(&self, r: f64) -> (f64, f64) {
        let x = self.omega * r;
        let (j, dj) = bessel_jd(self.n, x);
        (r * j, j + x * dj)
    }

    fn u2(&self, r: f64) -> (f64, f64) {
        let x = self.omega * r;
        let (y, dy) = bessel_yd(self.n, x);
        (r * y, y + x * dy)
    }

    fn panel(&self, a: f64, b: f64) -> (Complex64, Complex64) {
        let rule = rule20();
        let mut s1 = ZERO;
        let mut s2 = ZERO;
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let r = mid + half * x;
            let q = self.q(r) * *w;
            s1 += q * self.u1(r).0;
            s2 += q * self.u2(r).0;
        }
        (s1 * half, s2 * half)
    }

    fn tabulate(&mut self) {
        let nb = self.breaks.len();
        let panels: Vec<_> = self.breaks.windows(2).map(|w| self.panel(w[0], w[1])).collect();
        let mut i1 = vec![ZERO; nb];
        let mut i2 = vec![ZERO; nb];
        for k in 1..nb {
            i1[k] = i1[k - 1] + panels[k - 1].0;
        }
        for k in (0..nb - 1).rev() {
            i2[k] = i2[k + 1] + panels[k].1;
        }
        self.i1 = i1;
        self.i2 = i2;
    }

    /// `(u(r), u'(r))`.
    pub fn u(&self, r: f64) -> (Complex64, Complex64) {
        if r < self.breaks[0] {
            return (ZERO, ZERO);
        }
        let k = match self.breaks.partition_point(|&b| b <= r) {
            0 => 0,
            p => (p - 1).min(self.breaks.len() - 1),
        };
        let (mut a1, mut a2) = (self.i1[k], self.i2[k]);
        if r > self.breaks[k] {
            let (p1, p2) = self.panel(self.breaks[k], r);
            a1 += p1;
            a2 -= p2;
        }
        let (u1, du1) = self.u1(r);
        let (u2, du2) = self.u2(r);
        let w = self.omega;
        ((a1 * u2 + a2 * u1) * w, (a1 * du2 + a2 * du1) * w)
    }

    /// `(P_p(r), dP_p(r))` with `P_p = u/r`, `dP_p = u'/r`.
    pub fn eval(&self, r: f64) -> (Complex64, Complex64) {
        if r <= 0.0 {
            return (ZERO, ZERO);
        }
        let (u, du) = self.u(r);
        (u / r, du / r)
    }

    /// The source current amplitude `amplitude · f(r)`.
    pub fn source(&self, r: f64) -> Complex64 {
        self.amplitude * self.profile.eval(self.omega, r)
    }
}

/// Radial coefficients of `(E, H)` on the channels `(Y x̂, U, V)` of one
/// `(n, m)` at a fixed radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelFactors {
    pub e: [Complex64; 3],
    pub h: [Complex64; 3],
}

impl ChannelFactors {
    pub const ZERO: ChannelFactors = ChannelFactors {
        e: [ZERO; 3],
        h: [ZERO; 3],
    };

    /// From the primary function `P`, `dP = (rP)'/r` at radius `r`.
    pub fn from_primary(pol: Polarization, n: u32, p: Complex64, dp: Complex64, r: f64, k: f64) -> Self {
        let sl = ((n * (n + 1)) as f64).sqrt();
        let ik = I * k;
        let y = p * sl / (ik * r);
        let u = dp / ik;
        match pol {
            Polarization::TE => ChannelFactors {
                e: [ZERO, ZERO, p],
                h: [-y, -u, ZERO],
            },
            Polarization::TM => ChannelFactors {
                e: [y, u, ZERO],
                h: [ZERO, ZERO, p],
            },
        }
    }

    pub fn scaled(self, s: f64) -> Self {
        ChannelFactors {
            e: self.e.map(|c| c * s),
            h: self.h.map(|c| c * s),
        }
    }

    pub fn e_norm_sqr(&self) -> f64 {
        self.e.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn h_norm_sqr(&self) -> f64 {
        self.h.iter().map(|c| c.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Interior,
    Exterior,
}

#[derive(Debug, Clone)]
pub struct ModeSolution {
    pub mode: ModeIndex,
    /// Exterior primary coefficient at `r = 1⁺`.
    pub a_ext: Complex64,
    /// Homogeneous interior primary value at `r = 1⁻`, i.e. `c_int j_n(ω)`.
    pub a_int: Complex64,
    /// Coefficient of `j_n(ωr)` in the interior primary function.
    pub c_int: Complex64,
    pub particular: Vec<Arc<ParticularSolution>>,
    /// Prescribed jumps (exterior minus interior) of the primary `V`
    /// channel and of the secondary `U` channel at `r = 1`.
    pub jumps: [Complex64; 2],
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct TransmissionSolution {
    pub rho: f64,
    pub omega: f64,
    pub frame: Frame,
    pub n_max: u32,
    pub modes: Vec<ModeSolution>,
}

impl TransmissionSolution {
    pub fn mode(&self, mode: &ModeIndex) -> Option<&ModeSolution> {
        self.modes.iter().find(|s| s.mode == *mode)
    }

    pub fn max_residual(&self) -> f64 {
        self.modes.iter().map(|m| m.residual).fold(0.0, f64::max)
    }

    pub fn exterior_k(&self) -> f64 {
        self.rho * self.omega
    }

    /// Channel factors of one solved mode at frame radius `r` on `side`.
    pub fn channels(&self, ms: &ModeSolution, r: f64, side: Side) -> ChannelFactors {
        let base = self.homogeneous(ms.mode.n, r, side);
        self.channels_from(ms, r, side, base)
    }

    /// Unit homogeneous primary `(P, dP)` of degree `n` at radius `r`.
    fn homogeneous(&self, n: u32, r: f64, side: Side) -> (Complex64, Complex64) {
        match side {
            Side::Exterior => {
                let k = self.exterior_k();
                let (h1, _) = hankel_d(n, k);
                let (h, dh) = hankel_d(n, k * r);
                (h / h1, (h + dh * (k * r)) / (h1 * r))
            }
            Side::Interior => {
                let r = r.max(1e-12);
                let w = self.omega;
                let (j, dj) = bessel_jd(n, w * r);
                (Complex64::from(j), Complex64::from((j + w * r * dj) / r))
            }
        }
    }

    fn channels_from(&self, ms: &ModeSolution, r: f64, side: Side, base: (Complex64, Complex64)) -> ChannelFactors {
        let n = ms.mode.n;
        match side {
            Side::Exterior => {
                ChannelFactors::from_primary(ms.mode.pol, n, ms.a_ext * base.0, ms.a_ext * base.1, r, self.exterior_k())
            }
            Side::Interior => {
                let r = r.max(1e-12);
                let mut p = ms.c_int * base.0;
                let mut dp = ms.c_int * base.1;
                for part in &ms.particular {
                    let (pp, dpp) = part.eval(r);
                    p += pp;
                    dp += dpp;
                }
                ChannelFactors::from_primary(ms.mode.pol, n, p, dp, r, self.omega)
            }
        }
    }

    /// Frame-field `(E, H)` at `x` on the given side of `|x| = 1`.
    pub fn synthesize_side(&self, x: &Vector3<f64>, side: Side) -> (CVec3, CVec3) {
        let r = x.norm();
        let top = self.modes.iter().map(|m| m.mode.n).max().unwrap_or(1);
        let table = VshTable::new(top, x);
        let xh = (x / r).map(Complex64::from);
        let mut radial: Vec<Option<(Complex64, Complex64)>> = vec![None; top as usize + 1];
        let mut e = CVec3::zeros();
        let mut h = CVec3::zeros();
        for ms in &self.modes {
            let n = ms.mode.n;
            let base = *radial[n as usize].get_or_insert_with(|| self.homogeneous(n, r, side));
            let cf = self.channels_from(ms, r, side, base);
            let idx = ms.mode.flat();
            let basis = [xh * table.y[idx], table.u[idx], table.v[idx]];
            for c in 0..3 {
                e += basis[c] * cf.e[c];
                h += basis[c] * cf.h[c];
            }
        }
        (e, h)
    }

    /// Frame-field `(E, H)` at `x`, exterior for `|x| > 1`.
    pub fn synthesize(&self, x: &Vector3<f64>) -> (CVec3, CVec3) {
        let side = if x.norm() > 1.0 { Side::Exterior } else { Side::Interior };
        self.synthesize_side(x, side)
    }
}

/// Per-channel radial coefficients at frame radius `r`; `r > 1` is
/// exterior. Channels absent from the solution are zero.
pub fn eval_field(solution: &TransmissionSolution, r: f64, channel: &ModeIndex) -> ChannelFactors {
    let side = if r > 1.0 { Side::Exterior } else { Side::Interior };
    eval_field_side(solution, r, channel, side)
}

pub fn eval_field_side(solution: &TransmissionSolution, r: f64, channel: &ModeIndex, side: Side) -> ChannelFactors {
    match solution.mode(channel) {
        Some(ms) => solution.channels(ms, r, side),
        None => ChannelFactors::ZERO,
    }
}

/// Distance from `ω` to the nearest zero of `j_n` by one Newton step.
fn zero_distance(n: u32, omega: f64) -> (f64, f64) {
    let (j, dj) = bessel_jd(n, omega);
    (j.abs(), (j / dj).abs())
}

/// `j_n(ω)` vanishes: `|j_n(ω)| <= 1e-12` and `ω` sits at a genuine zero
/// rather than in the small-argument region where `j_n` is merely tiny.
pub fn is_resonant_degree(n: u32, omega: f64) -> bool {
    let (j, dist) = zero_distance(n, omega);
    j <= RESONANCE_TOL && dist <= 1e-9 * omega.max(1.0)
}

fn warn_if_near_resonant(omega: f64, n: u32) {
    let (j, dist) = zero_distance(n, omega);
    if j > RESONANCE_TOL && j < ILL_CONDITIONED_TOL && dist < ILL_CONDITIONED_TOL * omega.max(1.0) {
        log::warn!("|j_{n}({omega})| = {j:e}: close to resonance, matching is ill-conditioned");
    }
}

/// Solves `[[1, -j], [a_ext, (j + ωj')/(iω)]] [A, c] = rhs` and records the
/// trace residual.
fn solve_mode(
    mode: ModeIndex,
    rho: f64,
    omega: f64,
    jumps: [Complex64; 2],
    particular: Vec<Arc<ParticularSolution>>,
    frame: Frame,
) -> Result<ModeSolution, SolverError> {
    let n = mode.n;
    let k = rho * omega;
    let a_ext = admittance_ext(n, k)?;
    let (j, dj) = bessel_jd(n, omega);
    let m12 = Complex64::from(-j);
    let m22 = Complex64::from(j + omega * dj) / (I * omega);
    let det = m22 + a_ext * j;
    if det.norm() < PIVOT_TOL {
        return Err(SolverError::Singular { mode, det: det.norm() });
    }
    let (mut pp1, mut dpp1) = (ZERO, ZERO);
    for p in &particular {
        let (a, b) = p.eval(1.0);
        pp1 += a;
        dpp1 += b;
    }
    let sigma = match mode.pol {
        Polarization::TE => -1.0,
        Polarization::TM => 1.0,
    };
    let rhs1 = jumps[0] + pp1;
    let rhs2 = -jumps[1] * sigma - dpp1 / (I * omega);
    let a = (rhs1 * m22 - m12 * rhs2) / det;
    let c = (rhs2 - a_ext * rhs1) / det;
    if !(a.is_finite() && c.is_finite()) {
        return Err(SolverError::Numerical { mode });
    }

    let mut ms = ModeSolution {
        mode,
        a_ext: a,
        a_int: c * j,
        c_int: c,
        particular,
        jumps,
        residual: 0.0,
    };
    let probe = TransmissionSolution {
        rho,
        omega,
        frame,
        n_max: n,
        modes: Vec::new(),
    };
    let ext = probe.channels(&ms, 1.0, Side::Exterior);
    let int = probe.channels(&ms, 1.0, Side::Interior);
    let (prim_ext, prim_int, sec_ext, sec_int) = match mode.pol {
        Polarization::TE => (ext.e[2], int.e[2], ext.h[1], int.h[1]),
        Polarization::TM => (ext.h[2], int.h[2], ext.e[1], int.e[1]),
    };
    let d1 = prim_ext - prim_int - jumps[0];
    let d2 = sec_ext - sec_int - jumps[1];
    let scale = [prim_ext, prim_int, sec_ext, sec_int, jumps[0], jumps[1]]
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    ms.residual = if scale > 0.0 {
        d1.norm().max(d2.norm()) / scale
    } else {
        0.0
    };
    if !(ms.residual <= RESIDUAL_TOL) {
        return Err(SolverError::Residual {
            mode,
            residual: ms.residual,
        });
    }
    Ok(ms)
}

fn all_modes(n_max: u32) -> impl Iterator<Item = ModeIndex> {
    (1..=n_max).flat_map(|n| {
        (-(n as i32)..=n as i32).flat_map(move |m| {
            [Polarization::TE, Polarization::TM]
                .into_iter()
                .map(move |pol| ModeIndex { n, m, pol })
        })
    })
}

/// Exterior plane wave on the small inclusion, in the [`Frame::Scattered`]
/// frame. Tangential jumps on `|x| = 1` are minus the incident traces.
pub fn solve_plane_wave(config: &ScenarioConfig) -> Result<TransmissionSolution, SolverError> {
    config.validate()?;
    let pw = match &config.source {
        SourceSpec::PlaneWave(pw) => *pw,
        SourceSpec::Interior(_) => {
            return Err(SolverError::Config("solve_plane_wave needs a plane-wave source".into()));
        }
    };
    let (rho, omega) = (config.rho, config.omega);
    let k = rho * omega;
    let fixed = config.n_max.is_some();
    let mut n_max = config.n_max.unwrap_or_else(|| default_n_max(k.ceil() as u32));

    loop {
        for n in 1..=n_max {
            if is_resonant_degree(n, omega) {
                return Err(SolverError::Resonant { omega, n });
            }
            warn_if_near_resonant(omega, n);
        }
        let degree = (n_max + (1.5 * k).ceil() as u32 + 16).min(160);
        let quad = Arc::new(sphere_rule(degree));
        let e_inc = TangentialFieldSamples::from_fn(quad.clone(), |x| pw.fields(k, x).0);
        let h_inc = TangentialFieldSamples::from_fn(quad, |x| pw.fields(k, x).1);
        let ce = project_all(&e_inc, n_max);
        let ch = project_all(&h_inc, n_max);

        let mut modes = Vec::new();
        for mode in all_modes(n_max) {
            let idx = flat_index(mode.n, mode.m);
            let jumps = match mode.pol {
                Polarization::TE => [-ce.v[idx], -ch.u[idx]],
                Polarization::TM => [-ch.v[idx], -ce.u[idx]],
            };
            modes.push(solve_mode(mode, rho, omega, jumps, Vec::new(), Frame::Scattered)?);
        }

        let largest = modes.iter().map(|m| m.a_ext.norm()).fold(0.0, f64::max);
        let last = modes
            .iter()
            .filter(|m| m.mode.n == n_max)
            .map(|m| m.a_ext.norm())
            .fold(0.0, f64::max);
        let floor = (1e-14 * largest).max(1e-15 * pw.amplitude.norm());
        if fixed || last <= floor {
            return Ok(TransmissionSolution {
                rho,
                omega,
                frame: Frame::Scattered,
                n_max,
                modes,
            });
        }
        if n_max >= MAX_TRUNCATION {
            return Err(SolverError::Truncation { n_max });
        }
        n_max = (n_max + 4).min(MAX_TRUNCATION);
    }
}

fn particulars(terms: &[InteriorTerm], omega: f64) -> Result<Vec<(ModeIndex, Vec<Arc<ParticularSolution>>)>, SolverError> {
    let mut grouped: Vec<(ModeIndex, Vec<Arc<ParticularSolution>>)> = Vec::new();
    for t in terms {
        ModeIndex::new(t.mode.n, t.mode.m, t.mode.pol)?;
        if t.mode.pol != Polarization::TE {
            return Err(SolverError::Domain(
                "interior currents are supported along V_n^m only (TE channels)".into(),
            ));
        }
        let p = Arc::new(ParticularSolution::new(t.mode.n, omega, t.profile.clone(), t.amplitude)?);
        match grouped.iter_mut().find(|(m, _)| *m == t.mode) {
            Some((_, v)) => v.push(p),
            None => grouped.push((t.mode, vec![p])),
        }
    }
    Ok(grouped)
}

/// Interior current in `B_1`, in the [`Frame::Scaled`] frame; fields are
/// continuous across `|x| = 1`.
pub fn solve_interior_source(config: &ScenarioConfig) -> Result<TransmissionSolution, SolverError> {
    config.validate()?;
    let terms = match &config.source {
        SourceSpec::Interior(terms) => terms,
        SourceSpec::PlaneWave(_) => {
            return Err(SolverError::Config("solve_interior_source needs an interior source".into()));
        }
    };
    let (rho, omega) = (config.rho, config.omega);
    let band = config.source.band_limit().unwrap_or(0);
    let n_max = config.n_max.unwrap_or_else(|| default_n_max(band));
    let mut modes = Vec::new();
    for (mode, parts) in particulars(terms, omega)? {
        warn_if_near_resonant(omega, mode.n);
        modes.push(solve_mode(mode, rho, omega, [ZERO; 2], parts, Frame::Scaled)?);
    }
    Ok(TransmissionSolution {
        rho,
        omega,
        frame: Frame::Scaled,
        n_max,
        modes,
    })
}

/// Dispatches on the source kind.
pub fn solve(config: &ScenarioConfig) -> Result<TransmissionSolution, SolverError> {
    match config.source {
        SourceSpec::PlaneWave(_) => solve_plane_wave(config),
        SourceSpec::Interior(_) => solve_interior_source(config),
    }
}

/// An element of the resonance space: for TE, `E_0 = j_n(ωr) V_n^m` and
/// `H_0 = curl E_0 / (iω)`; for TM the roles of `E_0` and `H_0` swap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResonantField {
    pub mode: ModeIndex,
}

impl ResonantField {
    pub fn channels(&self, omega: f64, r: f64) -> ChannelFactors {
        let r = r.max(1e-12);
        let (j, dj) = bessel_jd(self.mode.n, omega * r);
        let p = Complex64::from(j);
        let dp = Complex64::from((j + omega * r * dj) / r);
        ChannelFactors::from_primary(self.mode.pol, self.mode.n, p, dp, r, omega)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceSpace {
    pub omega: f64,
    pub n_max: u32,
    pub basis: Vec<ResonantField>,
}

impl ResonanceSpace {
    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Resonant degrees in increasing order.
    pub fn degrees(&self) -> Vec<u32> {
        let mut d: Vec<u32> = self.basis.iter().map(|b| b.mode.n).collect();
        d.dedup();
        d
    }

    /// Distinct `(n, m)` pairs.
    pub fn pairs(&self) -> Vec<(u32, i32)> {
        let mut p: Vec<(u32, i32)> = self.basis.iter().map(|b| (b.mode.n, b.mode.m)).collect();
        p.dedup();
        p
    }
}

/// Truncated certificate: all `n <= n_max` with `j_n(ω) = 0` in the sense
/// of [`is_resonant_degree`], with every order `m` and both polarisations.
pub fn resonance_space(omega: f64, n_max: u32) -> Result<ResonanceSpace, SolverError> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(SolverError::Config(format!("omega = {omega} must be positive")));
    }
    if n_max == 0 || n_max > MAX_TRUNCATION {
        return Err(SolverError::Config(format!("n_max = {n_max} outside 1..=64")));
    }
    let basis = (1..=n_max)
        .filter(|&n| is_resonant_degree(n, omega))
        .flat_map(|n| {
            (-(n as i32)..=n as i32).flat_map(move |m| {
                [Polarization::TE, Polarization::TM]
                    .into_iter()
                    .map(move |pol| ResonantField {
                        mode: ModeIndex { n, m, pol },
                    })
            })
        })
        .collect();
    Ok(ResonanceSpace { omega, n_max, basis })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    pub field: ModeIndex,
    pub value: Complex64,
}

/// `∫_{B_1} J · conj(E_0)` for every basis element `E_0` of `space`, as a
/// sum over channels of (radial integral) × (angular projection).
pub fn compatibility(source: &SourceSpec, space: &ResonanceSpace) -> Result<Vec<Pairing>, SolverError> {
    let terms = match source {
        SourceSpec::Interior(terms) => terms,
        SourceSpec::PlaneWave(_) => {
            return Err(SolverError::Config("compatibility needs an interior source".into()));
        }
    };
    if space.is_empty() {
        return Ok(Vec::new());
    }
    let omega = space.omega;
    let top = terms
        .iter()
        .map(|t| t.mode.n)
        .chain(space.basis.iter().map(|b| b.mode.n))
        .max()
        .unwrap_or(1);
    let quad = sphere_rule((top + 2).min(160));
    let tables: Vec<_> = quad.nodes.iter().map(|x| VshTable::new(top, x)).collect();

    let mut out = Vec::with_capacity(space.basis.len());
    for field in &space.basis {
        let mut value = ZERO;
        let bi = field.mode.flat();
        for t in terms {
            let ti = t.mode.flat();
            let mut angular = [ZERO; 3];
            for ((x, w), tab) in quad.nodes.iter().zip(&quad.weights).zip(&tables) {
                let j = tab.v[ti];
                let xh = x.map(Complex64::from);
                let basis = [xh * tab.y[bi], tab.u[bi], tab.v[bi]];
                for c in 0..3 {
                    angular[c] += dot_conj(&j, &basis[c]) * *w;
                }
            }
            for c in 0..3 {
                if angular[c].norm() == 0.0 {
                    continue;
                }
                let radial = integrate_graded_complex(
                    |r| {
                        let e0 = field.channels(omega, r).e[c];
                        t.amplitude * t.profile.eval(omega, r) * e0.conj() * (r * r)
                    },
                    0.0,
                    1.0,
                );
                value += radial * angular[c];
            }
        }
        out.push(Pairing {
            field: field.mode,
            value,
        });
    }
    Ok(out)
}

pub fn is_compatible(pairings: &[Pairing]) -> bool {
    pairings.iter().all(|p| p.value.norm() <= COMPATIBILITY_TOL)
}

/// Both sides of
/// `∮ (ν×Ĥ)·conj(E_0) - ∮ (ν×Ê)·conj(H_0) = ∫_{B_1} |E_0|²`
/// for an interior solve driven by the current `E_0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyIdentity {
    pub boundary: Complex64,
    pub volume: f64,
}

impl EnergyIdentity {
    pub fn relative_error(&self) -> f64 {
        (self.boundary - self.volume).norm() / self.volume.abs()
    }
}

/// `term` must be the solve's only source and a Maxwell field itself:
/// `amplitude · j_n(ωr) V_n^m`.
pub fn energy_identity(solution: &TransmissionSolution, term: &InteriorTerm) -> Result<EnergyIdentity, SolverError> {
    if solution.frame != Frame::Scaled {
        return Err(SolverError::Config("energy identity needs an interior-source solve".into()));
    }
    match term.profile {
        RadialProfile::Bessel { order } if order == term.mode.n => {}
        _ => {
            return Err(SolverError::Domain(
                "energy identity needs the profile j_n(ωr) on the same degree as the mode".into(),
            ))
        }
    }
    let omega = solution.omega;
    let field = ResonantField { mode: term.mode };
    let top = solution.modes.iter().map(|m| m.mode.n).max().unwrap_or(1).max(term.mode.n);
    let quad = sphere_rule((2 * top + 2).min(160));
    let f0 = field.channels(omega, 1.0);
    let idx = term.mode.flat();
    let mut boundary = ZERO;
    for (x, w) in quad.nodes.iter().zip(&quad.weights) {
        let (e, h) = solution.synthesize_side(x, Side::Interior);
        let tab = VshTable::new(term.mode.n, x);
        let xh = x.map(Complex64::from);
        let basis = [xh * tab.y[idx], tab.u[idx], tab.v[idx]];
        let mut e0 = CVec3::zeros();
        let mut h0 = CVec3::zeros();
        for c in 0..3 {
            e0 += basis[c] * (f0.e[c] * term.amplitude);
            h0 += basis[c] * (f0.h[c] * term.amplitude);
        }
        let integrand = dot_conj(&xh.cross(&h), &e0) - dot_conj(&xh.cross(&e), &h0);
        boundary += integrand * *w;
    }
    let radial = integrate_graded_complex(
        |r| Complex64::from(r * r * specfun::sph_bessel_j(term.mode.n, omega * r).powi(2)),
        0.0,
        1.0,
    );
    Ok(EnergyIdentity {
        boundary,
        volume: term.amplitude.norm_sqr() * radial.re,
    })
}

#[derive(Debug, Clone)]
pub struct LimitMode {
    pub mode: ModeIndex,
    /// Coefficient of `j_n(ωr)`.
    pub c: Complex64,
    pub particular: Vec<Arc<ParticularSolution>>,
    /// `|P(1)|` relative to the particular trace.
    pub boundary_residual: f64,
}

/// The `ρ → 0` interior field: `curl E_0 = iω H_0`,
/// `curl H_0 = -iω E_0 + J` in `B_1` with `(curl E_0)·ν = 0` on `∂B_1`.
#[derive(Debug, Clone)]
pub struct LimitField {
    pub omega: f64,
    pub modes: Vec<LimitMode>,
}

impl LimitField {
    pub fn mode(&self, mode: &ModeIndex) -> Option<&LimitMode> {
        self.modes.iter().find(|m| m.mode == *mode)
    }

    pub fn channels(&self, mode: &ModeIndex, r: f64) -> ChannelFactors {
        let Some(lm) = self.mode(mode) else {
            return ChannelFactors::ZERO;
        };
        let r = r.max(1e-12);
        let w = self.omega;
        let (j, dj) = bessel_jd(lm.mode.n, w * r);
        let mut p = lm.c * j;
        let mut dp = lm.c * (j + w * r * dj) / r;
        for part in &lm.particular {
            let (a, b) = part.eval(r);
            p += a;
            dp += b;
        }
        ChannelFactors::from_primary(lm.mode.pol, lm.mode.n, p, dp, r, w)
    }
}

pub fn solve_limit_interior(source: &SourceSpec, omega: f64) -> Result<LimitField, SolverError> {
    check_omega(omega)?;
    let terms = match source {
        SourceSpec::Interior(terms) => terms,
        SourceSpec::PlaneWave(_) => {
            return Err(SolverError::Config("the limit field needs an interior source".into()));
        }
    };
    let band = source.band_limit().unwrap_or(0);
    let space = resonance_space(omega, default_n_max(band))?;
    if let Some(n) = space.degrees().first() {
        return Err(SolverError::OutOfScope { omega, n: *n });
    }
    let mut modes = Vec::new();
    for (mode, parts) in particulars(terms, omega)? {
        let gp: Complex64 = parts.iter().map(|p| p.eval(1.0).0).sum();
        let j = specfun::sph_bessel_j(mode.n, omega);
        let c = -gp / j;
        let residual = (c * j + gp).norm() / gp.norm().max(f64::MIN_POSITIVE);
        if !(residual <= RESIDUAL_TOL) && gp.norm() > 0.0 {
            return Err(SolverError::Residual { mode, residual });
        }
        modes.push(LimitMode {
            mode,
            c,
            particular: parts,
            boundary_residual: if gp.norm() > 0.0 { residual } else { 0.0 },
        });
    }
    Ok(LimitField { omega, modes })
}
