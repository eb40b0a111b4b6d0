//! Norms of solved fields, ρ-sweeps over the four scenarios, log–log rate
//! fits and the distance to the limit interior field.
//!
//! Norms use Parseval in the `(Y x̂, U, V)` basis, so an `L²` norm over a
//! spherical shell is a radial integral of summed squared channel factors.
//! All radii here are physical; the solution frame is undone internally.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mode_solver::{
    self, is_compatible, resonance_space, ChannelFactors, LimitField, ModeSolution, SolverError, SourceSpec,
    TransmissionSolution, Side,
};
use crate::quadrature::integrate_adaptive;
use crate::specfun;
use crate::transform::TransformMap;
use crate::vsh::{CVec3, Polarization, VshTable};

/// Radii of the annulus on which visibility is measured.
pub const EXTERIOR_ANNULUS: (f64, f64) = (2.0, 4.0);
/// Leading sweep points left out of slope fits.
pub const FIT_SKIP: usize = 2;
const NORM_TOL: f64 = 1e-11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("at rho = {rho}: {source}")]
    AtRho { rho: f64, source: SolverError },
    #[error("degenerate fit: {0}")]
    Degenerate(String),
    #[error("invalid experiment: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    PlaneWave,
    InteriorNonresonant,
    InteriorResonantIncompatible,
    InteriorResonantCompatible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    E,
    H,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::PlaneWave,
        Scenario::InteriorNonresonant,
        Scenario::InteriorResonantIncompatible,
        Scenario::InteriorResonantCompatible,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::PlaneWave => "plane-wave",
            Scenario::InteriorNonresonant => "interior-nonresonant",
            Scenario::InteriorResonantIncompatible => "interior-resonant-incompatible",
            Scenario::InteriorResonantCompatible => "interior-resonant-compatible",
        }
    }

    /// Field whose exterior norm the sweep reports.
    pub fn designated_field(self) -> FieldKind {
        match self {
            Scenario::PlaneWave | Scenario::InteriorResonantIncompatible => FieldKind::E,
            Scenario::InteriorNonresonant | Scenario::InteriorResonantCompatible => FieldKind::H,
        }
    }

    pub fn is_resonant(self) -> bool {
        matches!(
            self,
            Scenario::InteriorResonantIncompatible | Scenario::InteriorResonantCompatible
        )
    }

    pub fn is_interior(self) -> bool {
        self != Scenario::PlaneWave
    }

    /// Source degree and order used when none is given.
    pub fn default_mode(self) -> (u32, i32) {
        match self {
            Scenario::InteriorResonantCompatible => (2, 1),
            _ => (1, 1),
        }
    }

    /// Reference plane wave, or `j_n(ωr) V_n^m` for interior scenarios.
    pub fn default_source(self, n: u32, m: i32) -> Result<SourceSpec, ExperimentError> {
        Ok(match self {
            Scenario::PlaneWave => SourceSpec::PlaneWave(mode_solver::PlaneWave::reference()),
            _ => SourceSpec::Interior(vec![mode_solver::InteriorTerm::bessel(n, m)?]),
        })
    }

    /// Checks that `omega` and `source` actually realise this scenario.
    pub fn check(self, omega: f64, source: &SourceSpec) -> Result<(), ExperimentError> {
        let interior = matches!(source, SourceSpec::Interior(_));
        if interior != self.is_interior() {
            return Err(ExperimentError::Config(format!(
                "scenario {} does not match the source kind",
                self.name()
            )));
        }
        if !interior {
            return Ok(());
        }
        let band = source.band_limit().unwrap_or(0);
        let space = resonance_space(omega, mode_solver::default_n_max(band))?;
        match self {
            Scenario::InteriorNonresonant if !space.is_empty() => Err(ExperimentError::Config(format!(
                "omega = {omega} is resonant; use a resonant scenario"
            ))),
            Scenario::InteriorResonantIncompatible | Scenario::InteriorResonantCompatible if space.is_empty() => {
                Err(ExperimentError::Config(format!("omega = {omega} is not resonant")))
            }
            Scenario::InteriorResonantIncompatible if is_compatible(&mode_solver::compatibility(source, &space)?) => {
                Err(ExperimentError::Config("source is compatible with the resonance space".into()))
            }
            Scenario::InteriorResonantCompatible if !is_compatible(&mode_solver::compatibility(source, &space)?) => {
                Err(ExperimentError::Config("source is not compatible with the resonance space".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == norm)
            .ok_or_else(|| ExperimentError::Config(format!("unknown scenario '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub rho: f64,
    pub scenario: Scenario,
    /// `L²(B_4∖B_2)` norm of the scenario's designated field.
    pub exterior_norm: f64,
    /// `L²(B_1)` norm of `(E, H)`.
    pub interior_norm: f64,
    pub limit_gap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

impl RateFit {
    /// `±0.1`, widened to `±0.15` for fits with `R² < 0.999`.
    pub fn slope_tolerance(&self) -> f64 {
        if self.r_squared >= 0.999 {
            0.1
        } else {
            0.15
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Column {
    Exterior,
    Interior,
    LimitGap,
}

/// `|E|²` and `|H|²` summed over the three channels of one mode.
fn norms(cf: &ChannelFactors) -> (f64, f64) {
    (cf.e_norm_sqr(), cf.h_norm_sqr())
}

/// Splits `|radial|²` (the `Y x̂` channel) from `|tangential|²`.
fn split(cf: &ChannelFactors, field: FieldKind) -> (f64, f64) {
    let c = match field {
        FieldKind::E => &cf.e,
        FieldKind::H => &cf.h,
    };
    (c[0].norm_sqr(), c[1].norm_sqr() + c[2].norm_sqr())
}

/// Exterior modes without particular data share radial shapes per `(n,
/// pol)`, so their squared coefficients are pooled.
struct Pooled<'a> {
    weights: Vec<(u32, Polarization, f64)>,
    single: Vec<&'a ModeSolution>,
}

fn pool<'a>(solution: &'a TransmissionSolution, side: Side) -> Pooled<'a> {
    let mut weights: Vec<(u32, Polarization, f64)> = Vec::new();
    let mut single = Vec::new();
    for ms in &solution.modes {
        if side == Side::Interior && !ms.particular.is_empty() {
            single.push(ms);
            continue;
        }
        let w = match side {
            Side::Exterior => ms.a_ext.norm_sqr(),
            Side::Interior => ms.c_int.norm_sqr(),
        };
        match weights.iter_mut().find(|(n, p, _)| *n == ms.mode.n && *p == ms.mode.pol) {
            Some(entry) => entry.2 += w,
            None => weights.push((ms.mode.n, ms.mode.pol, w)),
        }
    }
    Pooled { weights, single }
}

/// Sum over modes of `(radial², tangential²)` of one field at frame radius
/// `t`.
fn channel_sums(solution: &TransmissionSolution, pooled: &Pooled, t: f64, side: Side, field: FieldKind) -> (f64, f64) {
    let mut acc = (0.0, 0.0);
    for &(n, pol, w) in &pooled.weights {
        if w == 0.0 {
            continue;
        }
        let unit = unit_mode(n, pol, side);
        let (a, b) = split(&solution.channels(&unit, t, side), field);
        acc.0 += w * a;
        acc.1 += w * b;
    }
    for ms in &pooled.single {
        let (a, b) = split(&solution.channels(ms, t, side), field);
        acc.0 += a;
        acc.1 += b;
    }
    acc
}

fn unit_mode(n: u32, pol: Polarization, side: Side) -> ModeSolution {
    let one = Complex64::new(1.0, 0.0);
    ModeSolution {
        mode: crate::vsh::ModeIndex { n, m: 0, pol },
        a_ext: if side == Side::Exterior { one } else { Complex64::new(0.0, 0.0) },
        a_int: Complex64::new(0.0, 0.0),
        c_int: if side == Side::Interior { one } else { Complex64::new(0.0, 0.0) },
        particular: Vec::new(),
        jumps: [Complex64::new(0.0, 0.0); 2],
        residual: 0.0,
    }
}

/// `L²` norm of the physical `field` over `r_in < |y| < r_out`, with
/// `1 <= r_in`. The cloak shell `1 <= |y| < 2` is covered by pushing the
/// exterior frame field forward through `F_ρ`.
pub fn l2_norm_annulus(
    solution: &TransmissionSolution,
    field: FieldKind,
    r_in: f64,
    r_out: f64,
) -> Result<f64, ExperimentError> {
    if !(r_in >= 1.0 && r_out > r_in && r_out.is_finite()) {
        return Err(ExperimentError::Config(format!(
            "annulus needs 1 <= r_in < r_out, got ({r_in}, {r_out})"
        )));
    }
    let rho = solution.rho;
    let scale = solution.frame.exterior_scale(rho);
    let pooled = pool(solution, Side::Exterior);
    let mut total = 0.0;

    if r_out > 2.0 {
        let a = r_in.max(2.0);
        total += integrate_adaptive(
            |r| {
                let (x, y) = channel_sums(solution, &pooled, r / rho, Side::Exterior, field);
                r * r * (x + y)
            },
            a,
            r_out,
            NORM_TOL,
        );
    }
    if r_in < 2.0 {
        let map = TransformMap::new(rho).map_err(SolverError::from)?;
        let gp = map.g_prime();
        total += integrate_adaptive(
            |r| {
                let s = map.radial_inv(r);
                let (x, y) = channel_sums(solution, &pooled, s / rho, Side::Exterior, field);
                let t = s / r;
                r * r * (x / (gp * gp) + t * t * y)
            },
            r_in,
            r_out.min(2.0),
            NORM_TOL,
        );
    }
    Ok(scale * total.max(0.0).sqrt())
}

/// `L²(B_1)` norm of the physical interior `(E, H)`.
pub fn interior_energy(solution: &TransmissionSolution) -> f64 {
    let pooled = pool(solution, Side::Interior);
    let total = integrate_adaptive(
        |r| {
            let (e0, e1) = channel_sums(solution, &pooled, r, Side::Interior, FieldKind::E);
            let (h0, h1) = channel_sums(solution, &pooled, r, Side::Interior, FieldKind::H);
            r * r * (e0 + e1 + h0 + h1)
        },
        0.0,
        1.0,
        NORM_TOL,
    );
    solution.frame.interior_scale(solution.rho) * total.max(0.0).sqrt()
}

/// Physical `(E, H)` at `y`, in any region.
pub fn physical_field(solution: &TransmissionSolution, y: &Vector3<f64>) -> (CVec3, CVec3) {
    let rho = solution.rho;
    let r = y.norm();
    if r < 1.0 {
        let s = solution.frame.interior_scale(rho);
        let (e, h) = solution.synthesize_side(y, Side::Interior);
        return (e * Complex64::from(s), h * Complex64::from(s));
    }
    let s = solution.frame.exterior_scale(rho);
    let frame = |x: &Vector3<f64>| {
        let (e, h) = solution.synthesize_side(&(x / rho), Side::Exterior);
        (e * Complex64::from(s), h * Complex64::from(s))
    };
    if r >= 2.0 {
        return frame(y);
    }
    let map = TransformMap::new(rho).expect("solution rho is valid");
    let (e, h) = frame(&map.eval_finv(y));
    let m = map.inverse_transpose_jacobian_at_image(y).map(Complex64::from);
    (m * e, m * h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitGap {
    pub l2: f64,
    /// `L²` norm of the curl difference; equals `ω · l2` mode-wise.
    pub curl: f64,
}

/// `‖(E, H) - Cl(0, J)‖` over `B_1` for an interior-source solve.
pub fn limit_gap(solution: &TransmissionSolution, limit: &LimitField) -> Result<LimitGap, ExperimentError> {
    if solution.frame != mode_solver::Frame::Scaled {
        return Err(ExperimentError::Config("limit gap needs an interior-source solve".into()));
    }
    if (solution.omega - limit.omega).abs() > 0.0 {
        return Err(ExperimentError::Config("solution and limit use different frequencies".into()));
    }
    for lm in &limit.modes {
        if solution.mode(&lm.mode).is_none() {
            return Err(SolverError::ChannelMismatch { mode: lm.mode }.into());
        }
    }
    let omega = solution.omega;
    let mut sq = 0.0;
    for ms in &solution.modes {
        let lm = limit
            .mode(&ms.mode)
            .ok_or(SolverError::ChannelMismatch { mode: ms.mode })?;
        let dc = ms.c_int - lm.c;
        if dc.norm() == 0.0 {
            continue;
        }
        // Both fields share the particular part; the difference is a pure
        // j_n(ωr) mode.
        let n = ms.mode.n;
        let unit = integrate_adaptive(
            |r| {
                let x = omega * r;
                let (j, dj) = specfun::sph_bessel_j_with_derivative(n, x.max(1e-300)).expect("positive");
                let p = Complex64::from(j);
                let dp = Complex64::from((j + x * dj) / r);
                let cf = ChannelFactors::from_primary(ms.mode.pol, n, p, dp, r, omega);
                let (e, h) = norms(&cf);
                r * r * (e + h)
            },
            0.0,
            1.0,
            NORM_TOL,
        );
        sq += dc.norm_sqr() * unit;
    }
    let l2 = sq.sqrt();
    Ok(LimitGap { l2, curl: omega * l2 })
}

/// `2^{-4}, ..., 2^{-12}`.
pub fn default_rho_grid() -> Vec<f64> {
    geometric_grid(0.0625, 0.5, 9)
}

pub fn geometric_grid(start: f64, factor: f64, steps: usize) -> Vec<f64> {
    (0..steps).map(|k| start * factor.powi(k as i32)).collect()
}

fn check_grid(rhos: &[f64]) -> Result<(), ExperimentError> {
    if rhos.len() < 5 {
        return Err(ExperimentError::Config(format!("sweep needs at least 5 rho values, got {}", rhos.len())));
    }
    if let Some(bad) = rhos.iter().find(|&&r| !(r > 0.0 && r < 0.5)) {
        return Err(ExperimentError::Config(format!("rho = {bad} outside (0, 1/2)")));
    }
    let ratio = rhos[1] / rhos[0];
    if !(ratio < 1.0) {
        return Err(ExperimentError::Config("rho values must decrease".into()));
    }
    for w in rhos.windows(2) {
        if ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-9 {
            return Err(ExperimentError::Config("rho values must form a geometric sequence".into()));
        }
    }
    Ok(())
}

/// One sweep row. `limit` supplies the limit field for the gap column.
pub fn sweep_point(
    scenario: Scenario,
    omega: f64,
    rho: f64,
    source: &SourceSpec,
    limit: Option<&LimitField>,
) -> Result<SweepRecord, ExperimentError> {
    let at = |e: SolverError| ExperimentError::AtRho { rho, source: e };
    let cfg = mode_solver::ScenarioConfig::new(rho, omega, source.clone()).map_err(at)?;
    let sol = mode_solver::solve(&cfg).map_err(at)?;
    let (a, b) = EXTERIOR_ANNULUS;
    let exterior_norm = l2_norm_annulus(&sol, scenario.designated_field(), a, b)?;
    let interior_norm = interior_energy(&sol);
    let limit_gap = match limit {
        Some(l) => Some(limit_gap(&sol, l)?.l2),
        None => None,
    };
    Ok(SweepRecord {
        rho,
        scenario,
        exterior_norm,
        interior_norm,
        limit_gap,
    })
}

/// Limit field for the gap column when the scenario has one.
pub fn scenario_limit(scenario: Scenario, omega: f64, source: &SourceSpec) -> Result<Option<LimitField>, ExperimentError> {
    if scenario == Scenario::InteriorNonresonant {
        Ok(Some(mode_solver::solve_limit_interior(source, omega)?))
    } else {
        Ok(None)
    }
}

/// Every precondition of [`run_sweep`], checked without solving.
pub fn validate_sweep(scenario: Scenario, omega: f64, rhos: &[f64], source: &SourceSpec) -> Result<(), ExperimentError> {
    check_grid(rhos)?;
    mode_solver::check_omega(omega)?;
    scenario.check(omega, source)
}

/// Sequential sweep in the order of `rhos`.
pub fn run_sweep(
    scenario: Scenario,
    omega: f64,
    rhos: &[f64],
    source: &SourceSpec,
) -> Result<Vec<SweepRecord>, ExperimentError> {
    validate_sweep(scenario, omega, rhos, source)?;
    let limit = scenario_limit(scenario, omega, source)?;
    rhos.iter()
        .map(|&rho| sweep_point(scenario, omega, rho, source, limit.as_ref()))
        .collect()
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<RateFit, ExperimentError> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(ExperimentError::Degenerate("need at least 3 points".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(ExperimentError::Degenerate("values must be positive and finite".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(ExperimentError::Degenerate("all rho values are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let d = y - (intercept + slope * x);
            d * d
        })
        .sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points_used: xs.len(),
    })
}

pub fn column_value(record: &SweepRecord, column: Column) -> Option<f64> {
    match column {
        Column::Exterior => Some(record.exterior_norm),
        Column::Interior => Some(record.interior_norm),
        Column::LimitGap => record.limit_gap,
    }
}

/// Slope of `log(column)` against `log ρ` over all `records`.
pub fn fit_rate(records: &[SweepRecord], column: Column) -> Result<RateFit, ExperimentError> {
    let mut xs = Vec::with_capacity(records.len());
    let mut ys = Vec::with_capacity(records.len());
    for r in records {
        let v = column_value(r, column)
            .ok_or_else(|| ExperimentError::Degenerate(format!("column {column:?} missing at rho = {}", r.rho)))?;
        xs.push(r.rho);
        ys.push(v);
    }
    fit_loglog(&xs, &ys)
}

/// [`fit_rate`] without the first [`FIT_SKIP`] pre-asymptotic points.
pub fn fit_tail(records: &[SweepRecord], column: Column) -> Result<RateFit, ExperimentError> {
    fit_rate(&records[FIT_SKIP.min(records.len())..], column)
}

/// Physical interior `(E, H)` of the limit field at `y`, `|y| < 1`.
pub fn limit_field_at(limit: &LimitField, y: &Vector3<f64>) -> (CVec3, CVec3) {
    let r = y.norm();
    let top = limit.modes.iter().map(|m| m.mode.n).max().unwrap_or(1);
    let table = VshTable::new(top, y);
    let xh = (y / r).map(Complex64::from);
    let mut e = CVec3::zeros();
    let mut h = CVec3::zeros();
    for lm in &limit.modes {
        let cf = limit.channels(&lm.mode, r);
        let idx = lm.mode.flat();
        let basis = [xh * table.y[idx], table.u[idx], table.v[idx]];
        for c in 0..3 {
            e += basis[c] * cf.e[c];
            h += basis[c] * cf.h[c];
        }
    }
    (e, h)
}
