use rayon::prelude::*;
use serde::Serialize;

use cloaksim::experiments::{
    self, fit_tail, geometric_grid, scenario_limit, sweep_point, validate_sweep, Column, FieldKind, RateFit,
    Scenario, SweepRecord,
};
use cloaksim::mode_solver::{
    self, default_n_max, solve_limit_interior, InteriorTerm, ScenarioConfig, SourceSpec, MAX_OMEGA,
};
use cloaksim::specfun::{resonant_frequencies, ZeroOptions, MAX_ORDER};
use cloaksim::transform::{cloak_material, equivalent_material, TransformMap};
use nalgebra::Vector3;

use crate::args::{LimitArgs, MaterialArgs, ResonancesArgs, SweepArgs};
use crate::output::{csv_table, emit, is_json, json};
use crate::CliError;

/// Distance within which a requested frequency is moved onto a zero of `j_n`.
const SNAP_TOL: f64 = 1e-6;
const MAX_STEPS: usize = 64;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn check_omega(omega: f64) -> Result<(), CliError> {
    if omega > 0.0 && omega <= MAX_OMEGA {
        Ok(())
    } else {
        Err(usage(format!("--omega must lie in (0, {MAX_OMEGA}], got {omega}")))
    }
}

fn check_rho(rho: f64, flag: &str) -> Result<(), CliError> {
    if rho > 0.0 && rho < 0.5 {
        Ok(())
    } else {
        Err(usage(format!("--{flag} must lie in (0, 0.5), got {rho}")))
    }
}

fn check_mode(n: u32, m: i32) -> Result<(), CliError> {
    if n == 0 || n > MAX_ORDER {
        return Err(usage(format!("source degree must lie in 1..={MAX_ORDER}, got {n}")));
    }
    if m.unsigned_abs() > n {
        return Err(usage(format!("source order must satisfy |m| <= n, got m = {m}, n = {n}")));
    }
    Ok(())
}

fn pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("CLOAKSIM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(format!("CLOAKSIM_THREADS must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Other(e.to_string()))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ZeroRow {
    pub n: u32,
    pub k: u32,
    pub omega: f64,
}

fn zero_table(n_max: u32, omega_max: f64, tol: f64) -> Vec<ZeroRow> {
    resonant_frequencies(n_max, omega_max, ZeroOptions { tol })
        .into_iter()
        .map(|z| ZeroRow {
            n: z.n,
            k: z.k,
            omega: z.x,
        })
        .collect()
}

fn nearest_zero(omega: f64, n_max: u32) -> Option<ZeroRow> {
    zero_table(n_max, (omega + 1.0).min(MAX_OMEGA + 1.0), ZeroOptions::default().tol)
        .into_iter()
        .min_by(|a, b| (a.omega - omega).abs().total_cmp(&(b.omega - omega).abs()))
}

pub fn resonances(a: &ResonancesArgs) -> Result<(), CliError> {
    if a.n_max == 0 || a.n_max > MAX_ORDER {
        return Err(usage(format!(
            "--n-max must lie in 1..={MAX_ORDER} (resonances start at n = 1), got {}",
            a.n_max
        )));
    }
    if !(a.omega_max > 0.0 && a.omega_max <= MAX_OMEGA) {
        return Err(usage(format!("--omega-max must lie in (0, {MAX_OMEGA}], got {}", a.omega_max)));
    }
    if !(a.tol > 0.0 && a.tol < 1e-3) {
        return Err(usage(format!("--tol must lie in (0, 1e-3), got {}", a.tol)));
    }
    let rows = zero_table(a.n_max, a.omega_max, a.tol);
    let body = if is_json(&a.output) {
        #[derive(Serialize)]
        struct Doc<'a> {
            config: &'a ResonancesArgs,
            zeros: &'a [ZeroRow],
        }
        json(&Doc { config: a, zeros: &rows })?
    } else {
        csv_table(&rows, &["n", "k", "omega"], &[])?
    };
    emit(&a.output, &body)?;
    eprintln!("{} resonant frequencies up to omega = {}", rows.len(), a.omega_max);
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepConfig {
    scenario: Scenario,
    omega: f64,
    omega_requested: f64,
    rho_start: f64,
    rho_factor: f64,
    steps: usize,
    source_n: Option<u32>,
    source_m: Option<i32>,
    designated_field: FieldKind,
}

#[derive(Debug, Serialize)]
struct Fit {
    slope: f64,
    intercept: f64,
    r_squared: f64,
}

impl From<RateFit> for Fit {
    fn from(f: RateFit) -> Self {
        Fit {
            slope: f.slope,
            intercept: f.intercept,
            r_squared: f.r_squared,
        }
    }
}

/// Moves `omega` onto the nearest resonance for resonant scenarios.
fn snap_resonant(omega: f64, band: u32) -> Result<f64, CliError> {
    let n_max = default_n_max(band);
    match nearest_zero(omega, n_max) {
        Some(z) if (z.omega - omega).abs() <= SNAP_TOL => {
            if z.omega != omega {
                eprintln!(
                    "snapped omega {omega} to {} (zero {} of j_{})",
                    z.omega, z.k, z.n
                );
            }
            Ok(z.omega)
        }
        Some(z) => Err(usage(format!(
            "resonant scenarios need omega within {SNAP_TOL} of a zero of j_n; nearest is {} (zero {} of j_{})",
            z.omega, z.k, z.n
        ))),
        None => Err(usage(format!("no zero of j_n with n <= {n_max} near omega = {omega}"))),
    }
}

pub fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let scenario: Scenario = a.scenario.parse().map_err(|e: experiments::ExperimentError| usage(e.to_string()))?;
    check_omega(a.omega)?;
    check_rho(a.rho_start, "rho-start")?;
    if !(a.rho_factor > 0.0 && a.rho_factor < 1.0) {
        return Err(usage(format!("--rho-factor must lie in (0, 1), got {}", a.rho_factor)));
    }
    if !(5..=MAX_STEPS).contains(&a.steps) {
        return Err(usage(format!("--steps must lie in 5..={MAX_STEPS}, got {}", a.steps)));
    }
    let (dn, dm) = scenario.default_mode();
    let (n, m) = (a.source_n.unwrap_or(dn), a.source_m.unwrap_or(dm));
    if scenario.is_interior() {
        check_mode(n, m)?;
    } else if a.source_n.is_some() || a.source_m.is_some() {
        return Err(usage("--source-n/--source-m apply to interior scenarios only"));
    }
    let source = scenario.default_source(n, m)?;
    let rhos = geometric_grid(a.rho_start, a.rho_factor, a.steps);
    if rhos.iter().any(|&r| !(r > 0.0 && r.is_normal())) {
        return Err(usage("rho grid underflows; use fewer steps or a larger factor"));
    }
    let omega = if scenario.is_resonant() {
        snap_resonant(a.omega, source.band_limit().unwrap_or(0))?
    } else {
        a.omega
    };
    validate_sweep(scenario, omega, &rhos, &source)?;
    let limit = scenario_limit(scenario, omega, &source)?;

    let records: Vec<SweepRecord> = pool()?.install(|| {
        rhos.par_iter()
            .map(|&rho| sweep_point(scenario, omega, rho, &source, limit.as_ref()))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let fit = fit_tail(&records, Column::Exterior)?;
    let interior = fit_tail(&records, Column::Interior)?;
    let gap = if limit.is_some() {
        Some(fit_tail(&records, Column::LimitGap)?)
    } else {
        None
    };
    let mut summary = vec![
        format!("slope={} r2={}", fit.slope, fit.r_squared),
        format!("interior_slope={} interior_r2={}", interior.slope, interior.r_squared),
    ];
    if let Some(g) = gap {
        summary.push(format!("limit_gap_slope={} limit_gap_r2={}", g.slope, g.r_squared));
    }

    let body = if is_json(&a.output) {
        #[derive(Serialize)]
        struct Doc<'a> {
            config: SweepConfig,
            records: &'a [SweepRecord],
            fit: Fit,
            interior_fit: Fit,
            #[serde(skip_serializing_if = "Option::is_none")]
            limit_gap_fit: Option<Fit>,
        }
        json(&Doc {
            config: SweepConfig {
                scenario,
                omega,
                omega_requested: a.omega,
                rho_start: a.rho_start,
                rho_factor: a.rho_factor,
                steps: a.steps,
                source_n: scenario.is_interior().then_some(n),
                source_m: scenario.is_interior().then_some(m),
                designated_field: scenario.designated_field(),
            },
            records: &records,
            fit: fit.into(),
            interior_fit: interior.into(),
            limit_gap_fit: gap.map(Fit::from),
        })?
    } else {
        csv_table(
            &records,
            &["rho", "scenario", "exterior_norm", "interior_norm", "limit_gap"],
            &summary,
        )?
    };
    emit(&a.output, &body)?;
    let dest = a.output.out.as_ref().map(|p| p.display().to_string());
    let line = format!(
        "{scenario} at omega = {omega}: {} records{}; {}",
        records.len(),
        dest.map(|d| format!(" written to {d}")).unwrap_or_default(),
        summary[0]
    );
    if a.output.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct MaterialRow {
    radius: f64,
    eigen_radial: f64,
    eigen_tangential: f64,
    region: &'static str,
}

pub fn material(a: &MaterialArgs) -> Result<(), CliError> {
    check_rho(a.rho, "rho")?;
    if !(2..=1_000_000).contains(&a.samples) {
        return Err(usage(format!("--samples must lie in 2..=1000000, got {}", a.samples)));
    }
    let map = TransformMap::new(a.rho).map_err(|e| usage(e.to_string()))?;
    let rows = (0..a.samples)
        .map(|i| {
            let radius = 3.0 * i as f64 / (a.samples - 1) as f64;
            let y = Vector3::new(radius, 0.0, 0.0);
            let mm = if a.equivalent {
                equivalent_material(a.rho, &map.eval_finv(&y))
            } else {
                cloak_material(a.rho, &y)
            }
            .map_err(|e| usage(e.to_string()))?;
            Ok(MaterialRow {
                radius,
                eigen_radial: mm.eigen_radial,
                eigen_tangential: mm.eigen_tangential,
                region: mm.region.name(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let body = if is_json(&a.output) {
        #[derive(Serialize)]
        struct Doc<'a> {
            config: &'a MaterialArgs,
            samples: &'a [MaterialRow],
        }
        json(&Doc { config: a, samples: &rows })?
    } else {
        csv_table(&rows, &["radius", "eigen_radial", "eigen_tangential", "region"], &[])?
    };
    emit(&a.output, &body)
}

#[derive(Debug, Clone, Copy, Serialize)]
struct GapRow {
    rho: f64,
    limit_gap_l2: f64,
    limit_gap_curl: f64,
}

pub fn limit_compare(a: &LimitArgs) -> Result<(), CliError> {
    check_omega(a.omega)?;
    check_mode(a.n, a.m)?;
    check_rho(a.rho_start, "rho-start")?;
    if !(2..=MAX_STEPS).contains(&a.steps) {
        return Err(usage(format!("--steps must lie in 2..={MAX_STEPS}, got {}", a.steps)));
    }
    if let Some(z) = nearest_zero(a.omega, default_n_max(a.n)) {
        if (z.omega - a.omega).abs() <= SNAP_TOL {
            return Err(CliError::Scope(crate::scope_message(a.omega, z.n)));
        }
    }
    let term = InteriorTerm::bessel(a.n, a.m)?;
    let source = SourceSpec::Interior(vec![term]);
    let limit = solve_limit_interior(&source, a.omega)?;
    let rhos = geometric_grid(a.rho_start, 0.5, a.steps);
    let rows: Vec<GapRow> = pool()?.install(|| {
        rhos.par_iter()
            .map(|&rho| {
                let cfg = ScenarioConfig::new(rho, a.omega, source.clone())?;
                let sol = mode_solver::solve(&cfg)?;
                let gap = experiments::limit_gap(&sol, &limit)?;
                Ok(GapRow {
                    rho,
                    limit_gap_l2: gap.l2,
                    limit_gap_curl: gap.curl,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let monotone = rows.windows(2).all(|w| w[1].limit_gap_l2 < w[0].limit_gap_l2);
    let summary = vec![format!("monotone_decrease={monotone}")];
    let body = if is_json(&a.output) {
        #[derive(Serialize)]
        struct Doc<'a> {
            config: &'a LimitArgs,
            records: &'a [GapRow],
            monotone_decrease: bool,
        }
        json(&Doc {
            config: a,
            records: &rows,
            monotone_decrease: monotone,
        })?
    } else {
        csv_table(&rows, &["rho", "limit_gap_l2", "limit_gap_curl"], &summary)?
    };
    emit(&a.output, &body)?;
    if a.output.out.is_some() {
        println!("{} rows; {}", rows.len(), summary[0]);
    }
    Ok(())
}
