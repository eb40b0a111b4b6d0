use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "cloaksim",
    version,
    about = "Semi-analytic approximate-cloaking experiments",
    args_override_self = true
)]
pub struct Cli {
    /// Flat `key=value` file whose keys mirror long flag names; flags on the
    /// command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate resonant frequencies, the positive zeros of j_n.
    Resonances(ResonancesArgs),
    /// Sweep rho geometrically for one scenario and fit the decay rate.
    Sweep(SweepArgs),
    /// Sample the cloak (or small-inclusion) material eigenvalues on [0, 3].
    Material(MaterialArgs),
    /// Distance of the interior field to its rho -> 0 limit.
    LimitCompare(LimitArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Output {
    /// Output file; standard output when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ResonancesArgs {
    #[arg(long)]
    pub n_max: u32,
    #[arg(long)]
    pub omega_max: f64,
    /// Root tolerance of the zero finder.
    #[arg(long, default_value_t = cloaksim::specfun::DEFAULT_ROOT_TOL)]
    pub tol: f64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// plane-wave, interior-nonresonant, interior-resonant-incompatible or
    /// interior-resonant-compatible.
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub omega: f64,
    #[arg(long, default_value_t = 0.0625)]
    pub rho_start: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rho_factor: f64,
    #[arg(long, default_value_t = 9)]
    pub steps: usize,
    /// Degree of the interior source; scenario default when absent.
    #[arg(long)]
    pub source_n: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    pub source_m: Option<i32>,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MaterialArgs {
    #[arg(long)]
    pub rho: f64,
    #[arg(long, default_value_t = 301)]
    pub samples: usize,
    /// Sample the equivalent small-inclusion medium instead of the cloak. Rows
    /// stay indexed by the cloak-frame radius |y| and report the medium at
    /// the preimage F^{-1}(y), so both tables align row by row.
    #[arg(long)]
    pub equivalent: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LimitArgs {
    #[arg(long)]
    pub omega: f64,
    #[arg(long, default_value_t = 1)]
    pub n: u32,
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    pub m: i32,
    #[arg(long, default_value_t = 0.0625)]
    pub rho_start: f64,
    /// Number of rho values, halving from `rho-start`.
    #[arg(long, default_value_t = 7)]
    pub steps: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

/// Parses a flat `key=value` file into `--key value` arguments. Blank lines
/// and lines starting with `#` are ignored; `true`/`false` toggle switches.
pub fn config_args(text: &str, path: &Path) -> Result<Vec<OsString>, CliError> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("{}:{}: expected key=value", path.display(), no + 1))
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(CliError::Usage(format!("{}:{}: invalid key", path.display(), no + 1)));
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    Ok(out)
}

/// Location of `--config` in raw arguments, with its value.
fn find_config(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// Splices config-file arguments in right after the subcommand so that
/// command-line flags, which come later, override them.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = find_config(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let extra = config_args(&text, &path)?;
    let sub = args
        .iter()
        .skip(1)
        .position(|a| {
            let s = a.to_string_lossy();
            ["resonances", "sweep", "material", "limit-compare"].contains(&s.as_ref())
        })
        .map(|i| i + 2)
        .unwrap_or(args.len());
    let mut out = args[..sub].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[sub..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_files() {
        let text = "# sweep\nscenario = plane-wave\nomega=1\n\nrho_start=0.125\nequivalent=true\nverbose=false\n";
        let args = config_args(text, Path::new("x.cfg")).unwrap();
        let args: Vec<String> = args.into_iter().map(|a| a.into_string().unwrap()).collect();
        assert_eq!(
            args,
            ["--scenario", "plane-wave", "--omega", "1", "--rho-start", "0.125", "--equivalent"]
        );
        assert!(config_args("omega", Path::new("x")).is_err());
        assert!(config_args("=3", Path::new("x")).is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "omega=2\nsteps=5\n").unwrap();
        let raw: Vec<OsString> = ["cloaksim", "sweep", "--config", path.to_str().unwrap(), "--omega", "3", "--scenario", "plane-wave"]
            .iter()
            .map(OsString::from)
            .collect();
        let cli = Cli::try_parse_from(expand_config(raw).unwrap()).unwrap();
        let Command::Sweep(s) = cli.command else { panic!() };
        assert_eq!((s.omega, s.steps), (3.0, 5));
    }
}
