use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "escape-spectral",
    version,
    about = "Mean exit time of surface-mediated diffusion from the unit disk",
    arg_required_else_help = true,
    allow_negative_numbers = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// MET along a grid of desorption rates.
    Solve(Flags),
    /// Eigenvalues and weights of the truncated operator.
    Spectrum(Flags),
    /// Large-rate limit and its leading correction.
    Limit(Flags),
    /// Power-law regimes of eigenvalues and weights.
    Asymptotics(Flags),
    /// Closed-form special cases.
    ClosedForm {
        #[arg(value_enum, default_value = "all")]
        kind: ClosedFormKind,
        #[command(flatten)]
        flags: Flags,
    },
    /// Monte Carlo estimate of the MET.
    Simulate(Flags),
    /// Spectral, diagonal-approximation and Monte Carlo values side by side.
    Compare(Flags),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosedFormKind {
    All,
    Surface,
    Bulk,
    Transportation,
    Point,
    Bounds,
    D2crit,
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    #[default]
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BulkArg {
    #[default]
    ExactJump,
    Euler,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML file with default values; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ejection depth.
    #[arg(long)]
    pub a: Option<f64>,
    /// Target half-width.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub d1: Option<f64>,
    #[arg(long)]
    pub d2: Option<f64>,
    /// Single desorption rate (used when no grid is given).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Truncation order of the operator.
    #[arg(long = "n")]
    pub n: Option<usize>,
    /// Largest truncation allowed.
    #[arg(long)]
    pub max_n: Option<usize>,
    #[arg(long, num_args = 3, value_names = ["MIN", "MAX", "COUNT"], conflicts_with = "lambda_lin")]
    pub lambda_log: Option<Vec<f64>>,
    #[arg(long, num_args = 3, value_names = ["MIN", "MAX", "COUNT"])]
    pub lambda_lin: Option<Vec<f64>>,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Matrix cache file, read when present and written otherwise.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo path count.
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, value_enum)]
    pub bulk_mode: Option<BulkArg>,
    #[arg(long)]
    pub dt_surface: Option<f64>,
    #[arg(long)]
    pub dt_bulk: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub scale: Scale,
}

impl GridSpec {
    fn from_flag(v: &[f64], scale: Scale) -> Result<Self, CliError> {
        let count = v[2];
        if !(count >= 1.0 && count.fract() == 0.0 && count <= u32::MAX as f64) {
            return Err(CliError::Usage(format!("grid count must be a positive integer, got {count}")));
        }
        Ok(Self {
            min: v[0],
            max: v[1],
            count: count as usize,
            scale,
        })
    }

    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        let bad = |why: &str| CliError::Usage(format!("bad λ grid {:?}: {why}", self));
        if self.count == 0 {
            return Err(bad("count must be at least 1"));
        }
        if !(self.min.is_finite() && self.max.is_finite()) || self.max < self.min {
            return Err(bad("need finite min ≤ max"));
        }
        if self.count == 1 {
            return Ok(vec![self.min]);
        }
        let steps = (self.count - 1) as f64;
        let pts = match self.scale {
            Scale::Linear => {
                if self.min < 0.0 {
                    return Err(bad("rates must be non-negative"));
                }
                (0..self.count)
                    .map(|i| self.min + (self.max - self.min) * i as f64 / steps)
                    .collect()
            }
            Scale::Log => {
                if self.min <= 0.0 {
                    return Err(bad("logarithmic grid needs min > 0"));
                }
                let (lo, hi) = (self.min.ln(), self.max.ln());
                (0..self.count)
                    .map(|i| (lo + (hi - lo) * i as f64 / steps).exp())
                    .collect()
            }
        };
        Ok(pts)
    }
}

/// Keys accepted in a config file. Anything else is rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub a: Option<f64>,
    pub eps: Option<f64>,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    pub lambda: Option<f64>,
    pub n: Option<usize>,
    pub max_n: Option<usize>,
    pub lambda_grid: Option<GridSpec>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub cache: Option<PathBuf>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub bulk_mode: Option<BulkArg>,
    pub dt_surface: Option<f64>,
    pub dt_bulk: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config file: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Solve,
    Spectrum,
    Limit,
    Asymptotics,
    ClosedForm(ClosedFormKind),
    Simulate,
    Compare,
}

/// Fully merged run description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub a: Option<f64>,
    pub eps: Option<f64>,
    pub d1: f64,
    pub d2: f64,
    pub lambda: Option<f64>,
    pub n_trunc: Option<usize>,
    pub max_n: Option<usize>,
    pub lambda_grid: Option<GridSpec>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub cache: Option<PathBuf>,
    pub seed: u64,
    pub paths: Option<usize>,
    pub bulk_mode: BulkArg,
    pub dt_surface: Option<f64>,
    pub dt_bulk: Option<f64>,
}

impl RunConfig {
    /// Merges flags over the optional config file.
    pub fn from_cli(cli: Cli) -> Result<Self, CliError> {
        let (command, flags) = match cli.command {
            Command::Solve(f) => (CommandKind::Solve, f),
            Command::Spectrum(f) => (CommandKind::Spectrum, f),
            Command::Limit(f) => (CommandKind::Limit, f),
            Command::Asymptotics(f) => (CommandKind::Asymptotics, f),
            Command::ClosedForm { kind, flags } => (CommandKind::ClosedForm(kind), flags),
            Command::Simulate(f) => (CommandKind::Simulate, f),
            Command::Compare(f) => (CommandKind::Compare, f),
        };
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Self::merge(command, flags, file)
    }

    pub fn merge(command: CommandKind, f: Flags, file: FileConfig) -> Result<Self, CliError> {
        let grid = match (&f.lambda_log, &f.lambda_lin) {
            (Some(v), _) => Some(GridSpec::from_flag(v, Scale::Log)?),
            (None, Some(v)) => Some(GridSpec::from_flag(v, Scale::Linear)?),
            (None, None) => file.lambda_grid,
        };
        Ok(Self {
            command,
            a: f.a.or(file.a),
            eps: f.eps.or(file.eps),
            d1: f.d1.or(file.d1).unwrap_or(1.0),
            d2: f.d2.or(file.d2).unwrap_or(1.0),
            lambda: f.lambda.or(file.lambda),
            n_trunc: f.n.or(file.n),
            max_n: f.max_n.or(file.max_n),
            lambda_grid: grid,
            output: f.output.or(file.output),
            format: f.format.or(file.format).unwrap_or_default(),
            cache: f.cache.or(file.cache),
            seed: f.seed.or(file.seed).unwrap_or(0),
            paths: f.paths.or(file.paths),
            bulk_mode: f.bulk_mode.or(file.bulk_mode).unwrap_or_default(),
            dt_surface: f.dt_surface.or(file.dt_surface),
            dt_bulk: f.dt_bulk.or(file.dt_bulk),
        })
    }

    /// Grid if one was given, otherwise the single `lambda`.
    pub fn lambdas(&self) -> Result<Vec<f64>, CliError> {
        match (&self.lambda_grid, self.lambda) {
            (Some(g), _) => g.points(),
            (None, Some(l)) => Ok(vec![l]),
            (None, None) => Err(CliError::Usage(
                "no desorption rate: pass --lambda, --lambda-log or --lambda-lin".into(),
            )),
        }
    }

    pub fn require(&self, name: &str, v: Option<f64>) -> Result<f64, CliError> {
        v.ok_or_else(|| CliError::Usage(format!("missing parameter --{name}")))
    }
}
