//! Command-line front end.
//!
//! Exit codes: 0 on success or PASS, 2 when an experiment's verdict is FAIL, 1 on
//! usage, configuration, model or I/O errors.

mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use commands::{reverify_tail_csv, Outcome};
pub use config::{ConfigError, CriterionChoice, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(
    name = "adsmc",
    version,
    about = "Adaptive-resampling SMC experiments against an exact oracle"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model file and print its summary.
    Validate(ValidateArgs),
    /// Exact schedule, criterion curves, constants and epsilon.
    Oracle(ExperimentArgs),
    /// One particle run.
    Run(ExperimentArgs),
    /// Coupling-failure sweep over particle counts.
    Couple(ExperimentArgs),
    /// Tail frequencies against the concentration bound.
    Concentrate(ExperimentArgs),
    /// Bias and L_m errors against their bounds.
    Bias(ExperimentArgs),
    /// Local sampling fields against their moments and limiting variance.
    Localfield(ExperimentArgs),
    /// Fluctuations against the exact asymptotic variance.
    Clt(ExperimentArgs),
    /// Closed-form bound values.
    Bounds(BoundsArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Default, Args)]
pub struct ExperimentArgs {
    /// JSON config; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// cv2, entropy or fixed.
    #[arg(long)]
    pub criterion: Option<String>,
    /// Threshold, or comma-separated per-block thresholds.
    #[arg(long, value_delimiter = ',')]
    pub threshold: Option<Vec<f64>>,
    /// `lo,hi`: draw per-block thresholds uniformly on this interval.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub threshold_range: Option<Vec<f64>>,
    /// Comma-separated resampling times for the fixed criterion.
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<usize>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of blocks compared by `couple`; also caps the blocks the experiment commands examine.
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Block examined by the experiment commands (default: every complete block).
    #[arg(long)]
    pub block: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// select or multinomial.
    #[arg(long)]
    pub resampler: Option<String>,
    #[arg(long)]
    pub enum_cap: Option<u64>,
    /// Comma-separated values of the test function on each state.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub f: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub m_list: Option<Vec<u32>>,
    /// Replace the oracle's sigma1 in bound checks.
    #[arg(long)]
    pub sigma1_override: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub sigma1: f64,
    #[arg(long)]
    pub sigma_sq: f64,
    #[arg(long)]
    pub sigma_tilde_sq: f64,
    #[arg(long, default_value_t = 0.05)]
    pub rho: f64,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub r_hi: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r_lo: f64,
    #[arg(long, default_value_t = 1)]
    pub m: usize,
}

impl ExperimentArgs {
    /// File values (if any) overlaid with the flags that were given.
    pub fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.model {
            c.model = Some(v.clone());
        }
        if let Some(v) = &self.criterion {
            c.criterion = config::parse_criterion("criterion", v)?;
        }
        if let Some(v) = &self.threshold {
            c.threshold = Some(v.clone());
        }
        if let Some(v) = &self.threshold_range {
            if v.len() != 2 {
                return Err(ConfigError::TypeMismatch {
                    key: "threshold_range".into(),
                    expected: "a pair lo,hi".into(),
                });
            }
            c.threshold_range = Some((v[0], v[1]));
        }
        if let Some(v) = &self.schedule {
            c.schedule = Some(v.clone());
        }
        if let Some(v) = self.n {
            c.n = v;
        }
        if let Some(v) = &self.n_list {
            c.n_list = v.clone();
        }
        if let Some(v) = self.replicates {
            c.replicates = v;
        }
        if let Some(v) = self.seed {
            c.seed = Some(v);
        }
        if let Some(v) = self.blocks {
            c.blocks = Some(v);
        }
        if let Some(v) = self.block {
            c.block = Some(v);
        }
        if let Some(v) = &self.epsilons {
            c.epsilons = v.clone();
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(v) = &self.resampler {
            c.resampler = config::parse_resampler("resampler", v)?;
        }
        if let Some(v) = self.enum_cap {
            c.enum_cap = v;
        }
        if let Some(v) = &self.f {
            c.f = Some(v.clone());
        }
        if let Some(v) = &self.m_list {
            c.m_list = v.clone();
        }
        if let Some(v) = self.sigma1_override {
            c.sigma1_override = Some(v);
        }
        Ok(c)
    }
}

/// Caps rayon's pool at `SMC_THREADS` when set. Results do not depend on it.
fn configure_threads() {
    if let Some(n) = std::env::var("SMC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
    {
        // A second call in the same process is a no-op.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    configure_threads();
    match commands::dispatch(&cli.command) {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::Fail) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(main_with_args(std::env::args_os()))
}
