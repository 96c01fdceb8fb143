use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "voltail", version, about = "Stochastic-volatility return distributions: fit, simulate, tabulate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detrend, bin and fit a price series at one or more lags.
    Analyze(AnalyzeArgs),
    /// Monte Carlo paths of the coupled return/variance processes.
    Simulate(SimulateArgs),
    /// Tabulate an analytic return density on a uniform grid.
    Pdf(PdfArgs),
    /// Dump the detrended, normalized returns at one lag.
    Detrend(DetrendArgs),
    /// Bin the normalized returns at one lag.
    Hist(HistArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Price CSV: one close per row, or label,...,close.
    #[arg(long)]
    pub input: PathBuf,
    /// Skip malformed rows (reported) instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BinModelArg {
    Midpoint,
    BinAverage,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Lags to fit, e.g. `1,5,25` or `1..10`.
    #[arg(long, default_value = "1", value_parser = parse_lags)]
    pub lags: Lags,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Lags for the trend and width-vs-lag summary; clamped to the series length.
    #[arg(long, default_value = "1..500", value_parser = parse_lags)]
    pub trend_lags: Lags,
    /// Bin over [-clip, clip] instead of [min, max].
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long, value_enum, default_value_t = BinModelArg::BinAverage)]
    pub bin_model: BinModelArg,
    /// Output directory.
    #[arg(long, default_value = "voltail-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// heston | hull-white
    #[arg(long)]
    pub model: Option<String>,
    /// ito | zero-drift
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    /// Euler-Maruyama on the joint (x, v) system.
    Joint,
    /// Stationary variance draw, exact Gaussian return.
    Bo,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    /// Root seed; VOLTAIL_SEED takes precedence when set.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial variance: a number or `stationary`.
    #[arg(long)]
    pub v0: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<SimMode>,
    /// Also write a histogram of the terminal values with this many bins.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Compare joint dynamics with the stationary-volatility law at these lags.
    #[arg(long, value_delimiter = ',')]
    pub compare: Option<Vec<f64>>,
    #[arg(long, default_value = "voltail-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PdfForm {
    /// Quadrature of the variance mixture (any model and scheme).
    General,
    /// Bessel-K closed form (Heston only).
    Heston,
    /// Student-t closed form (Hull-White, zero drift).
    Tsallis,
}

#[derive(Debug, Clone, Args)]
pub struct PdfArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = PdfForm::General)]
    pub form: PdfForm,
    /// Tsallis shape; with --theta replaces the model parameters.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub lag: f64,
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    pub xmin: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub xmax: f64,
    #[arg(long, default_value_t = 2001)]
    pub points: usize,
    /// Output TSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DetrendArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 1)]
    pub lag: usize,
    /// Output TSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct HistArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 1)]
    pub lag: usize,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    #[arg(long)]
    pub clip: Option<f64>,
    /// Output TSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lags(pub Vec<usize>);

/// Comma-separated lags and inclusive ranges: `1,5,10..20`.
pub fn parse_lags(s: &str) -> Result<Lags, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a.trim().parse().map_err(|_| format!("bad lag range {part:?}"))?;
            let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| format!("bad lag range {part:?}"))?;
            if a == 0 || b < a {
                return Err(format!("bad lag range {part:?}"));
            }
            out.extend(a..=b);
        } else {
            let v: usize = part.parse().map_err(|_| format!("bad lag {part:?}"))?;
            if v == 0 {
                return Err("lags start at 1".into());
            }
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err("no lags given".into());
    }
    out.sort_unstable();
    out.dedup();
    Ok(Lags(out))
}
