mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fracmort::hurst::HurstMethod;
use fracmort::mortality::{Sex, DEFAULT_COVERAGE, DEFAULT_N_PATHS};
use serde::Serialize;

use commands::CliError;

/// Seed used when neither `--seed` nor `FRACMORT_SEED` is given.
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "fracmort",
    version,
    about = "Fractional Ornstein-Uhlenbeck mortality model"
)]
pub struct Cli {
    /// Seed for every random draw. Falls back to FRACMORT_SEED, then to 1.
    #[arg(long, global = true, env = "FRACMORT_SEED")]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Sample fractional Gaussian noise, or an fOU path when --lambda and --sigma are set.
    GenFgn(GenFgnArgs),
    /// Estimate the Hurst exponent of a CSV column.
    EstHurst(EstHurstArgs),
    /// Quadratic-variation estimates of (H, sigma, lambda) from a CSV column.
    EstQgv(EstQgvArgs),
    /// Fit the mortality model to one cohort and write it as JSON.
    Fit(FitArgs),
    /// Monte Carlo hazard forecast with a confidence band, as CSV.
    Forecast(ForecastArgs),
    /// Monte Carlo survival probabilities, as CSV.
    Survival(SurvivalArgs),
    /// Write the bundled synthetic table, or regenerate it with another seed.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenFgnArgs {
    #[arg(long)]
    pub hurst: f64,
    /// Number of increments.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub mesh: f64,
    #[arg(long, requires = "sigma")]
    pub lambda: Option<f64>,
    #[arg(long, requires = "lambda")]
    pub sigma: Option<f64>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Rs,
    Rescaled,
    Whittle,
}

impl From<MethodArg> for HurstMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Rs => HurstMethod::RsAnalysis,
            MethodArg::Rescaled => HurstMethod::RescaledRange,
            MethodArg::Whittle => HurstMethod::LocalWhittle,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ColumnInput {
    /// CSV file with a header row.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Column name; defaults to the last column. Empty cells are skipped.
    #[arg(long)]
    pub column: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct EstHurstArgs {
    #[command(flatten)]
    pub input: ColumnInput,
    #[arg(long, value_enum, default_value_t = MethodArg::Rescaled)]
    pub method: MethodArg,
    /// Whittle bandwidth m; defaults to floor(N^0.65).
    #[arg(long)]
    pub bandwidth: Option<usize>,
    /// Run all three estimators over sliding windows and write a CSV table.
    #[arg(long)]
    pub compare_hurst: bool,
    #[arg(long, default_value_t = 256)]
    pub window: usize,
    #[arg(long, default_value_t = 64)]
    pub step: usize,
    /// Also write the regression points as CSV.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EstQgvArgs {
    #[command(flatten)]
    pub input: ColumnInput,
    #[arg(long, default_value_t = 1.0)]
    pub mesh: f64,
    /// classical-k2 or daubechies4 (classical-kK for other K).
    #[arg(long, default_value = "classical-k2")]
    pub filter: String,
    /// Estimate lambda even when h_hat is outside (0.5, 0.75).
    #[arg(long)]
    pub force_lambda: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CohortArgs {
    /// HMD Mx_1x1 table; defaults to the bundled synthetic table.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub age: u32,
    /// F, M or T.
    #[arg(long, default_value = "F", value_parser = parse_sex)]
    pub sex: Sex,
    /// Fit window as START:END.
    #[arg(long, default_value = "1950:2004", value_parser = parse_years)]
    pub years: (i32, i32),
    #[arg(long, value_enum, default_value_t = MethodArg::Rescaled)]
    pub method: MethodArg,
    #[arg(long, default_value = "classical-k2")]
    pub filter: String,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelSource {
    /// Model JSON written by `fit`; otherwise the cohort flags are fitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub cohort: CohortArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Years to simulate from the start of the fit window; defaults to the window length.
    #[arg(long)]
    pub n_years: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_N_PATHS)]
    pub n_paths: usize,
    #[arg(long, default_value_t = DEFAULT_COVERAGE)]
    pub coverage: f64,
    /// Use empirical quantiles instead of mean +/- 2 sd.
    #[arg(long)]
    pub quantile_band: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SurvivalArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Start of the interval, in years since the start of the fit window.
    #[arg(long, default_value_t = 0.0)]
    pub t: f64,
    /// One or more interval ends, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub horizon: Vec<f64>,
    /// Residual value to restart from at t; defaults to the fitted residual
    /// when t is a year inside the fit window, otherwise 0.
    #[arg(long)]
    pub start: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_N_PATHS)]
    pub n_paths: usize,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableFormat {
    Hmd,
    Csv,
    Json,
}

#[derive(Debug, Args, Serialize)]
pub struct FixtureArgs {
    #[arg(long, value_enum, default_value_t = TableFormat::Hmd)]
    pub format: TableFormat,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn parse_sex(s: &str) -> Result<Sex, String> {
    s.parse()
        .map_err(|e: fracmort::error::MortalityError| e.to_string())
}

fn parse_years(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected START:END, got {s:?}"))?;
    let a: i32 = a
        .trim()
        .parse()
        .map_err(|_| format!("bad start year {a:?}"))?;
    let b: i32 = b
        .trim()
        .parse()
        .map_err(|_| format!("bad end year {b:?}"))?;
    if b < a {
        return Err(format!("end year {b} precedes start year {a}"));
    }
    Ok((a, b))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().trim_end().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::FAILURE
        }
    }
}
