use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stablepca::moments::HeaderMode;
use stablepca::variants::VariantKind;

#[derive(Debug, Parser)]
#[command(
    name = "stablepca",
    version,
    about = "Distributionally robust multi-source PCA",
    long_about = "Fits StablePCA and its variants on per-source CSV data, runs the dual \
                  eigenvalue route, and reproduces the simulation studies.\n\n\
                  ROBUST_MSPCA_THREADS caps the number of worker threads."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the relaxed problem with Mirror-Prox and round to a projector.
    Fit(FitArgs),
    /// Maximize the Ky Fan dual over source weights and check tightness.
    Dual(DualArgs),
    /// Run a simulation scenario and write metric tables.
    Simulate(SimulateArgs),
    /// Time Mirror-Prox iterations over a sweep of dimensions.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Stable,
    Squared,
    Fair,
}

impl From<VariantArg> for VariantKind {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Stable => VariantKind::Stable,
            VariantArg::Squared => VariantKind::Squared,
            VariantArg::Fair => VariantKind::Fair,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HeaderArg {
    Auto,
    Present,
    Absent,
}

impl From<HeaderArg> for HeaderMode {
    fn from(h: HeaderArg) -> Self {
        match h {
            HeaderArg::Auto => HeaderMode::Auto,
            HeaderArg::Present => HeaderMode::Present,
            HeaderArg::Absent => HeaderMode::Absent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// Two-feature Settings 1 to 3: leading direction per method.
    Settings,
    /// Factor model: recovery, capture, in-distribution and OOD worst-case EV.
    Factor,
    /// Certificate τ over a (d, n) grid, written as a d-by-n table.
    CertificateGrid,
    /// Objective gap and estimation error against population moments.
    Convergence,
}

/// Where the per-source data comes from.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Sample CSVs, one per source (directories expand to their *.csv files).
    /// With --source-column, a single CSV holding every source.
    #[arg(long, num_args = 1.., required_unless_present = "moments")]
    pub input: Vec<PathBuf>,

    /// Column of the single input CSV that names each row's source.
    #[arg(long, requires = "input")]
    pub source_column: Option<String>,

    /// Precomputed d-by-d second-moment CSVs, one per source.
    #[arg(long, num_args = 1.., conflicts_with_all = ["input", "center"])]
    pub moments: Vec<PathBuf>,

    /// Subtract each source's column means before forming moments.
    #[arg(long)]
    pub center: bool,

    /// Whether the CSVs start with a header row.
    #[arg(long, value_enum, default_value_t = HeaderArg::Auto)]
    pub header: HeaderArg,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Target subspace dimension.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,

    /// Mirror-Prox iterations.
    #[arg(long = "T", default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    pub iterations: u64,

    #[arg(long, value_enum, default_value_t = VariantArg::Stable)]
    pub variant: VariantArg,

    /// Multiplier on the default step sizes.
    #[arg(long, default_value_t = 1.0)]
    pub eta_scale: f64,

    /// Explicit step for the M update (needs --eta-omega).
    #[arg(long, requires = "eta_omega")]
    pub eta_m: Option<f64>,

    /// Explicit step for the weight update (needs --eta-m).
    #[arg(long, requires = "eta_m")]
    pub eta_omega: Option<f64>,

    /// Record the duality gap every this many iterations.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub gap_stride: Option<u64>,

    /// Stop early once the recorded gap falls below this.
    #[arg(long)]
    pub gap_tol: Option<f64>,

    /// Eigengap of M̂ below which the rounding is reported as not tight.
    #[arg(long)]
    pub tight_tol: Option<f64>,

    /// Report path; P̂ and M̂ go to <stem>.P.csv and <stem>.M.csv beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DualArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,

    /// Mirror-descent iterations.
    #[arg(long = "T", default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    pub iterations: u64,

    /// Constant step size instead of the default 2/(ρ√(t+1)) schedule.
    #[arg(long)]
    pub dual_eta: Option<f64>,

    /// Eigengap threshold for the tightness flag.
    #[arg(long)]
    pub gap_tol: Option<f64>,

    /// Record φ every this many iterations.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub gap_stride: Option<u64>,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,

    /// Metric CSV. For certificate-grid this is the d-by-n table and the long
    /// rows go to <stem>.rows.csv.
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long = "T", value_parser = clap::value_parser!(u64).range(1..))]
    pub iterations: Option<u64>,

    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,

    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: Option<u64>,

    /// Dimensions (certificate-grid, convergence) or the single d (factor).
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,

    /// Per-source sample sizes (certificate-grid, convergence) or the single n (factor).
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,

    /// Source counts (factor) or the single L (certificate-grid, convergence).
    #[arg(long, value_delimiter = ',')]
    pub sources: Option<Vec<usize>>,

    #[arg(long)]
    pub eta_scale: Option<f64>,

    /// Settings scenario: use the shared noise level in every source.
    #[arg(long)]
    pub homoscedastic: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "30,50,100,200")]
    pub dims: Vec<usize>,

    #[arg(long = "T", default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub iterations: u64,

    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub sources: u64,

    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,

    #[arg(long, default_value_t = 2024)]
    pub seed: u64,

    #[arg(long)]
    pub out: PathBuf,
}
