use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "momentgmm", version, about = "Spherical Gaussian mixtures from moment tensors")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output format written to --out or stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Worker threads (overrides MOMENTGMM_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a labelled sample from a mixture.
    Simulate(SimulateArgs),
    /// Initialise and run EM on a CSV dataset.
    Fit(FitArgs),
    /// Waring decomposition of a symmetric tensor given as JSON.
    Decompose(DecomposeArgs),
    /// Empirical moment forms of a CSV dataset.
    Moments(MomentsArgs),
    /// Project a CSV dataset on its leading principal directions.
    Pca(PcaArgs),
    /// Compare the initialisers on repeated simulations.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Mixture parameters as JSON.
    #[arg(long, conflicts_with = "example")]
    pub params: Option<PathBuf>,
    /// One of the built-in models (1: m=6, r=4; 2: m=5, r=3).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub example: Option<u8>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(short, long, default_value_t = 1000)]
    pub n: usize,
    /// Data CSV path (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Labels file, one 0-based label per line.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    /// Write a header row x1,...,xm.
    #[arg(long)]
    pub header: bool,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    pub data: PathBuf,
    /// Number of components.
    #[arg(short, long)]
    pub r: usize,
    #[arg(long, default_value = "moments")]
    pub init: momentgmm::gmm::Initializer,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// EM stops when the relative log-likelihood gain falls below this.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// True labels; adds ARI and errorRate to the report.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the fitted hard labels.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    /// Long-format scatterplot-matrix CSV (label,feature_x,feature_y,x,y).
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
    /// Report BIC as −2ℓ + ν log n instead of 2ℓ − ν log n.
    #[arg(long)]
    pub bic_lower_is_better: bool,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    pub tensor: PathBuf,
    /// Known rank (default: detected from the Hankel spectrum).
    #[arg(long)]
    pub rank: Option<usize>,
    /// Relative singular-value threshold for rank detection.
    #[arg(long, default_value_t = momentgmm::hankel::DEFAULT_RANK_TOLERANCE)]
    pub tol: f64,
    /// Hankel row degree.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub refine: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MomentsArgs {
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PcaArgs {
    pub data: PathBuf,
    /// Number of directions kept.
    #[arg(short, long)]
    pub q: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub header: bool,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    /// Experiment configuration as JSON; other model flags are then ignored.
    #[arg(long, conflicts_with_all = ["params", "example"])]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(short, long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// Outer repetitions; shares are averaged over them.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Comma-separated subset of kmeans,moments,emem,random.
    #[arg(long, value_delimiter = ',', default_value = "kmeans,moments,emem,random")]
    pub initializers: Vec<momentgmm::gmm::Initializer>,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// EM stops when the relative log-likelihood gain falls below this.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Output directory for summary.json, replicates.csv, summary.txt and
    /// timings.json. Without it the summary goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(t) = flag {
        return Ok(Some(t));
    }
    match std::env::var("MOMENTGMM_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| format!("MOMENTGMM_THREADS must be a positive integer, got {v:?}")),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match thread_count(cli.threads) {
        Ok(Some(0)) => {
            eprintln!("error: thread count must be positive");
            return ExitCode::from(1);
        }
        Ok(Some(t)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
        Ok(None) => {}
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a, cli.seed),
        Command::Fit(a) => commands::fit(a, cli.seed, cli.format),
        Command::Decompose(a) => commands::decompose(a, cli.seed, cli.format),
        Command::Moments(a) => commands::moments(a, cli.format),
        Command::Pca(a) => commands::pca(a),
        Command::Benchmark(a) => commands::benchmark(a, cli.seed, cli.format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
