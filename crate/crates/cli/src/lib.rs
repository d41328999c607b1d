//! Command-line front end: synthetic data generation, clustering runs,
//! evaluation and parameter sweeps.

pub mod error;
pub mod report;
pub mod sweep;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvsc_core::graph::write_edge_list;
use mvsc_core::io::{read_labels, write_labels};
use mvsc_core::metrics::score;
use mvsc_core::{
    fit, generate_synthetic, load_dataset, save_dataset, GammaMode, GammaSchedule,
    MultiViewDataset, SolverConfig, SyntheticSpec, Variant,
};

pub use error::{CliError, CliResult};
pub use report::{Fingerprint, ResultSummary, RunReport};

#[derive(Debug, Parser)]
#[command(name = "mvsc", version, about = "Multi-view subspace clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic multi-view Gaussian mixture.
    Generate(GenerateArgs),
    /// Cluster a dataset and write a JSON report, labels and graph edges.
    Cluster(ClusterArgs),
    /// Score predicted labels against ground truth.
    Eval(EvalArgs),
    /// Run a grid over alpha and lambda and write a CSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub views: usize,
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    /// Noise variance factor for corrupted columns.
    #[arg(long, default_value_t = 0.3)]
    pub noise_scale: f64,
    /// Fraction of columns per view to corrupt.
    #[arg(long, default_value_t = 0.0)]
    pub corrupt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Mscam,
    Mscan,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Mscam => Variant::Mscam,
            VariantArg::Mscan => Variant::Mscan,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GammaModeArg {
    PerRow,
    Averaged,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GammaScheduleArg {
    Frozen,
    EveryIteration,
}

/// Solver flags shared by `cluster` and `sweep`.
#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value = "mscam")]
    pub variant: VariantArg,
    /// Number of clusters; defaults to the number of distinct ground-truth labels.
    #[arg(long)]
    pub c: Option<usize>,
    /// Neighbours per graph row.
    #[arg(long, default_value_t = 9)]
    pub k: usize,
    #[arg(long, default_value_t = 30)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub outer_tol: f64,
    /// Keep lambda fixed instead of adapting it to the component count.
    #[arg(long)]
    pub no_lambda_adapt: bool,
    #[arg(long, value_enum, default_value = "per-row")]
    pub gamma_mode: GammaModeArg,
    #[arg(long, value_enum, default_value = "frozen")]
    pub gamma_schedule: GammaScheduleArg,
    /// Restart every inner solve from scratch.
    #[arg(long)]
    pub no_warm_start: bool,
    #[arg(long, default_value_t = 300)]
    pub admm_max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub admm_eps: f64,
}

impl SolverArgs {
    pub fn config(&self, data: &MultiViewDataset, alpha: f64, lambda: f64, seed: u64) -> CliResult<SolverConfig> {
        let c = match (self.c, data.labels()) {
            (Some(c), _) => c,
            (None, Some(labels)) => {
                let mut distinct = labels.to_vec();
                distinct.sort_unstable();
                distinct.dedup();
                distinct.len()
            }
            (None, None) => return Err(CliError::Usage("--c is required for unlabelled data".into())),
        };
        let mut config = SolverConfig {
            alpha,
            lambda,
            c,
            k: self.k,
            variant: self.variant.into(),
            outer_max_iters: self.max_outer,
            outer_tol: self.outer_tol,
            lambda_adapt: !self.no_lambda_adapt,
            gamma_mode: match self.gamma_mode {
                GammaModeArg::PerRow => GammaMode::PerRow,
                GammaModeArg::Averaged => GammaMode::Averaged,
            },
            gamma_schedule: match self.gamma_schedule {
                GammaScheduleArg::Frozen => GammaSchedule::Frozen,
                GammaScheduleArg::EveryIteration => GammaSchedule::EveryIteration,
            },
            warm_start: !self.no_warm_start,
            seed,
            ..SolverConfig::default()
        };
        config.admm.max_iters = self.admm_max_iters;
        config.admm.eps = self.admm_eps;
        config.validate(data.n())?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    pub manifest: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
    /// Defaults to `<report stem>.labels.csv` next to the report.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    /// Defaults to `<report stem>.edges.csv` next to the report.
    #[arg(long)]
    pub edges_out: Option<PathBuf>,
    /// Record wall-clock phase timings in the report.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub pred: PathBuf,
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub manifest: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated alpha values.
    #[arg(long, value_delimiter = ',', conflicts_with = "alpha_log")]
    pub alphas: Option<Vec<f64>>,
    /// Log-spaced alpha grid `START:STOP:COUNT` in powers of ten.
    #[arg(long, default_value = "-3:3:7", allow_hyphen_values = true)]
    pub alpha_log: String,
    /// Comma-separated lambda values.
    #[arg(long, value_delimiter = ',', conflicts_with = "lambda_log")]
    pub lambdas: Option<Vec<f64>>,
    /// Log-spaced lambda grid `START:STOP:COUNT` in powers of ten.
    #[arg(long, default_value = "-3:3:7", allow_hyphen_values = true)]
    pub lambda_log: String,
    /// Seeds run at every grid point; scores are averaged over them.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse, run and map the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(args) => cmd_generate(&args).map(|_| ()),
        Command::Cluster(args) => with_pool(|| cmd_cluster(&args)).map(|_| ()),
        Command::Eval(args) => {
            let scores = cmd_eval(&args)?;
            println!("{}", serde_json::to_string(&scores).expect("scores serialise"));
            Ok(())
        }
        Command::Sweep(args) => with_pool(|| sweep::cmd_sweep(&args)),
    }
}

/// Run `f` on a rayon pool capped by `MVSC_THREADS` when it is set.
pub fn with_pool<T: Send>(f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    let threads = match std::env::var("MVSC_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| CliError::Usage(format!("MVSC_THREADS = {v:?} is not a positive integer")))?,
        Err(_) => return f(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?;
    pool.install(f)
}

pub fn cmd_generate(args: &GenerateArgs) -> CliResult<PathBuf> {
    let spec = SyntheticSpec {
        n: args.n,
        views: args.views,
        clusters: args.clusters,
        dim: args.dim,
        mean_separation: args.separation,
        noise_sigma_scale: args.noise_scale,
        corruption_fraction: args.corrupt,
        seed: args.seed,
    };
    let data = generate_synthetic(&spec)?;
    let manifest = save_dataset(&data, &args.out)?;
    log::info!("wrote {}", manifest.display());
    Ok(manifest)
}

fn sibling(report: &Path, suffix: &str) -> PathBuf {
    let stem = report
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    report.with_file_name(format!("{stem}.{suffix}"))
}

fn create_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
        }
        _ => Ok(()),
    }
}

/// Every output is written only after the fit has succeeded.
pub fn cmd_cluster(args: &ClusterArgs) -> CliResult<RunReport> {
    let data = load_dataset(&args.manifest)?;
    let config = args.solver.config(&data, args.alpha, args.lambda, args.seed)?;
    let result = fit(&data, &config)?;
    let t = &result.timings;
    log::info!(
        "timings (s): setup {:.3}, subspace {:.3}, graph {:.3}, labels {:.3}",
        t.setup,
        t.subspace,
        t.graph,
        t.labels
    );
    for w in &result.warnings {
        log::warn!("{w}");
    }
    let report = RunReport::new(&config, &data, &result, args.timings);

    let labels_out = args.labels_out.clone().unwrap_or_else(|| sibling(&args.out, "labels.csv"));
    let edges_out = args.edges_out.clone().unwrap_or_else(|| sibling(&args.out, "edges.csv"));
    for p in [&args.out, &labels_out, &edges_out] {
        create_parent(p)?;
    }
    write_labels(&labels_out, &result.labels)?;
    write_edge_list(&result.graph, &edges_out, config.edge_eps)?;
    fs::write(&args.out, report.to_json()).map_err(|e| CliError::io(&args.out, e))?;
    Ok(report)
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<mvsc_core::Scores> {
    let pred = read_labels(&args.pred)?;
    let truth = read_labels(&args.truth)?;
    Ok(score(&pred, &truth)?)
}
