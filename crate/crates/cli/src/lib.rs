//! Library side of the `apc` command-line tool.
//!
//! [`main_with_args`] is what the binary calls; the subcommand functions are
//! public so tests can drive them without spawning a process.

pub mod config;
pub mod sweep;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use apc_core::awc::{nearest_assign, write_trace_csv, IterationRecord};
use apc_core::baselines::hamming_assign_codebook;
use apc_core::costmodel::CostSummary;
use apc_core::ingest::{self, DatasetManifest, SublayerLabel, SyntheticSpec};
use apc_core::metrics::build_report;
use apc_core::{
    cluster_awc, cluster_bmf, cluster_brb_kmeans, ApcError, Assignment, BaselineConfig,
    BinarySupportMatrix, CentroidSet, ClusteringConfig, CostModelParams, MetricsReport,
    PatternMatrix,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use sweep::{run_sweep, SweepPlan, SweepSummary, SWEEP_COLUMNS};

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "APC_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ApcError),
    #[error("{0}")]
    Usage(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{failed} of {rows} sweep cells failed")]
    CellsFailed { failed: usize, rows: usize },
}

impl CliError {
    /// 2 for usage and validation problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_validation() => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    /// Activation-aware clustering with balanced assignment.
    #[value(alias = "apc")]
    Awc,
    /// Alternating Hamming assignment and majority-vote centroids.
    Bmf,
    /// Real-valued k-means on 0/1 data, binarized at the end.
    Brbk,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Awc, Algorithm::Bmf, Algorithm::Brbk];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Awc => "awc",
            Algorithm::Bmf => "bmf",
            Algorithm::Brbk => "brbk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalDistance {
    /// Fraction of a row's active neurons the centroid misses.
    Overlap,
    Hamming,
}

#[derive(Debug, Parser)]
#[command(
    name = "apc",
    version,
    about = "Cluster sparse neuron-activation patterns"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// File of `key = value` lines applied before the command-line flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses all cores. APC_THREADS takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a planted-prototype dataset.
    Generate(GenerateArgs),
    /// Train a codebook on a pattern matrix.
    Cluster(ClusterArgs),
    /// Score a codebook with unconstrained nearest-centroid assignment.
    Eval(EvalArgs),
    /// Run a grid of algorithms, k values, densities and seeds.
    Sweep(SweepArgs),
    /// Run every algorithm at one k and density.
    Compare(CompareArgs),
    /// Print the neuron-level versus cluster-level prediction cost.
    Cost(CostArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 32)]
    pub n_prototypes: usize,
    #[arg(long, default_value_t = 512)]
    pub dim: usize,
    #[arg(long, default_value_t = 10_000)]
    pub rows: usize,
    /// Comma-separated densities, cycled over the prototypes.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub proto_density: Vec<f64>,
    #[arg(long, default_value_t = 0.02)]
    pub flip_noise: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "synthetic")]
    pub prefix: String,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// APCF, APCB or text matrix.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Algorithm::Awc)]
    pub algorithm: Algorithm,
    #[arg(long)]
    pub k: usize,
    /// Centroid density for awc; ignored by the baselines.
    #[arg(long, default_value_t = 0.5)]
    pub density: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    /// Rows per cluster for awc; defaults to ceil(N / k).
    #[arg(long)]
    pub capacity: Option<usize>,
    /// Codebook output (APCC).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON report output; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-iteration CSV trace (awc only).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub sublayer: Option<SublayerArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SublayerArg {
    Gate,
    Up,
    Down,
    Synthetic,
}

impl SublayerArg {
    fn label(self) -> SublayerLabel {
        match self {
            SublayerArg::Gate => SublayerLabel::Gate,
            SublayerArg::Up => SublayerLabel::Up,
            SublayerArg::Down => SublayerLabel::Down,
            SublayerArg::Synthetic => SublayerLabel::Synthetic,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SublayerArg::Gate => "gate",
            SublayerArg::Up => "up",
            SublayerArg::Down => "down",
            SublayerArg::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub codebook: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalDistance::Overlap)]
    pub distance: EvalDistance,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "awc,bmf,brbk"
    )]
    pub algorithms: Vec<Algorithm>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub density: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for one codebook per cell.
    #[arg(long)]
    pub codebook_dir: Option<PathBuf>,
    /// Leave the wall_ms column empty.
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0.5)]
    pub density: f64,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub codebook_dir: Option<PathBuf>,
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long, default_value_t = 7e9)]
    pub total_params: f64,
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub ffn_fraction: f64,
    #[arg(long, default_value_t = 32)]
    pub layers: u64,
    #[arg(long, default_value_t = 2048)]
    pub tokens: u64,
    #[arg(long, default_value_t = 1.0)]
    pub per_neuron_cost: f64,
    #[arg(long, default_value_t = 2048)]
    pub clusters_per_sublayer: u64,
    #[arg(long, default_value_t = 3)]
    pub sublayers: u64,
}

/// Algorithm inputs shared by `cluster` and `sweep`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub k: usize,
    /// Required by awc, ignored by the baselines.
    pub density: Option<f64>,
    pub seed: u64,
    pub max_iters: usize,
    pub capacity: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub codebook: CentroidSet,
    pub assignment: Assignment,
    pub report: MetricsReport,
    pub iterations: usize,
    pub trace: Option<Vec<IterationRecord>>,
}

pub fn run_algorithm(
    data: &PatternMatrix,
    binary: &BinarySupportMatrix,
    algorithm: Algorithm,
    settings: &RunSettings,
) -> Result<RunOutcome, CliError> {
    match algorithm {
        Algorithm::Awc => {
            let p = settings
                .density
                .ok_or_else(|| CliError::Usage("awc needs a density".into()))?;
            let mut cfg = ClusteringConfig::new(settings.k, p)
                .with_seed(settings.seed)
                .with_max_iters(settings.max_iters);
            if let Some(c) = settings.capacity {
                cfg = cfg.with_capacity(c);
            }
            let out = cluster_awc(data, &cfg)?;
            Ok(RunOutcome {
                codebook: out.codebook,
                assignment: out.assignment,
                report: out.report,
                iterations: out.trace.len(),
                trace: Some(out.trace),
            })
        }
        Algorithm::Bmf | Algorithm::Brbk => {
            let cfg = BaselineConfig::new(settings.k)
                .with_seed(settings.seed)
                .with_max_iters(settings.max_iters);
            let out = if algorithm == Algorithm::Bmf {
                cluster_bmf(binary, &cfg)?
            } else {
                cluster_brb_kmeans(binary, &cfg)?
            };
            Ok(RunOutcome {
                codebook: out.codebook,
                assignment: out.assignment,
                report: out.report,
                iterations: out.iterations,
                trace: None,
            })
        }
    }
}

fn write_or_print(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn cmd_generate(args: &GenerateArgs, stdout: &mut dyn Write) -> Result<Vec<PathBuf>, CliError> {
    let spec = SyntheticSpec {
        n_prototypes: args.n_prototypes,
        dim: args.dim,
        n_rows: args.rows,
        proto_densities: args.proto_density.clone(),
        flip_noise: args.flip_noise,
        seed: args.seed,
    };
    let data = ingest::generate_synthetic(&spec)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let matrix_path = args.out_dir.join(format!("{}.apcf", args.prefix));
    let planted_path = args.out_dir.join(format!("{}.planted.apcc", args.prefix));
    let manifest_path = args.out_dir.join(format!("{}.manifest.json", args.prefix));
    ingest::save_real_matrix(&data.matrix, &matrix_path)?;
    ingest::save_codebook(&data.prototypes, &planted_path)?;
    let densities: Vec<String> = args.proto_density.iter().map(f64::to_string).collect();
    DatasetManifest {
        sublayer_label: SublayerLabel::Synthetic,
        dim: args.dim,
        n_rows: args.rows,
        source: format!(
            "planted prototypes={} density={} flip_noise={} seed={}",
            args.n_prototypes,
            densities.join(","),
            args.flip_noise,
            args.seed
        ),
        format_version: ingest::format::FORMAT_VERSION,
    }
    .save(&manifest_path)?;
    let paths = vec![matrix_path, planted_path, manifest_path];
    for p in &paths {
        writeln!(stdout, "{}", p.display())?;
    }
    Ok(paths)
}

pub fn cmd_cluster(args: &ClusterArgs, stdout: &mut dyn Write) -> Result<MetricsReport, CliError> {
    let data = ingest::load_patterns(&args.input)?;
    if let Some(label) = args.sublayer.map(SublayerArg::label) {
        if let Some(expected) = label.expected_dim().filter(|&d| d != data.n_cols()) {
            return Err(ApcError::DimensionMismatch {
                expected,
                actual: data.n_cols(),
            }
            .into());
        }
    }
    if args.trace.is_some() && args.algorithm != Algorithm::Awc {
        return Err(CliError::Usage("--trace is only available for awc".into()));
    }
    let settings = RunSettings {
        k: args.k,
        density: Some(args.density),
        seed: args.seed,
        max_iters: args.max_iters,
        capacity: args.capacity,
    };
    let run = run_algorithm(&data, &data.to_binary(), args.algorithm, &settings)?;
    let mut report = run.report;
    if let Some(s) = args.sublayer {
        report = report.with_sublayer(s.name());
    }
    if let Some(out) = &args.out {
        ingest::save_codebook(&run.codebook, out)?;
    }
    if let (Some(path), Some(trace)) = (&args.trace, &run.trace) {
        write_trace_csv(trace, std::io::BufWriter::new(std::fs::File::create(path)?))?;
    }
    let mut json = report.to_json()?;
    json.push('\n');
    write_or_print(args.report.as_deref(), &json, stdout)?;
    Ok(report)
}

pub fn cmd_eval(args: &EvalArgs, stdout: &mut dyn Write) -> Result<MetricsReport, CliError> {
    let data = ingest::load_patterns(&args.input)?;
    let codebook = ingest::load_codebook(&args.codebook)?;
    let assignment = match args.distance {
        EvalDistance::Overlap => nearest_assign(&data, &codebook)?,
        EvalDistance::Hamming => hamming_assign_codebook(&data.to_binary(), &codebook)?,
    };
    let report = build_report(&data, &codebook, &assignment)?;
    let mut json = report.to_json()?;
    json.push('\n');
    write_or_print(args.report.as_deref(), &json, stdout)?;
    Ok(report)
}

fn sweep_to(
    input: &Path,
    plan: &SweepPlan,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<SweepSummary, CliError> {
    let data = ingest::load_patterns(input)?;
    let summary = match out {
        Some(path) => {
            let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
            let s = run_sweep(&data, plan, &mut file)?;
            file.flush()?;
            s
        }
        None => run_sweep(&data, plan, stdout)?,
    };
    if summary.failed > 0 {
        return Err(CliError::CellsFailed {
            failed: summary.failed,
            rows: summary.rows,
        });
    }
    Ok(summary)
}

pub fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<SweepSummary, CliError> {
    let plan = SweepPlan {
        algorithms: args.algorithms.clone(),
        k_values: args.k.clone(),
        density_values: args.density.clone(),
        seeds: args.seeds.clone(),
        max_iters: args.max_iters,
        codebook_dir: args.codebook_dir.clone(),
        omit_timing: args.omit_timing,
    };
    sweep_to(&args.input, &plan, args.out.as_deref(), stdout)
}

pub fn cmd_compare(args: &CompareArgs, stdout: &mut dyn Write) -> Result<SweepSummary, CliError> {
    let plan = SweepPlan {
        algorithms: Algorithm::ALL.to_vec(),
        k_values: vec![args.k],
        density_values: vec![args.density],
        seeds: args.seeds.clone(),
        max_iters: args.max_iters,
        codebook_dir: args.codebook_dir.clone(),
        omit_timing: args.omit_timing,
    };
    sweep_to(&args.input, &plan, args.out.as_deref(), stdout)
}

pub fn cmd_cost(args: &CostArgs, stdout: &mut dyn Write) -> Result<CostSummary, CliError> {
    let params = CostModelParams {
        total_params: args.total_params,
        ffn_fraction: args.ffn_fraction,
        layers: args.layers,
        tokens: args.tokens,
        per_neuron_cost: args.per_neuron_cost,
        clusters_per_sublayer: args.clusters_per_sublayer,
        sublayers: args.sublayers,
    };
    let summary = params.summary()?;
    writeln!(stdout, "{}", serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Thread count after applying the environment override.
pub fn resolve_threads(flag: usize, env: Option<&str>) -> Result<usize, CliError> {
    match env.map(str::trim).filter(|s| !s.is_empty()) {
        Some(v) => v.parse().map_err(|_| {
            CliError::Usage(format!(
                "{THREADS_ENV} must be a non-negative integer, got {v:?}"
            ))
        }),
        None => Ok(flag),
    }
}

/// Runs a parsed command inside a pool of the requested size.
pub fn run(cli: &Cli, stdout: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let env = std::env::var(THREADS_ENV).ok();
    let threads = resolve_threads(cli.threads, env.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Generate(a) => cmd_generate(a, stdout).map(drop),
        Command::Cluster(a) => cmd_cluster(a, stdout).map(drop),
        Command::Eval(a) => cmd_eval(a, stdout).map(drop),
        Command::Sweep(a) => cmd_sweep(a, stdout).map(drop),
        Command::Compare(a) => cmd_compare(a, stdout).map(drop),
        Command::Cost(a) => cmd_cost(a, stdout).map(drop),
    })
}

/// Parses `args` (program name first), applying any `--config` file.
pub fn parse_args(args: Vec<OsString>) -> Result<Result<Cli, clap::Error>, CliError> {
    let args = config::expand_config(args)?;
    Ok(Cli::try_parse_from(args))
}

/// Full entry point; returns the process exit code.
pub fn main_with_args(args: Vec<OsString>) -> i32 {
    let cli = match parse_args(args) {
        Ok(Ok(cli)) => cli,
        Ok(Err(e)) => {
            let _ = e.print();
            return e.exit_code();
        }
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match run(&cli, &mut std::io::stdout()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
