//! `hmsf`: multi-seed experiment harness for GCN, H2GCN, CPF and the
//! degree/homophily model selector.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hmsf_core::{Activation, ModelKind, SplitScheme};

#[derive(Parser, Debug)]
#[command(
    name = "hmsf",
    version,
    about = "Node classification experiments with GCN, H2GCN, CPF and model selection"
)]
struct Cli {
    /// Worker threads for seed-level fan-out (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print size, average degree and edge homophily of datasets.
    Indicators(IndicatorsArgs),
    /// Train a supervised model over several seeds.
    Train(TrainArgs),
    /// Distill teacher checkpoints into CPF students.
    Distill(DistillArgs),
    /// Run the selector pipeline: pick a teacher by degree, then decide on distillation.
    Select(SelectArgs),
    /// Hop-aggregate feature variance or per-node CPF mixing weights.
    Analyze(AnalyzeArgs),
    /// Write split files into a dataset directory.
    Split(SplitArgs),
    /// Generate a synthetic labeled graph in the dataset directory format.
    Synth(SynthArgs),
    /// Sweep the selector thresholds over several datasets.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Dataset directory, or a name resolved under $HMSF_DATA_ROOT.
    #[arg(long)]
    data: String,

    #[arg(long, env = "HMSF_DATA_ROOT", hide_env_values = true)]
    data_root: Option<PathBuf>,

    /// Row-normalize features before training.
    #[arg(long)]
    row_normalize: bool,
}

#[derive(Args, Debug, Clone)]
struct SeedArgs {
    #[arg(long, value_enum, default_value = "h2gcn")]
    scheme: SchemeArg,

    /// Seeds as `a..b` (inclusive), a single number, or a comma list.
    #[arg(long, default_value = "0..9", value_parser = parse_seeds)]
    seeds: Seeds,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    H2gcn,
    Gcn,
}

impl From<SchemeArg> for SplitScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::H2gcn => SplitScheme::H2gcn,
            SchemeArg::Gcn => SplitScheme::Gcn,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Gcn,
    H2gcn,
    Mlp,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Gcn => ModelKind::Gcn,
            ModelArg::H2gcn => ModelKind::H2gcn,
            ModelArg::Mlp => ModelKind::Mlp,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ActivationArg {
    Relu,
    None,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::None => Activation::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let num = |x: &str| {
        x.trim()
            .parse::<u64>()
            .map_err(|e| format!("bad seed {x:?}: {e}"))
    };
    let seeds = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if b < a {
            return Err(format!("empty seed range {s}"));
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if seeds.is_empty() {
        return Err("no seeds".into());
    }
    Ok(Seeds(seeds))
}

/// Supervised grid and training overrides. Lists are comma separated.
#[derive(Args, Debug, Clone, Default)]
struct GnnGridArgs {
    #[arg(long, value_delimiter = ',')]
    dropout: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    weight_decay: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',')]
    activation: Vec<ActivationArg>,
    /// Neighborhood rounds for H2GCN.
    #[arg(long, value_delimiter = ',')]
    hops: Vec<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

/// Student grid and training overrides. Lists are comma separated.
#[derive(Args, Debug, Clone, Default)]
struct CpfGridArgs {
    #[arg(
        id = "cpf_dropout",
        long = "cpf-dropout",
        value_name = "CPF_DROPOUT",
        value_delimiter = ','
    )]
    mlp_dropout: Vec<f64>,
    #[arg(
        id = "cpf_lr",
        long = "cpf-lr",
        value_name = "CPF_LR",
        value_delimiter = ','
    )]
    lr: Vec<f64>,
    #[arg(
        id = "cpf_weight_decay",
        long = "cpf-weight-decay",
        value_name = "CPF_WEIGHT_DECAY",
        value_delimiter = ','
    )]
    weight_decay: Vec<f64>,
    /// Propagation rounds per forward pass.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    plp_dropout: Option<f64>,
    #[arg(
        id = "cpf_max_epochs",
        long = "cpf-max-epochs",
        value_name = "CPF_MAX_EPOCHS"
    )]
    max_epochs: Option<usize>,
    #[arg(
        id = "cpf_patience",
        long = "cpf-patience",
        value_name = "CPF_PATIENCE"
    )]
    patience: Option<usize>,
}

#[derive(Args, Debug)]
struct IndicatorsArgs {
    /// Dataset directories or names under $HMSF_DATA_ROOT.
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<String>,
    #[arg(long, env = "HMSF_DATA_ROOT", hide_env_values = true)]
    data_root: Option<PathBuf>,
    /// Supervised checkpoint whose predictions give the estimated homophily.
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    model: ModelArg,
    #[command(flatten)]
    seeds: SeedArgs,
    #[command(flatten)]
    grid: GnnGridArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DistillArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Teacher checkpoint file, or a directory of them (one per seed).
    #[arg(long)]
    teacher: PathBuf,
    #[command(flatten)]
    grid: CpfGridArgs,
    /// Disable the propagation branch; the student reduces to a distilled MLP.
    #[arg(long)]
    force_alpha_zero: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = hmsf_core::hmsf::DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = hmsf_core::hmsf::DEFAULT_GAMMA)]
    gamma: f64,
    #[command(flatten)]
    seeds: SeedArgs,
    /// Also train the four fixed strategies and report them next to the selector.
    #[arg(long)]
    all_strategies: bool,
    #[command(flatten)]
    grid: GnnGridArgs,
    #[command(flatten)]
    cpf: CpfGridArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(value_enum)]
    kind: AnalysisKind,
    #[command(flatten)]
    data: DataArgs,
    /// Student checkpoint (required for `alpha`).
    #[arg(long)]
    cpf: Option<PathBuf>,
    /// Variance threshold for the per-hop share column.
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AnalysisKind {
    Variance,
    Alpha,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    seeds: SeedArgs,
    /// Replace split files that already exist.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "synthetic")]
    name: String,
    #[arg(long, default_value_t = 300)]
    nodes: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 4.0)]
    degree: f64,
    /// Target edge homophily.
    #[arg(long, default_value_t = 0.8)]
    homophily: f64,
    #[arg(long, default_value_t = 60)]
    features: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mark the graph as small (5/50/100 fixed splits).
    #[arg(long)]
    small: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<String>,
    #[arg(long, env = "HMSF_DATA_ROOT", hide_env_values = true)]
    data_root: Option<PathBuf>,
    #[arg(long)]
    row_normalize: bool,
    #[command(flatten)]
    seeds: SeedArgs,
    #[arg(long, value_delimiter = ',', default_values_t = hmsf_core::hmsf::BETA_SWEEP)]
    betas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = hmsf_core::hmsf::GAMMA_SWEEP)]
    gammas: Vec<f64>,
    #[command(flatten)]
    grid: GnnGridArgs,
    #[command(flatten)]
    cpf: CpfGridArgs,
    #[arg(long)]
    out: PathBuf,
}

/// Resolves `--data`: an existing directory wins, otherwise the name is
/// looked up under the data root.
fn resolve_data(data: &str, root: Option<&PathBuf>) -> Result<PathBuf> {
    let direct = PathBuf::from(data);
    if direct.is_dir() {
        return Ok(direct);
    }
    match root {
        Some(root) if root.join(data).is_dir() => Ok(root.join(data)),
        Some(root) => bail!(
            "dataset {data:?} not found (also tried {})",
            root.join(data).display()
        ),
        None => bail!("dataset directory {data:?} not found and HMSF_DATA_ROOT is not set"),
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = cli.jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("setup: thread pool")?;
    pool.install(|| match cli.command {
        Command::Indicators(a) => commands::indicators(a),
        Command::Train(a) => commands::train(a),
        Command::Distill(a) => commands::distill(a),
        Command::Select(a) => commands::select(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Split(a) => commands::split(a),
        Command::Synth(a) => commands::synth(a),
        Command::Sweep(a) => commands::sweep(a),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hmsf: {e:#}");
            ExitCode::FAILURE
        }
    }
}
