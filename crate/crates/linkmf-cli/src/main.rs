//! `linkmf`: train, cross-validate and apply importance-weighted logistic
//! matrix factorization models for link prediction on symmetric graphs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linkmf::synth::SyntheticSpec;

/// An error in how the tool was invoked; exits with code 2 instead of 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "linkmf",
    version,
    about = "Link prediction on symmetric interaction data via weighted logistic matrix \
             factorization with neighborhood regularization"
)]
struct Cli {
    /// Cap the worker thread count (overrides LINKMF_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Options shared by train, cv and rank. Every option can also come from a
/// `key = value` config file; explicit flags win.
#[derive(Args, Debug)]
pub struct CommonOpts {
    /// Config file with key = value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Interaction triplet file: name_a name_b [confidence].
    #[arg(long)]
    interactions: Option<PathBuf>,
    /// Similarity triplet file for the first (alpha) regularization slot.
    #[arg(long)]
    sim_go: Option<PathBuf>,
    /// Similarity triplet file for the second (beta) regularization slot.
    #[arg(long)]
    sim_ppi: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Latent dimensionality [default: 50].
    #[arg(long)]
    d: Option<usize>,
    /// L2 regularization coefficient [default: 0.01].
    #[arg(long)]
    lambda: Option<f64>,
    /// Coefficient of the sim-go Laplacian [default: 1.0].
    #[arg(long)]
    alpha: Option<f64>,
    /// Coefficient of the sim-ppi Laplacian [default: 10].
    #[arg(long)]
    beta: Option<f64>,
    /// Learning rate [default: 0.03125].
    #[arg(long)]
    gamma: Option<f64>,
    /// Gradient iterations [default: 1000].
    #[arg(long)]
    max_iter: Option<usize>,
    /// Importance-weight family: uniform, linear or loglinear [default: uniform].
    #[arg(long)]
    weight_scheme: Option<String>,
    /// Importance-weight scale [default: 50].
    #[arg(long)]
    c: Option<f64>,
    /// Neighbors in the sim-go k-NN graph [default: 100].
    #[arg(long)]
    k1: Option<usize>,
    /// Neighbors in the sim-ppi k-NN graph [default: 100].
    #[arg(long)]
    k2: Option<usize>,
    /// Seed for initialization and fold assignment [default: 42].
    #[arg(long)]
    seed: Option<u64>,
    /// Cross-validation folds [default: 5].
    #[arg(long)]
    n_folds: Option<usize>,
    /// Rows per block in the dense-pair sweeps [default: 512].
    #[arg(long)]
    block_size: Option<usize>,
    /// Record the loss every N iterations in the training log [default: 10].
    #[arg(long)]
    log_every: Option<usize>,
    /// Stop early when ||grad||_F / ||U||_F drops below this tolerance
    /// (off unless given; bare `--early-stop` means 1e-6).
    #[arg(long, num_args = 0..=1, default_missing_value = "1e-6")]
    early_stop: Option<f64>,
    /// Area under the PR curve: ap (average precision) or trapezoid [default: ap].
    #[arg(long)]
    aupr_mode: Option<String>,
    /// Also write the k-NN adjacencies as triplet files into the output dir.
    #[arg(long)]
    dump_knn: bool,
    /// Also write per-fold ROC/PR curve points (cv only).
    #[arg(long)]
    dump_curves: bool,
}

#[derive(Args, Debug)]
struct RankOpts {
    #[command(flatten)]
    common: CommonOpts,
    /// Trained model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Number of top predictions to keep [default: 100].
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Args, Debug)]
struct SynthOpts {
    /// Output directory for the generated files.
    #[arg(long)]
    out: PathBuf,
    /// Entity count.
    #[arg(long, default_value_t = 200)]
    m: usize,
    /// Planted rank.
    #[arg(long, default_value_t = 5)]
    d_true: usize,
    /// Fraction of pairs labeled positive before noise.
    #[arg(long, default_value_t = 0.01)]
    positive_rate: f64,
    /// Label flip probability.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Perturbation of the derived similarities.
    #[arg(long, default_value_t = 0.0)]
    sim_noise: f64,
    /// Entries kept per row of the derived similarities.
    #[arg(long, default_value_t = 20)]
    sim_neighbors: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug)]
struct InspectOpts {
    /// Interaction triplet file.
    #[arg(long)]
    interactions: PathBuf,
    #[arg(long)]
    sim_go: Option<PathBuf>,
    #[arg(long)]
    sim_ppi: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on an interaction file and persist it.
    Train(CommonOpts),
    /// k-fold cross-validation with metrics over all candidate pairs.
    Cv(CommonOpts),
    /// Rank unobserved pairs by predicted probability with a trained model.
    Rank(RankOpts),
    /// Generate a planted synthetic dataset in the standard file formats.
    Synth(SynthOpts),
    /// Print entity and sparsity statistics of a dataset.
    Inspect(InspectOpts),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    config::configure_threads(cli.threads)?;
    match cli.command {
        Command::Train(common) => commands::cmd_train(&common.resolve()?),
        Command::Cv(common) => commands::cmd_cv(&common.resolve()?),
        Command::Rank(opts) => {
            let cfg = opts.common.resolve()?;
            let file_cfg = match &opts.common.config {
                Some(path) => config::FileConfig::load(path)?,
                None => config::FileConfig::default(),
            };
            let model = opts
                .model
                .or_else(|| file_cfg.get_path("model"))
                .ok_or_else(|| UsageError("missing required --model".into()))?;
            let top_k = opts.top_k.or(file_cfg.get("top_k")?).unwrap_or(100);
            commands::cmd_rank(&cfg, &model, top_k)
        }
        Command::Synth(opts) => {
            let spec = SyntheticSpec {
                m: opts.m,
                d_true: opts.d_true,
                positive_rate: opts.positive_rate,
                noise: opts.noise,
                sim_noise: opts.sim_noise,
                sim_neighbors: opts.sim_neighbors,
                seed: opts.seed,
            };
            commands::cmd_synth(&spec, &opts.out)
        }
        Command::Inspect(opts) => commands::cmd_inspect(
            &opts.interactions,
            opts.sim_go.as_deref(),
            opts.sim_ppi.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
