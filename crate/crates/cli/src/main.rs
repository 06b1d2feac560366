//! `embedlens`: headless driver for the analysis pipeline. Results go to
//! standard output (or `--out`), logs to standard error.

mod commands;
mod config;
mod fail;
mod input;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::fail::Failure;

#[derive(Debug, Parser)]
#[command(name = "embedlens", version, about = "Explain graph embeddings through node metrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an embedding and write it in word2vec text format.
    Embed(EmbedArgs),
    /// Compute the node metric table as CSV.
    Metrics(MetricsArgs),
    /// Project metric signatures or an embedding to 2-D with t-SNE.
    Project(ProjectArgs),
    /// Cluster ego-network signatures and profile each cluster in an embedding.
    Structure(StructureArgs),
    /// Rank the neighbors of an anchor node in an embedding or the graph.
    Rank(RankArgs),
    /// Regress embedding distances on metric differences.
    Regress(RegressArgs),
    /// Run the HTTP workbench service.
    Serve(ServeArgs),
    /// Run several stages from one config file.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArg {
    /// Edge-list file, synthetic spec file (.json/.toml), inline spec such as
    /// `ba:n=1000,m=1,seed=1`, or a dataset id under WORKBENCH_DATA_DIR.
    #[arg(long, env = "EMBEDLENS_DATASET")]
    pub dataset: String,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub dataset: DatasetArg,
    /// Model: deepwalk, node2vec or struc2vec.
    #[arg(long)]
    pub model: String,
    /// node2vec return parameter (required for node2vec).
    #[arg(long)]
    pub p: Option<f64>,
    /// node2vec in-out parameter (required for node2vec).
    #[arg(long)]
    pub q: Option<f64>,
    /// Embedding dimension [default: 128].
    #[arg(long)]
    pub dim: Option<usize>,
    /// Walks started from every node [default: 10].
    #[arg(long)]
    pub walks: Option<usize>,
    /// Nodes per walk [default: 80].
    #[arg(long)]
    pub length: Option<usize>,
    /// Skip-gram context window [default: 10].
    #[arg(long)]
    pub window: Option<usize>,
    /// Training passes over the walk corpus [default: 5].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Negative samples per positive pair [default: 5].
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Initial learning rate, decayed linearly [default: 0.025].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// struc2vec hierarchy depth [default: 5].
    #[arg(long)]
    pub layers: Option<usize>,
    /// struc2vec probability of staying in the current layer [default: 0.3].
    #[arg(long)]
    pub stay_probability: Option<f64>,
    /// Random seed [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub dataset: DatasetArg,
    /// Seed for community detection.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file [default: standard output].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub dataset: DatasetArg,
    /// Embedding file to project; without it the metric signatures are projected.
    #[arg(long)]
    pub embedding: Option<PathBuf>,
    /// Precomputed metrics CSV, used when projecting metric signatures.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// t-SNE perplexity [default: 30].
    #[arg(long)]
    pub perplexity: Option<f64>,
    /// Gradient-descent iterations [default: 1000].
    #[arg(long)]
    pub iterations: Option<usize>,
    /// t-SNE learning rate [default: 200].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Iterations between recorded snapshots [default: 10].
    #[arg(long)]
    pub stride: Option<usize>,
    /// Seed for the initial layout and community detection.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file [default: standard output].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StructureArgs {
    #[command(flatten)]
    pub dataset: DatasetArg,
    /// Embedding file whose distances profile each cluster.
    #[arg(long)]
    pub embedding: PathBuf,
    /// Number of clusters.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Seed for k-means initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file [default: standard output].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub dataset: DatasetArg,
    /// Label of the anchor node.
    #[arg(long)]
    pub anchor: String,
    /// Embedding file to rank in, or `graph` for the graph ordering itself.
    #[arg(long)]
    pub space: String,
    /// Embedding similarity: cosine or euclidean.
    #[arg(long, default_value = "euclidean")]
    pub measure: String,
    /// List length.
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    /// Graph ordering the list is scored against: shared_friends or a metric key.
    #[arg(long, default_value = "shared_friends")]
    pub order_by: String,
    /// Further embedding files counted for cross-space presence (at most two).
    #[arg(long, value_delimiter = ',')]
    pub compare: Vec<PathBuf>,
    /// Precomputed metrics CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Seed for community detection when metrics are computed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file [default: standard output].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[command(flatten)]
    pub dataset: DatasetArg,
    /// Comma-separated embedding files aligned to the dataset's labels.
    #[arg(long, value_delimiter = ',', required = true)]
    pub embeddings: Vec<PathBuf>,
    /// Precomputed metrics CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Report JSON file.
    #[arg(long)]
    pub out: PathBuf,
    /// Feature table CSV file; the table is also printed to standard output.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Most node pairs to sample; 0 regresses on every pair.
    #[arg(long, default_value_t = 500_000)]
    pub max_pairs: usize,
    /// Fraction of pairs used for training.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Decision-tree depth limit; 0 grows without limit.
    #[arg(long, default_value_t = 10)]
    pub max_depth: usize,
    /// Fewest samples per decision-tree leaf.
    #[arg(long, default_value_t = 20)]
    pub min_leaf: usize,
    /// Lasso penalty.
    #[arg(long, default_value_t = 1e-3)]
    pub lasso_lambda: f64,
    /// Seed for pair sampling, the train/test split and community detection.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Port to listen on; 0 picks a free one.
    #[arg(long, env = "WORKBENCH_PORT", default_value_t = embedlens_service::DEFAULT_PORT)]
    pub port: u16,
    /// Directory holding `datasets/` and the artifact cache.
    #[arg(long, env = "WORKBENCH_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    /// Job worker threads [default: logical cores - 1].
    #[arg(long, env = "WORKBENCH_WORKERS")]
    pub workers: Option<usize>,
    /// Accepted for uniformity; the service itself is not randomized.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(subcommand)]
    pub action: PipelineAction,
}

#[derive(Debug, Subcommand)]
pub enum PipelineAction {
    /// Run every stage described by a TOML config.
    Run(PipelineRunArgs),
}

#[derive(Debug, Args)]
pub struct PipelineRunArgs {
    /// Pipeline config file (TOML).
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    if let Err(Failure { code, message }) = commands::run(cli.command) {
        eprintln!("error: {message}");
        std::process::exit(code as i32);
    }
}
