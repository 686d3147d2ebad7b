use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Fair ranking tools: DELTR training, FA*IR re-ranking and the search
/// service.
///
/// Machine output goes to stdout (or `--out`), diagnostics to stderr. Exit
/// status is 0 on success, 1 for invalid parameters or domain failures and
/// 2 for I/O or parse failures.
#[derive(Debug, Parser)]
#[command(name = "fairsearch", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a DELTR model; prints the loss trajectory as CSV.
    Train(TrainArgs),
    /// Score and rank documents with a trained model; prints CSV.
    Predict(PredictArgs),
    /// Build an MTable; prints it as JSON.
    Mtable(MTableArgs),
    /// Re-rank a candidate CSV with FA*IR; prints CSV.
    Rerank(RerankArgs),
    /// Write the two-group synthetic training set as CSV.
    Synth(SynthArgs),
    /// Run the gamma sweep on synthetic data; writes one CSV row per gamma.
    Experiment(ExperimentArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Index newline-delimited documents into a running service or a local
    /// index snapshot.
    Ingest(IngestArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training CSV: query_id,doc_id,protected,<features...>,judgment.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 500)]
    pub iterations: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub init_scale: f64,
    /// Model output; the file is a model upload record for the service.
    #[arg(long)]
    pub out: PathBuf,
    /// `model_name` of the written record.
    #[arg(long, default_value = "deltr_model")]
    pub model_name: String,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file: an upload record or a bare model.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV in the training format; judgments are ignored.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct FairnessArgs {
    /// Ranking length; defaults to the number of candidates for `rerank`.
    #[arg(long)]
    pub k: Option<usize>,
    /// Minimum protected proportion.
    #[arg(long)]
    pub p: Option<f64>,
    /// Significance level.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Correct alpha for testing all prefixes at once.
    #[arg(long)]
    pub adjust: bool,
}

#[derive(Debug, Args)]
pub struct MTableArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long)]
    pub adjust: bool,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    /// Candidate CSV with columns id,score,protected.
    #[arg(long)]
    pub candidates: PathBuf,
    #[command(flatten)]
    pub fairness: FairnessArgs,
    /// Use a stored MTable (as printed by `mtable`) instead of k/p/alpha.
    #[arg(long, conflicts_with_all = ["k", "p", "adjust"])]
    pub mtable_file: Option<PathBuf>,
    /// Print one JSON document with ranking, satisfied and violations.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// Give the protected group the higher scores.
    #[arg(long)]
    pub protected_first: bool,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Comma-separated gamma values.
    #[arg(long, value_delimiter = ',', default_value = "0,1,10,100")]
    pub gammas: Vec<f64>,
    /// Multiply each gamma by the loss-to-penalty ratio of the
    /// protected-last dataset, putting both terms on one scale.
    #[arg(long)]
    pub relative: bool,
    #[arg(long)]
    pub protected_first: bool,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.005)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 200_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.01)]
    pub init_scale: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML file with `address`, `storage_dir` and optional `index_snapshot`.
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub index: String,
    /// Newline-delimited document records.
    #[arg(long)]
    pub file: PathBuf,
    /// Base URL of a running service, e.g. http://127.0.0.1:9200.
    #[arg(long, conflicts_with = "snapshot", required_unless_present = "snapshot")]
    pub url: Option<String>,
    /// Index snapshot file to update in place.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
}
