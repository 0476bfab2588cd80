mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;

/// Fingerprint tokenisation, GIN pre-training, OOD benchmarking and model comparison.
#[derive(Parser)]
#[command(name = "fingertrain", version, about)]
struct Cli {
    /// Worker threads for data-parallel stages (0 = all cores).
    #[arg(long, global = true, env = "FINGERTRAIN_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and standardise molecules; failures go to a rejects file.
    Standardize(StandardizeArgs),
    /// Compute folded (or sparse) circular fingerprints.
    Fingerprint(FingerprintArgs),
    /// Build or apply a Sort & Slice substructure vocabulary.
    #[command(subcommand)]
    Vocab(VocabCommand),
    /// Cross-validation split plans.
    #[command(subcommand)]
    Split(SplitCommand),
    /// Drop pre-training molecules too similar to any benchmark molecule.
    Filter(FilterArgs),
    /// Share of benchmark substructures present in a vocabulary.
    Coverage(CoverageArgs),
    /// Pre-train a GIN to predict fingerprint bits.
    Pretrain(PretrainArgs),
    /// Embed molecules with a pre-trained GIN.
    Featurise(FeaturiseArgs),
    /// Fit and score the predictor on every fold of a split plan.
    Benchmark(BenchmarkArgs),
    /// Substructure importance by embedding permutation.
    Importance(ImportanceArgs),
    /// Paired statistical comparison of methods.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Configuration-driven end-to-end run.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Write the synthetic toy corpora.
    Toy(ToyArgs),
}

#[derive(Args)]
struct MoleculeInput {
    /// SMILES file (one per line, optional id after whitespace) or CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// SMILES column when the input is CSV.
    #[arg(long, default_value = "smiles")]
    smiles_column: String,
}

#[derive(Args, Clone)]
struct FpArgs {
    #[arg(long, default_value = "ecfp")]
    kind: String,
    #[arg(long, default_value_t = 2)]
    radius: u32,
    #[arg(long, default_value_t = 2048)]
    nbits: usize,
    /// Ignore @/@@ tags.
    #[arg(long)]
    no_chirality: bool,
}

#[derive(Args)]
struct StandardizeArgs {
    #[command(flatten)]
    input: MoleculeInput,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    rejects: Option<PathBuf>,
}

#[derive(Args)]
struct FingerprintArgs {
    #[command(flatten)]
    input: MoleculeInput,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    fp: FpArgs,
    /// Write unfolded `id<TAB>id:radius,...` lines instead of hex bitsets.
    #[arg(long)]
    sparse: bool,
}

#[derive(Subcommand)]
enum VocabCommand {
    /// Rank corpus substructures by frequency and keep the top k.
    Build(VocabBuildArgs),
    /// Tokenise molecules with an existing vocabulary.
    Apply(VocabApplyArgs),
}

#[derive(Args)]
struct VocabBuildArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "smiles")]
    smiles_column: String,
    #[arg(long, default_value_t = 2)]
    rmax: u32,
    #[arg(long, default_value_t = 2048)]
    k: usize,
    #[arg(long, default_value = "ecfp")]
    kind: String,
    #[arg(long)]
    no_chirality: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VocabApplyArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    input: MoleculeInput,
    #[arg(long)]
    out: PathBuf,
    /// `vector`: k-wide Sort & Slice bits; `tokens`: one row per atom.
    #[arg(long, default_value = "vector", value_parser = ["vector", "tokens"])]
    format: String,
}

#[derive(Subcommand)]
enum SplitCommand {
    /// Butina clusters then repeated grouped k-fold.
    Make(SplitMakeArgs),
}

#[derive(Args)]
struct DatasetArgs {
    /// CSV with `id,smiles,label`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "regression")]
    task: String,
    #[arg(long, default_value = "dataset")]
    name: String,
}

#[derive(Args)]
struct SplitMakeArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 200)]
    repeats: usize,
    #[arg(long, default_value_t = 0.65)]
    cutoff: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    pretrain: PathBuf,
    #[arg(long)]
    benchmark: PathBuf,
    #[arg(long, default_value = "smiles")]
    smiles_column: String,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    target_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CoverageArgs {
    #[arg(long)]
    benchmark: PathBuf,
    #[arg(long, default_value = "smiles")]
    smiles_column: String,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    top_n: Option<usize>,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// Pre-training molecules.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "smiles")]
    smiles_column: String,
    /// Fingerprint family used as targets.
    #[arg(long, default_value = "ecfp", value_parser = ["ecfp", "fcfp"])]
    targets: String,
    #[arg(long, default_value_t = 2)]
    target_radius: u32,
    #[arg(long, default_value_t = 2048)]
    target_bits: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 2)]
    warmup_epochs: usize,
    #[arg(long, default_value_t = 5.0)]
    half_life: f64,
    #[arg(long, default_value_t = 1.0)]
    lr_scale: f64,
    #[arg(long, default_value_t = 3)]
    message_layers: usize,
    #[arg(long, default_value_t = 3)]
    mlp_layers: usize,
    #[arg(long, default_value_t = 512)]
    hidden: usize,
    #[arg(long, default_value_t = 512)]
    embed_dim: usize,
    #[arg(long, default_value_t = 0.125)]
    dropout: f64,
    #[arg(long, default_value = "hardswish")]
    activation: String,
    #[arg(long, default_value = "sum")]
    pooling: String,
    #[arg(long, default_value = "concat")]
    layer_agg: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturiseArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    input: MoleculeInput,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictorArgs {
    #[arg(long, default_value_t = 200)]
    n_estimators: usize,
    #[arg(long, default_value_t = 0.05)]
    learning_rate: f64,
    #[arg(long, default_value_t = 31)]
    num_leaves: usize,
    #[arg(long, default_value_t = 5)]
    min_data_in_leaf: usize,
    #[arg(long, default_value_t = 1.0)]
    feature_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    bagging_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    reg_lambda: f64,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Split CSV from `split make`.
    #[arg(long)]
    splits: PathBuf,
    /// Dense feature CSV (`id,e0,...`) such as `featurise` output.
    #[arg(long, conflicts_with = "fingerprints", required_unless_present = "fingerprints")]
    features: Option<PathBuf>,
    /// Folded fingerprint CSV from `fingerprint`.
    #[arg(long)]
    fingerprints: Option<PathBuf>,
    /// Method name written to the metrics file.
    #[arg(long)]
    method: String,
    /// Comma-separated metrics; defaults depend on the task.
    #[arg(long)]
    metrics: Option<String>,
    #[command(flatten)]
    predictor: PredictorArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Save each fold's predictor as `r<repeat>_f<fold>.json` here.
    #[arg(long)]
    save_predictors: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Predictor JSON fitted on this model's embeddings.
    #[arg(long)]
    predictor: PathBuf,
    /// Labelled test molecules (`id,smiles,label`).
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long, default_value = "r2")]
    metric: String,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Wilcoxon signed-rank tests with Bonferroni correction and rank-biserial effect sizes.
    Compare(StatsCompareArgs),
}

#[derive(Args)]
struct StatsCompareArgs {
    /// Metrics CSV files (`method,dataset,metric,repeat,value,folds_used`).
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Keep repeat 0 (reserved for tuning) in the comparison.
    #[arg(long)]
    include_tuning: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Run (or resume) every stage.
    Run(PipelineRunArgs),
}

#[derive(Args)]
struct PipelineRunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    molecules: usize,
    #[arg(long, default_value_t = 800)]
    pretrain: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: cannot configure {} threads: {e}", cli.threads);
            return ExitCode::from(2);
        }
    }
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
