use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use genre_cnn::analysis::Neuron;
use genre_cnn::dataset::Split;
use genre_cnn::model::HiddenLayer;

/// Music genre classification with a small CNN on log-mel spectrograms.
#[derive(Debug, Parser)]
#[command(name = "genre-cnn", version, about)]
pub struct Cli {
    /// Directory every output is written under.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    /// Log level (error, warn, info, debug, trace); RUST_LOG takes precedence.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract log-mel features from <genre>/<track>.wav files and write a split manifest.
    Preprocess(PreprocessArgs),
    /// Train a model on the manifest's training split with early stopping on validation.
    Train(TrainArgs),
    /// Track-level accuracy and confusion matrix on one split.
    Evaluate(EvaluateArgs),
    /// Genre probabilities for individual WAV files or feature caches.
    Predict(PredictArgs),
    /// Estimate the input filters of hidden neurons by Lasso regression.
    AnalyzeFilters(AnalyzeFiltersArgs),
    /// Project last-hidden-layer activations of the test split onto LDA directions.
    ProjectLda(ProjectLdaArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Root directory holding one sub-directory of WAV files per genre.
    #[arg(long, default_value = "genres")]
    pub audio_dir: PathBuf,

    /// Manifest file name, created inside --out-dir.
    #[arg(long, default_value = "manifest.tsv")]
    pub manifest_name: String,

    /// Train:validation:test ratio of the stratified split.
    #[arg(long, default_value = "5:2:3", value_parser = parse_ratios)]
    pub split: [u32; 3],

    /// Seed of the split shuffle.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ManifestArg {
    /// Manifest TSV written by `preprocess` [default: <out-dir>/manifest.tsv].
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckpointArg {
    /// Model checkpoint [default: <out-dir>/model.ckpt].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,

    /// Seed for weight initialisation, batch order, segment sampling and dropout.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,

    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,

    /// Tracks per mini-batch.
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,

    /// L2 penalty on weights.
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,

    /// Dropout rate after the 32-unit hidden layer.
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,

    #[arg(long, default_value_t = 200)]
    pub max_epochs: usize,

    /// Validation evaluations without improvement before stopping.
    #[arg(long, default_value_t = 10)]
    pub patience: usize,

    /// Evaluate every this many steps; 0 evaluates at the end of each epoch.
    #[arg(long, default_value_t = 0)]
    pub eval_every: usize,

    /// Segment overlap for validation predictions.
    #[arg(long, default_value_t = 0.5)]
    pub eval_overlap: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,

    #[command(flatten)]
    pub checkpoint: CheckpointArg,

    /// Split to evaluate.
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,

    /// Segment overlap for track prediction.
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub checkpoint: CheckpointArg,

    /// WAV files (22,050 Hz) or feature caches (.mels).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,

    /// Segment overlap for track prediction.
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
}

#[derive(Debug, Args)]
pub struct AnalyzeFiltersArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,

    #[command(flatten)]
    pub checkpoint: CheckpointArg,

    /// Hidden layer: conv1, pool1, conv2, pool2 or fc1.
    #[arg(long, default_value = "pool2", value_parser = parse_layer)]
    pub layer: HiddenLayer,

    /// Target neuron as channel,row,col; repeat for several.
    #[arg(long, default_value = "0,0,0", value_parser = parse_neuron)]
    pub neuron: Vec<Neuron>,

    /// λ as a fraction of each fit's λ_max.
    #[arg(long, default_value_t = 0.01, conflicts_with = "lambda")]
    pub lambda_fraction: f64,

    /// Fixed λ, overriding --lambda-fraction [default: unset].
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Overlap between consecutive segments.
    #[arg(long, default_value_t = genre_cnn::analysis::FILTER_OVERLAP)]
    pub overlap: f64,
}

#[derive(Debug, Args)]
pub struct ProjectLdaArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,

    #[command(flatten)]
    pub checkpoint: CheckpointArg,

    /// Overlap between consecutive segments.
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,

    /// Also project the raw flattened log-mel segments for comparison.
    #[arg(long, default_value_t = false)]
    pub raw: bool,
}

fn parse_ratios(s: &str) -> Result<[u32; 3], String> {
    let parts: Vec<u32> =
        s.split(':').map(|p| p.trim().parse::<u32>().map_err(|e| format!("{p:?}: {e}"))).collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] if a + b + c > 0 => Ok([a, b, c]),
        [_, _, _] => Err("at least one ratio must be positive".into()),
        _ => Err("expected three ratios such as 5:2:3".into()),
    }
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: genre_cnn::Error| e.to_string())
}

fn parse_layer(s: &str) -> Result<HiddenLayer, String> {
    s.parse().map_err(|e: genre_cnn::Error| e.to_string())
}

fn parse_neuron(s: &str) -> Result<Neuron, String> {
    s.parse().map_err(|e: genre_cnn::Error| e.to_string())
}
