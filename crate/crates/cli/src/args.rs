use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "patchspan", version, about = "Detect adversarial patches from feature-map clustering curves")]
pub struct Cli {
    /// Worker threads for featurization; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Write a synthetic corpus of feature maps and its manifest.
    Gen(GenArgs),
    /// Print the raw clustering curves of one feature map as CSV.
    Featurize(FeaturizeArgs),
    /// Train a detector on the train and val splits of a manifest.
    Train(TrainArgs),
    /// Score feature maps, printing `path,score` lines.
    Score(ScoreArgs),
    /// Detection metrics on one split of a manifest.
    Eval(EvalArgs),
    /// ROC curve on one split of a manifest.
    Roc(RocArgs),
    /// Time the featurize-and-score path per map.
    Bench(BenchArgs),
    /// Per-channel Shapley attributions of detection scores.
    Shap(ShapArgs),
    /// Occlusion baseline that re-queries an oracle per candidate window.
    BaselineThemis(ThemisArgs),
    /// Half-mask consistency baseline over recorded detections.
    BaselineObjseeker(ObjSeekerArgs),
}

/// Clustering settings shared by every command that featurizes maps.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ClusterArgs {
    /// DBSCAN neighborhood radius in cells.
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
    /// Minimum closed-neighborhood size of a core point.
    #[arg(long = "min-pts", default_value_t = 4)]
    pub min_pts: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    /// Output directory; receives `maps/` and `manifest.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub rows: usize,
    #[arg(long, default_value_t = 64)]
    pub cols: usize,
    #[arg(long = "n-clean", default_value_t = 100)]
    pub n_clean: usize,
    #[arg(long = "n-attacked", default_value_t = 100)]
    pub n_attacked: usize,
    /// Comma-separated patch counts cycled over attacked maps.
    #[arg(long = "patch-counts", value_delimiter = ',', default_value = "1,2,4")]
    pub patch_counts: Vec<u32>,
    #[arg(long = "blob-side-fraction", default_value_t = 0.12)]
    pub blob_side_fraction: f64,
    #[arg(long = "blob-gain", default_value_t = 6.0)]
    pub blob_gain: f64,
    /// Box-blur passes over the background noise.
    #[arg(long, default_value_t = 3)]
    pub smoothness: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct FeaturizeArgs {
    /// Feature map in NPY format.
    pub map: PathBuf,
    /// Ensemble size: thresholds 0, 1/B, ..., (B-1)/B.
    #[arg(long = "B", default_value_t = 20)]
    pub ensemble_size: usize,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long = "B", default_value_t = 20)]
    pub ensemble_size: usize,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    /// Channels fed to the detector: `all` or names such as `n_clusters,d_mean`.
    #[arg(long, default_value = "all")]
    pub channels: String,
    /// One-class training on clean maps against random-noise curves.
    #[arg(long)]
    pub occ: bool,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 200)]
    pub patience: usize,
    #[arg(long = "max-epochs")]
    pub max_epochs: Option<usize>,
    #[arg(long = "val-fraction", default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Seeds weight initialization, the validation split and shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    /// Feature maps in NPY format.
    #[arg(required = true)]
    pub maps: Vec<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    /// Fixed decision threshold; `score >= threshold` flags an attack.
    #[arg(long, conflicts_with = "best_threshold")]
    pub threshold: Option<f64>,
    /// Pick the threshold maximizing accuracy under `--filter` (the default).
    #[arg(long = "best-threshold")]
    pub best_threshold: bool,
    /// Attacked samples counted in accuracy: all, effective_only, noneffective_only.
    #[arg(long, default_value = "all")]
    pub filter: String,
    /// Also write the ROC curve here.
    #[arg(long)]
    pub roc: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RocArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Split to time, or `all`.
    #[arg(long, default_value = "all")]
    pub split: String,
    /// Trained model; without it a freshly initialized model of size `--B` is timed.
    #[arg(long, conflicts_with = "ensemble_size")]
    pub model: Option<PathBuf>,
    #[arg(long = "B")]
    pub ensemble_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ShapArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    /// Exact enumeration instead of Kernel SHAP.
    #[arg(long)]
    pub exact: bool,
    /// Coalitions sampled by Kernel SHAP.
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ThemisArgs {
    /// Feature map of the input, in NPY format.
    #[arg(long)]
    pub map: PathBuf,
    /// Input id used to look up recorded inferences.
    #[arg(long)]
    pub input: String,
    /// JSONL file of recorded inferences.
    #[arg(long)]
    pub oracle: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Window side in feature-map cells.
    #[arg(long, default_value_t = 3)]
    pub window: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ObjSeekerArgs {
    /// JSONL, one input per line: `{"input", "original": [[x0,y0,x1,y1]...], "masked": [{"mask", "boxes"}...]}`.
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long = "kx", default_value_t = 30)]
    pub k_x: usize,
    #[arg(long = "ky", default_value_t = 30)]
    pub k_y: usize,
    /// Image size; when given, masked sets must match the generated half-masks.
    #[arg(long, requires = "height")]
    pub width: Option<usize>,
    #[arg(long, requires = "width")]
    pub height: Option<usize>,
}
