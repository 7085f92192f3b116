use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use minerf_core::model::{InitScheme, Variant};

#[derive(Debug, Parser)]
#[command(name = "minerf", version, about = "Few-shot radiance fields with multi-input MLPs")]
pub struct Cli {
    /// Worker threads; 0 keeps the default of one per core.
    #[arg(long, global = true, env = "MINERF_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render an analytic scene into a Blender-layout dataset.
    Synth(SynthArgs),
    /// Fit a radiance field to a dataset.
    Train(TrainArgs),
    /// Render a checkpoint from dataset poses or an orbit.
    Render(RenderArgs),
    /// Score a checkpoint against a dataset split.
    Eval(EvalArgs),
    /// Per-layer gradient amplitudes at initialisation.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Scene preset: sphere, cluster or empty.
    #[arg(long, default_value = "cluster")]
    pub scene: String,
    /// Views in the train split.
    #[arg(long, default_value_t = 4)]
    pub views: usize,
    /// Views in the test split; 0 writes no test split.
    #[arg(long, default_value_t = 0)]
    pub test_views: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub camera_angle_x: Option<f64>,
    /// Quadrature samples per ray of the reference renderer.
    #[arg(long)]
    pub dense_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Flags override the config file, which overrides the defaults.
#[derive(Debug, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// TOML settings, or a `manifest.json` from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Indices of the training views to use, e.g. `26,86,2,55`.
    #[arg(long, value_delimiter = ',')]
    pub views: Option<Vec<usize>>,
    /// Split scored during training.
    #[arg(long)]
    pub test_split: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr_start: Option<f64>,
    #[arg(long)]
    pub lr_end: Option<f64>,
    #[arg(long)]
    pub lambda_br: Option<f64>,
    #[arg(long)]
    pub out_fraction: Option<f64>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub n_start: Option<usize>,
    #[arg(long)]
    pub eta: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub eval_samples: Option<usize>,
    #[arg(long)]
    pub near: Option<f64>,
    #[arg(long)]
    pub far: Option<f64>,
    /// Background colour as `r,g,b` in [0, 1].
    #[arg(long, value_delimiter = ',')]
    pub background: Option<Vec<f64>>,
    /// Midpoint instead of jittered sampling along training rays.
    #[arg(long)]
    pub no_jitter: bool,
    #[arg(long)]
    pub chunk_points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset whose poses and intrinsics are rendered.
    #[arg(long, conflicts_with = "orbit", required_unless_present = "orbit")]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Number of frames on a circular orbit around the origin.
    #[arg(long)]
    pub orbit: Option<usize>,
    #[arg(long, default_value_t = 3.0)]
    pub radius: f64,
    /// Orbit elevation in degrees.
    #[arg(long, default_value_t = 30.0)]
    pub elevation: f64,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 0.6911112)]
    pub camera_angle_x: f64,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Args)]
pub struct SamplingArgs {
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.5)]
    pub near: f64,
    #[arg(long, default_value_t = 6.0)]
    pub far: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,1,1")]
    pub background: Vec<f64>,
    /// Rays per work item.
    #[arg(long, default_value_t = 256)]
    pub chunk: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Default, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// TOML settings, or a `manifest.json` from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub first_seed: Option<u64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Positional-encoding octaves.
    #[arg(long)]
    pub frequencies: Option<usize>,
    #[arg(long)]
    pub init: Option<InitScheme>,
}
