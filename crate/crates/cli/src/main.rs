use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Decode, match, fuse and evaluate camera-centric multi-person 3D poses.
#[derive(Debug, Parser)]
#[command(name = "posefuse", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenes with ground truth and bottom-up maps.
    Synth(SynthArgs),
    /// Decode one frame's bottom-up maps into camera-centric poses.
    Decode(DecodeArgs),
    /// Match a bottom-up pose set against a top-down pose set.
    Match(MatchArgs),
    /// Fuse matched pose pairs.
    Fuse(FuseArgs),
    /// Evaluate predicted poses against ground truth.
    Eval(EvalArgs),
    /// Consistency scores and curriculum weights for pseudo-labelled poses.
    SslScore(SslArgs),
    /// Directed joint adjacency from heatmap confidences.
    Adjacency(AdjacencyArgs),
    /// Run decode, match, fuse and eval over a list of scene manifests.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Persons per frame (lower bound when --persons-max is given).
    #[arg(long, default_value_t = 2)]
    pub persons: usize,
    /// Upper bound of persons per frame, drawn per frame from the seed.
    #[arg(long)]
    pub persons_max: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub frames: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "synth")]
    pub sequence_id: String,
    /// Camera JSON; overrides the size and focal flags.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long, default_value_t = 1920)]
    pub width: usize,
    #[arg(long, default_value_t = 1080)]
    pub height: usize,
    /// Focal length in pixels; the principal point is the image centre.
    #[arg(long, default_value_t = 1000.0)]
    pub focal: f64,
    /// Skeleton JSON with bone specs; the built-in 16-joint body otherwise.
    #[arg(long)]
    pub skeleton: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    pub sigma_px: f64,
    #[arg(long, default_value_t = 600.0)]
    pub min_separation_mm: f64,
    #[arg(long, default_value_t = 16.0)]
    pub min_pixel_separation: f64,
    #[arg(long, default_value_t = 2000.0)]
    pub depth_min_mm: f64,
    #[arg(long, default_value_t = 12000.0)]
    pub depth_max_mm: f64,
    /// Per-axis Gaussian noise on the written top-down poses, mm.
    #[arg(long, default_value_t = 0.0)]
    pub td_noise_mm: f64,
    /// Probability of zeroing a top-down joint's confidence.
    #[arg(long, default_value_t = 0.0)]
    pub mask_prob: f64,
}

#[derive(Debug, Clone, Args)]
pub struct DecodeOpts {
    #[arg(long, default_value_t = 0.1)]
    pub min_score: f64,
    #[arg(long, default_value_t = 30)]
    pub max_people: usize,
    #[arg(long, default_value_t = 1.0)]
    pub tag_gap: f64,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub decode: DecodeOpts,
}

#[derive(Debug, Clone, Args)]
pub struct MatchOpts {
    /// OKS falloff; one value for all joints or one per joint.
    #[arg(long = "sigma", default_values_t = [0.5], value_delimiter = ',')]
    pub sigmas: Vec<f64>,
    /// Global OKS scale in mm instead of the per-pair top-down scale.
    #[arg(long)]
    pub scale_mm: Option<f64>,
    /// Minimum pair similarity [default: 0.1 x joint count].
    #[arg(long)]
    pub match_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Bottom-up pose set JSON.
    #[arg(long)]
    pub bu: PathBuf,
    /// Top-down pose set JSON.
    #[arg(long)]
    pub td: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub matching: MatchOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    Hard,
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Args)]
pub struct FuseOpts {
    #[arg(long, value_enum, default_value_t = Strategy::Hard)]
    pub strategy: Strategy,
    /// Weight bundle header for --strategy mlp.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Append the pair similarity to the network input.
    #[arg(long, default_value_t = false)]
    pub mlp_similarity: bool,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub bu: PathBuf,
    #[arg(long)]
    pub td: PathBuf,
    /// Match result JSON; computed with the matching flags when absent.
    #[arg(long)]
    pub matches: Option<PathBuf>,
    /// Skeleton JSON giving the root joint; the built-in body otherwise.
    #[arg(long)]
    pub skeleton: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub fuse: FuseOpts,
    #[command(flatten)]
    pub matching: MatchOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairingMode {
    Root3d,
    Oks2d,
}

#[derive(Debug, Clone, Args)]
pub struct EvalOpts {
    #[arg(long, default_value_t = 150.0)]
    pub pck_threshold_mm: f64,
    #[arg(long, default_value_t = 250.0)]
    pub ap_threshold_mm: f64,
    #[arg(long = "f1-threshold-m", default_values_t = [0.4, 0.8, 1.2], value_delimiter = ',')]
    pub f1_thresholds_m: Vec<f64>,
    #[arg(long, value_enum, default_value_t = PairingMode::Root3d)]
    pub pairing: PairingMode,
    /// Root distance gate of root3d pairing, mm.
    #[arg(long, default_value_t = 500.0)]
    pub gate_mm: f64,
    /// Minimum mean OKS of oks2d pairing.
    #[arg(long, default_value_t = 0.1)]
    pub min_oks: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// `all` or a comma list of mpjpe, pa_mpjpe, pck, pck_abs, auc_rel, ap_root, f1_at.
    #[arg(long, default_value = "all")]
    pub metrics: String,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub skeleton: Option<PathBuf>,
    /// Camera JSON, required for --pairing oks2d.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sign {
    Curriculum,
    Literal,
}

#[derive(Debug, Args)]
pub struct SslArgs {
    /// Pseudo-labelled 3D pose set JSON.
    #[arg(long)]
    pub poses: PathBuf,
    /// 2D pose set JSON the 3D poses were lifted from.
    #[arg(long)]
    pub poses2d: PathBuf,
    /// Re-predictions of the rotated, re-projected poses; E_mp is 0 without it.
    #[arg(long)]
    pub repredicted: Option<PathBuf>,
    #[arg(long)]
    pub camera: PathBuf,
    #[arg(long)]
    pub skeleton: Option<PathBuf>,
    /// Epoch count dividing the errors inside the softmax.
    #[arg(long, default_value_t = 1.0)]
    pub epoch: f64,
    /// Rotation angle in radians [default: drawn from --seed].
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Sign::Curriculum)]
    pub sign: Sign,
    /// Discriminator loss added to every sample's SSL loss.
    #[arg(long, default_value_t = 0.0)]
    pub l_dis: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AdjacencyArgs {
    #[arg(long)]
    pub heatmaps: PathBuf,
    #[arg(long)]
    pub skeleton: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Manifest files or directories of `*.manifest.json`.
    #[arg(required = true)]
    pub manifests: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue past failing frames; exits with status 3 if any failed.
    #[arg(long, default_value_t = false)]
    pub keep_going: bool,
    /// Worker threads; 0 uses all cores.
    #[arg(long, env = "POSEFUSE_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(flatten)]
    pub decode: DecodeOpts,
    #[command(flatten)]
    pub matching: MatchOpts,
    #[command(flatten)]
    pub fuse: FuseOpts,
    #[command(flatten)]
    pub eval: EvalOpts,
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_PARTIAL: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(commands::Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
