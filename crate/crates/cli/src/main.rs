//! `fusebox` — detection-ensemble post-processing from the command line:
//! fuse per-model prediction files, map test-time-augmented predictions
//! back to original coordinates, transform image directories, and score
//! results with COCO-style mAP.

mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fusebox_core::eval::EvalConfig;
use fusebox_core::fusion::{FusionConfig, OverlapMetric, Selection};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "fusebox",
    version,
    about = "Detection-ensemble fusion, TTA mapping, and mAP evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merge prediction files, undo TTA scaling, and fuse overlapping boxes
    Fuse {
        /// Run configuration (JSON)
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: FusionOverrides,
        /// Fused prediction file (defaults to the config's output.fused)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Omit the timestamp from the metadata sidecar
        #[arg(long)]
        no_timestamp: bool,
    },
    /// Score a prediction file against COCO-style ground truth
    Eval {
        /// Prediction file (JSON array of detection records)
        predictions: PathBuf,
        /// Ground-truth file (COCO annotation JSON)
        ground_truth: PathBuf,
        /// Run configuration supplying eval parameters
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resize and HSV-adjust every PNG in a directory
    Transform {
        /// Directory of input PNG images
        images: PathBuf,
        /// Output directory (created if missing)
        out_dir: PathBuf,
        /// Run configuration declaring the transform
        #[arg(long)]
        config: PathBuf,
        /// Label of the transform to apply
        #[arg(long)]
        transform: String,
    },
    /// Evaluate each input and the fused set: one mAP row per method
    Ablate {
        /// Run configuration (JSON); must declare ground_truth
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: FusionOverrides,
        /// Also write the comparison as JSON
        #[arg(long)]
        out: Option<PathBuf>,
        /// Omit the timestamp from the JSON report
        #[arg(long)]
        no_timestamp: bool,
    },
}

#[derive(Args)]
struct FusionOverrides {
    /// Clustering metric
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    /// Overlap threshold for clustering edges
    #[arg(long)]
    threshold: Option<f64>,
    /// Drop detections scoring below this value before clustering
    #[arg(long)]
    min_score: Option<f64>,
    /// How each cluster's output box is chosen
    #[arg(long, value_enum)]
    selection: Option<SelectionArg>,
}

impl FusionOverrides {
    fn apply(&self, fusion: &mut FusionConfig) {
        if let Some(metric) = self.metric {
            fusion.metric = metric.into();
        }
        if let Some(threshold) = self.threshold {
            fusion.overlap_threshold = threshold;
        }
        if let Some(min_score) = self.min_score {
            fusion.min_score = min_score;
        }
        if let Some(selection) = self.selection {
            fusion.selection = selection.into();
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum MetricArg {
    Iou,
    Giou,
}

impl From<MetricArg> for OverlapMetric {
    fn from(arg: MetricArg) -> Self {
        match arg {
            MetricArg::Iou => OverlapMetric::Iou,
            MetricArg::Giou => OverlapMetric::Giou,
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum SelectionArg {
    /// Highest-confidence member
    Max,
    /// Score-weighted average of member corners
    Wavg,
}

impl From<SelectionArg> for Selection {
    fn from(arg: SelectionArg) -> Self {
        match arg {
            SelectionArg::Max => Selection::MaxConfidence,
            SelectionArg::Wavg => Selection::WeightedAverage,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fuse {
            config,
            overrides,
            out,
            no_timestamp,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            overrides.apply(&mut cfg.fusion);
            cfg.validate()?;
            commands::cmd_fuse(&cfg, out, no_timestamp)
        }
        Command::Eval {
            predictions,
            ground_truth,
            config,
            out,
        } => {
            let eval_config = match config {
                Some(path) => {
                    let cfg = RunConfig::load(&path)?;
                    cfg.validate()?;
                    cfg.eval
                }
                None => EvalConfig::default(),
            };
            commands::cmd_eval(&predictions, &ground_truth, &eval_config, out)
        }
        Command::Transform {
            images,
            out_dir,
            config,
            transform,
        } => {
            let cfg = RunConfig::load(&config)?;
            cfg.validate()?;
            commands::cmd_transform(&images, &out_dir, &transform, &cfg)
        }
        Command::Ablate {
            config,
            overrides,
            out,
            no_timestamp,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            overrides.apply(&mut cfg.fusion);
            cfg.validate()?;
            commands::cmd_ablate(&cfg, out, no_timestamp)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FUSEBOX_LOG", "off")).init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
