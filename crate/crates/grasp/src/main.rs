use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use grasp::cli::{cmd_convert, cmd_eval, cmd_predict, cmd_synth, cmd_train, cmd_viz, EvalSplit, SceneInput};
use grasp::config::{Overrides, RunConfig, CACHE_ENV};
use grasp::model::ModelKind;
use grasp::{Error, Result};

/// Grasp detection with GI-NNet and RGI-NNet.
#[derive(Debug, Parser)]
#[command(
    name = "grasp",
    version,
    after_help = "Environment:\n  GRASP_CACHE  default dataset cache directory (used when neither --data nor the config sets one)\n  RUST_LOG     log filter, default `info`\n\nErrors are printed as `error[<category>]: <message>` with a nonzero exit code:\n  2 config   3 io, missing-files   4 parse, decode\n  5 version, spec, assembly, shape   6 training   1 other"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for splits, initialization and augmentation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Preprocessed cache directory.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Model checkpoint file.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Model kind; checked against the checkpoint when both are given.
    #[arg(long, global = true, value_enum)]
    model: Option<ModelKind>,
    /// Fraction of the training split with labels (rginnet).
    #[arg(long, global = true)]
    label_fraction: Option<f64>,
    /// Rectangle metric: minimum IOU.
    #[arg(long, global = true)]
    iou_min: Option<f64>,
    /// Rectangle metric: maximum angle offset in degrees.
    #[arg(long, global = true)]
    angle_max: Option<f64>,
    /// Output location (directory or report file, per command).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a raw Cornell dataset directory into a cache (written to
    /// --out, else the configured data directory).
    Convert {
        /// Directory holding pcdNNNNr.png, pcdNNNN.txt and the rectangle files.
        raw: PathBuf,
    },
    /// Train a model on the cache; checkpoints and metrics go to --out.
    Train,
    /// Score a checkpoint with the rectangle metric; the report goes to
    /// stdout and to --out when given.
    Eval {
        /// Scenes to score, from the split implied by the seed and fractions.
        #[arg(long, value_enum, default_value_t = EvalSplit::Test)]
        split: EvalSplit,
    },
    /// Print the top grasps for a cached scene or an image file.
    Predict {
        #[command(flatten)]
        input: InputArgs,
        /// Number of grasps to print.
        #[arg(long)]
        top_k: Option<usize>,
        /// Calibration file; adds robot-frame poses.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Write overlay, quality, angle and width images to --out.
    Viz {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Write synthetic scenes in the raw Cornell layout.
    Synth {
        /// Created if missing.
        out_dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        scenes: usize,
        #[arg(long, default_value_t = 480)]
        rows: usize,
        #[arg(long, default_value_t = 640)]
        cols: usize,
    },
}

#[derive(Debug, clap::Args)]
struct InputArgs {
    /// RGB image file.
    #[arg(required_unless_present = "scene", conflicts_with = "scene")]
    image: Option<PathBuf>,
    /// Depth for the image: Cornell point cloud or `.grsp` array.
    #[arg(long, requires = "image")]
    depth: Option<PathBuf>,
    /// Scene id in the data cache.
    #[arg(long)]
    scene: Option<String>,
}

impl InputArgs {
    fn input(&self) -> SceneInput {
        match (&self.scene, &self.image) {
            (Some(id), _) => SceneInput::Cached(id.clone()),
            (None, Some(image)) => SceneInput::Files {
                image: image.clone(),
                depth: self.depth.clone(),
            },
            (None, None) => unreachable!("clap requires an image or a scene"),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        data: cli.data.clone(),
        checkpoint: cli.checkpoint.clone(),
        model: cli.model,
        label_fraction: cli.label_fraction,
        iou_min: cli.iou_min,
        angle_max: cli.angle_max,
        out: cli.out.clone(),
    };
    let env_cache = std::env::var_os(CACHE_ENV).map(PathBuf::from);
    let mut cfg = base.resolve(&overrides, env_cache)?;
    if let Command::Predict { top_k, calibration, .. } = &cli.command {
        if let Some(k) = top_k {
            cfg.eval.top_k = *k;
        }
        if calibration.is_some() {
            cfg.calibration = calibration.clone();
        }
    }
    log::info!("resolved config:\n{}", cfg.to_toml());
    match &cli.command {
        Command::Convert { raw } => {
            let out =
                cfg.out.clone().or(cfg.data.clone()).ok_or_else(|| {
                    Error::InvalidConfig(format!("no cache directory: pass --out or set {CACHE_ENV}"))
                })?;
            print!("{}", cmd_convert(raw, &out)?);
        }
        Command::Train => print!("{}", cmd_train(&cfg)?),
        Command::Eval { split } => print!("{}", cmd_eval(&cfg, *split, cli.model)?),
        Command::Predict { input, .. } => print!("{}", cmd_predict(&cfg, &input.input(), cli.model)?),
        Command::Viz { input } => {
            for p in cmd_viz(&cfg, &input.input(), cli.model)? {
                println!("{}", p.display());
            }
        }
        Command::Synth {
            out_dir,
            scenes,
            rows,
            cols,
        } => print!("{}", cmd_synth(out_dir, *scenes, *rows, *cols, cfg.train.seed)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
