mod artifacts;
mod config;
mod images;
mod runs;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use edgeattn::ErrorKind;

use config::RunConfig;
use images::{CamRequest, PoolArg};

/// Max-Min edge maps, edge attention training runs and Grad-CAM export.
#[derive(Parser)]
#[command(name = "edgeattn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        Ok(RunConfig::load(&self.config)?.resolve(self.seed, self.out.clone()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Writes rescaled Max-Min edge maps of PGM/PPM images.
    EdgeExtract {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Pool size such as 5, 5x5 or 2x2/2; repeat for side-by-side maps.
        #[arg(long, default_value = "5x5")]
        pool: Vec<PoolArg>,
        /// Stride for pools given without one.
        #[arg(long, default_value_t = 2)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains the configured variant.
    Train(RunArgs),
    /// Trains baseline, eam, eam2 and the max-pool ablation on one split.
    Ablate(RunArgs),
    /// Stratified k-fold cross-validation of the configured variant.
    Crossval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Writes Grad-CAM overlays for PGM/PPM images.
    Gradcam {
        /// Model file written by `train` or `ablate`.
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Target class index; defaults to the predicted class.
        #[arg(long)]
        class: Option<usize>,
        /// Block tap such as block_2; defaults to the second-last block.
        #[arg(long)]
        tap: Option<String>,
        /// Image weight in the overlay; 0 gives the bare heatmap. Repeatable.
        #[arg(long, default_value = "0")]
        alpha: Vec<f64>,
        /// Optional class names, in label order, for the JSON summary.
        #[arg(long, value_delimiter = ',')]
        class_names: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::EdgeExtract { inputs, pool, stride, out } => {
            images::cmd_edge_extract(&inputs, &pool, stride, &out)?;
        }
        Command::Train(args) => {
            let m = runs::cmd_train(&args.load()?)?;
            if let Some(r) = &m.metrics {
                println!("{}: accuracy {:.4}, macro F1 {:.4}", m.variant, r.accuracy, r.f1);
            }
        }
        Command::Ablate(args) => {
            runs::cmd_ablate(&args.load()?)?;
        }
        Command::Crossval { run, k } => {
            runs::cmd_crossval(&run.load()?, k)?;
        }
        Command::Gradcam { model, inputs, class, tap, alpha, class_names, out } => {
            images::cmd_gradcam(&CamRequest {
                model: &model,
                inputs: &inputs,
                class,
                tap: tap.as_deref(),
                alphas: &alpha,
                class_names: &class_names,
                out: &out,
            })?;
        }
    }
    Ok(())
}

fn category(err: &anyhow::Error) -> (&'static str, u8) {
    match err.downcast_ref::<edgeattn::Error>().map(edgeattn::Error::kind) {
        Some(ErrorKind::Usage) => ("usage", 2),
        Some(ErrorKind::Config) => ("config", 3),
        Some(ErrorKind::Validation) => ("validation", 4),
        Some(ErrorKind::Dimension) => ("dimension", 5),
        Some(ErrorKind::Data) => ("data", 6),
        Some(ErrorKind::Io) => ("io", 7),
        Some(ErrorKind::Divergence) => ("divergence", 8),
        None if err.downcast_ref::<std::io::Error>().is_some() => ("io", 7),
        None => ("error", 1),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (name, code) = category(&err);
            eprintln!("error[{name}]: {err:#}");
            ExitCode::from(code)
        }
    }
}
