//! `synids` — one binary for the whole pipeline: synthesize traffic, render
//! session frames, train the classifier, predict, evaluate, and run the
//! end-to-end comparative experiment.
//!
//! Exit codes: 0 success, 2 empty or missing input class, 3 insufficient
//! data, 4 malformed input format, 1 anything else.

mod commands;
mod exit;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "synids",
    version,
    about = "Image-based DDoS anomaly detection pipeline",
    after_help = "Set SYNIDS_LOG=debug (or info, warn) for diagnostics on stderr."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    /// Binary packet capture (classic 24-byte header format).
    Capture,
    /// One JSON metadata object per line.
    Jsonl,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled capture from a scenario file.
    Gen {
        /// Scenario config file (key = value lines).
        #[arg(long)]
        spec: PathBuf,
        /// Output capture path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Capture)]
        format: FormatArg,
        /// Also write the attack ground-truth intervals as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Override the scenario file's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render a capture into per-window session-polygon frames.
    Render {
        /// Input capture or JSONL metadata file (format is sniffed).
        #[arg(long)]
        input: PathBuf,
        /// Output frame directory (PNGs plus frames.jsonl manifest).
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth intervals JSON; labels frames by window overlap.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Window length in seconds.
        #[arg(long, default_value_t = 5.0)]
        window: f64,
        /// Canvas size in pixels (square).
        #[arg(long, default_value_t = synids_core::imaging::DEFAULT_CANVAS_SIZE)]
        size: u32,
        /// Emit frame-to-frame differences instead of raw frames.
        #[arg(long)]
        diff: bool,
        /// Pipeline config file (basis.a / basis.b override).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Session idle split timeout in seconds.
        #[arg(long, default_value_t = 60.0)]
        idle_timeout: f64,
    },
    /// Train the boosted classifier from labeled frames or a capture.
    Train {
        /// Directory of legitimate frames (with frames.jsonl).
        #[arg(long, requires = "ddos", conflicts_with_all = ["capture", "truth"])]
        legitimate: Option<PathBuf>,
        /// Directory of ddos frames (with frames.jsonl).
        #[arg(long, requires = "legitimate")]
        ddos: Option<PathBuf>,
        /// Capture to render and label via --truth.
        #[arg(long, requires = "truth")]
        capture: Option<PathBuf>,
        /// Ground-truth intervals JSON for --capture.
        #[arg(long, requires = "capture")]
        truth: Option<PathBuf>,
        /// Output model path.
        #[arg(long)]
        model: PathBuf,
        /// Training log path (default: <model>.log.json).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Visual vocabulary size k.
        #[arg(long, default_value_t = synids_core::vocabulary::DEFAULT_CLUSTERS)]
        clusters: usize,
        /// Boosting rounds T.
        #[arg(long, default_value_t = synids_core::classifier::DEFAULT_ROUNDS)]
        rounds: usize,
        /// Window length in seconds (capture mode).
        #[arg(long, default_value_t = 5.0)]
        window: f64,
        /// Canvas size in pixels (capture mode).
        #[arg(long, default_value_t = synids_core::imaging::DEFAULT_CANVAS_SIZE)]
        size: u32,
        /// Cap on descriptors per frame.
        #[arg(long, default_value_t = synids_core::descriptors::DEFAULT_MAX_DESCRIPTORS)]
        max_descriptors: usize,
        /// Pipeline config file (basis.a / basis.b override).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Worker threads for per-frame stages.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Classify every frame in a directory; one JSON line per frame.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Frame directory (PNGs plus frames.jsonl manifest).
        #[arg(long)]
        frames: PathBuf,
        /// Output predictions JSONL path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Score a model against a labeled frame directory.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Frame directory.
        #[arg(long)]
        frames: PathBuf,
        /// Manifest file name inside the frame directory (or a path).
        #[arg(long, default_value = "frames.jsonl")]
        manifest: String,
        /// Output report JSON path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Full comparative experiment: generate, train small and large, evaluate.
    Experiment {
        /// Output directory for captures, models, logs, and the report.
        #[arg(long, default_value = "experiment-out")]
        out: PathBuf,
        /// Dataset size factor applied to the reference shape
        /// (1500/500 small train, 3000/1500 large train, 1000/1000 test).
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = synids_core::vocabulary::DEFAULT_CLUSTERS)]
        clusters: usize,
        #[arg(long, default_value_t = synids_core::classifier::DEFAULT_ROUNDS)]
        rounds: usize,
        /// Window length in seconds.
        #[arg(long, default_value_t = 5.0)]
        window: f64,
        /// Canvas size in pixels. The default trades some speed for enough
        /// resolution to separate the attack's many small session polygons.
        #[arg(long, default_value_t = 512)]
        size: u32,
        /// Aggregate attack request rate in packets per second.
        #[arg(long, default_value_t = 25.0)]
        attack_pps: f64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("SYNIDS_LOG"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { spec, out, format, truth, seed } => {
            commands::gen::run(&spec, &out, format, truth.as_deref(), seed)
        }
        Command::Render { input, out, truth, window, size, diff, config, idle_timeout } => {
            commands::render::run(&commands::render::RenderArgs {
                input,
                out,
                truth,
                window,
                size,
                diff,
                config,
                idle_timeout,
            })
        }
        Command::Train {
            legitimate,
            ddos,
            capture,
            truth,
            model,
            log,
            seed,
            clusters,
            rounds,
            window,
            size,
            max_descriptors,
            config,
            jobs,
        } => commands::train::run(&commands::train::TrainArgs {
            legitimate,
            ddos,
            capture,
            truth,
            model,
            log,
            seed,
            clusters,
            rounds,
            window,
            size,
            max_descriptors,
            config,
            jobs,
        }),
        Command::Predict { model, frames, out, jobs } => {
            commands::predict::run(&model, &frames, &out, jobs)
        }
        Command::Eval { model, frames, manifest, out, jobs } => {
            commands::eval::run(&model, &frames, &manifest, &out, jobs)
        }
        Command::Experiment { out, scale, seed, clusters, rounds, window, size, attack_pps, jobs } => {
            commands::experiment::run(&commands::experiment::ExperimentArgs {
                out,
                scale,
                seed,
                clusters,
                rounds,
                window,
                size,
                attack_pps,
                jobs,
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit::exit_code(&err))
        }
    }
}
