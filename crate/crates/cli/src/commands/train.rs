//! `synids train` — fit the boosted classifier from labeled frame
//! directories or from a capture plus ground truth.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;

use synids_core::descriptors::SiftParams;
use synids_core::imaging::{FrameLabel, SessionImageFrame};
use synids_core::model_io::save_model;
use synids_core::pipeline::{
    label_frames_by_truth, load_frames_dir, render_packets, set_labels, train_from_sets,
    RenderOptions, TrainOptions, TrainingLog,
};

use crate::exit::CliError;
use crate::util;

pub struct TrainArgs {
    pub legitimate: Option<PathBuf>,
    pub ddos: Option<PathBuf>,
    pub capture: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub model: PathBuf,
    pub log: Option<PathBuf>,
    pub seed: u64,
    pub clusters: usize,
    pub rounds: usize,
    pub window: f64,
    pub size: u32,
    pub max_descriptors: usize,
    pub config: Option<PathBuf>,
    pub jobs: usize,
}

/// Everything that shaped the run, persisted next to the training log so a
/// model can be reproduced from the log file alone.
#[derive(Serialize)]
struct EffectiveOptions {
    mode: &'static str,
    legitimate: Option<String>,
    ddos: Option<String>,
    capture: Option<String>,
    truth: Option<String>,
    config: Option<String>,
    seed: u64,
    clusters: usize,
    rounds: usize,
    window_us: u64,
    size: u32,
    max_descriptors: usize,
    jobs: usize,
}

#[derive(Serialize)]
struct TrainLogFile {
    options: EffectiveOptions,
    log: TrainingLog,
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let (frames, mode) = match (&args.legitimate, &args.ddos, &args.capture, &args.truth) {
        (Some(legit), Some(ddos), None, None) => (frames_from_dirs(legit, ddos)?, "frames"),
        (None, None, Some(capture), Some(truth)) => {
            (frames_from_capture(args, capture, truth)?, "capture")
        }
        _ => {
            return Err(CliError::Empty(
                "no training input: pass --legitimate with --ddos, or --capture with --truth"
                    .into(),
            )
            .into())
        }
    };

    // Frame-dir mode records the geometry the frames were actually rendered
    // with; capture mode records the flags that drove rendering.
    let size = frames.first().map_or(args.size, |f| f.width);
    let window_us = match frames.first() {
        Some(f) if f.window_end > f.window_start => f.window_end - f.window_start,
        _ => util::window_us_from_seconds(args.window)?,
    };

    let labels: Vec<FrameLabel> = frames.iter().map(|f| f.label).collect();
    let params = SiftParams {
        max_descriptors: args.max_descriptors,
        ..SiftParams::for_rendered_frames()
    };
    log::info!(
        "train: {} frames ({} legitimate, {} ddos), seed {}, k {}, rounds {}, jobs {}",
        frames.len(),
        labels.iter().filter(|&&l| l == FrameLabel::Legitimate).count(),
        labels.iter().filter(|&&l| l == FrameLabel::Ddos).count(),
        args.seed,
        args.clusters,
        args.rounds,
        args.jobs
    );
    let sets = util::extract_sets(&frames, &params, args.jobs);
    drop(frames);

    let opts = TrainOptions {
        seed: args.seed,
        clusters: args.clusters,
        rounds: args.rounds,
        window_us,
        size,
        max_descriptors: args.max_descriptors,
        basis: util::basis_from(args.config.as_deref())?,
    };
    let (model, log) = train_from_sets(&sets, &labels, &opts)?;
    save_model(&model, &args.model)?;

    let log_path = args.log.clone().unwrap_or_else(|| default_log_path(&args.model));
    let display = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    util::save_json(
        &log_path,
        &TrainLogFile {
            options: EffectiveOptions {
                mode,
                legitimate: display(&args.legitimate),
                ddos: display(&args.ddos),
                capture: display(&args.capture),
                truth: display(&args.truth),
                config: display(&args.config),
                seed: args.seed,
                clusters: args.clusters,
                rounds: args.rounds,
                window_us,
                size,
                max_descriptors: args.max_descriptors,
                jobs: args.jobs,
            },
            log: log.clone(),
        },
    )?;

    println!(
        "trained k={} model, {}/{} boosting rounds kept, {} descriptors from {} legitimate + {} ddos frames",
        log.k, log.rounds_kept, log.rounds_requested, log.total_descriptors,
        log.legitimate_images, log.ddos_images
    );
    println!("wrote {} and {}", args.model.display(), log_path.display());
    Ok(())
}

fn default_log_path(model: &Path) -> PathBuf {
    let mut s: OsString = model.as_os_str().to_os_string();
    s.push(".log.json");
    PathBuf::from(s)
}

fn frames_from_dirs(legit: &Path, ddos: &Path) -> Result<Vec<SessionImageFrame>> {
    let mut frames = load_labeled_dir(legit, FrameLabel::Legitimate)?;
    frames.extend(load_labeled_dir(ddos, FrameLabel::Ddos)?);
    Ok(frames)
}

fn load_labeled_dir(dir: &Path, label: FrameLabel) -> Result<Vec<SessionImageFrame>> {
    if !dir.join("frames.jsonl").exists() {
        return Err(CliError::Empty(format!(
            "{} has no frames.jsonl manifest",
            dir.display()
        ))
        .into());
    }
    let mut frames = load_frames_dir(dir)?;
    if frames.is_empty() {
        return Err(CliError::Empty(format!("{} lists no frames", dir.display())).into());
    }
    set_labels(&mut frames, label);
    Ok(frames)
}

fn frames_from_capture(
    args: &TrainArgs,
    capture: &Path,
    truth_path: &Path,
) -> Result<Vec<SessionImageFrame>> {
    let packets = util::load_packets(capture)?;
    if packets.is_empty() {
        return Err(
            CliError::Empty(format!("{} contains no usable packets", capture.display())).into(),
        );
    }
    let truth = util::load_truth(truth_path)?;
    let opts = RenderOptions {
        basis: util::basis_from(args.config.as_deref())?,
        window_us: util::window_us_from_seconds(args.window)?,
        size: args.size,
        ..RenderOptions::default()
    };
    let (mut frames, _) = render_packets(&packets, &opts)?;
    label_frames_by_truth(&mut frames, &truth);
    for (class, label) in [("ddos", FrameLabel::Ddos), ("legitimate", FrameLabel::Legitimate)] {
        if !frames.iter().any(|f| f.label == label) {
            return Err(CliError::Empty(format!(
                "capture plus truth produced no {class} frames"
            ))
            .into());
        }
    }
    Ok(frames)
}
