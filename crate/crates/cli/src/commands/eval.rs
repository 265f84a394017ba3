//! `synids eval` — score a model against a labeled frame directory.

use std::path::{Path, PathBuf};

use anyhow::Result;

use synids_core::evaluation::{report_from_counts, EvaluationError};
use synids_core::imaging::FrameLabel;
use synids_core::model_io::load_model;
use synids_core::pipeline::predict_frames;

use crate::exit::CliError;
use crate::util;

const BATCH: usize = 64;

pub fn run(
    model_path: &Path,
    frames_dir: &Path,
    manifest: &str,
    out: &Path,
    jobs: usize,
) -> Result<()> {
    let manifest_path = if manifest.contains('/') || manifest.contains(std::path::MAIN_SEPARATOR) {
        PathBuf::from(manifest)
    } else {
        frames_dir.join(manifest)
    };
    if !manifest_path.exists() {
        return Err(
            CliError::Empty(format!("manifest {} not found", manifest_path.display())).into(),
        );
    }
    let entries = util::read_manifest_file(&manifest_path)?;
    if entries.is_empty() {
        return Err(CliError::Empty(format!("{} lists no frames", manifest_path.display())).into());
    }
    for (i, entry) in entries.iter().enumerate() {
        if entry.label == FrameLabel::Unlabeled {
            return Err(EvaluationError::UnlabeledFrame(i).into());
        }
    }

    let model = load_model(model_path)?;
    log::info!(
        "eval: {} frames from {}, jobs {}",
        entries.len(),
        frames_dir.display(),
        jobs
    );
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for batch in entries.chunks(BATCH) {
        let frames = util::frames_for_entries(frames_dir, batch)?;
        let preds = predict_frames(&model, &frames, jobs);
        for (entry, p) in batch.iter().zip(&preds) {
            match (p.label, entry.label) {
                (FrameLabel::Ddos, FrameLabel::Ddos) => tp += 1,
                (FrameLabel::Ddos, FrameLabel::Legitimate) => fp += 1,
                (FrameLabel::Legitimate, FrameLabel::Legitimate) => tn += 1,
                (FrameLabel::Legitimate, FrameLabel::Ddos) => fn_ += 1,
                _ => unreachable!("labels were checked above; predictions are never unlabeled"),
            }
        }
    }

    let dataset = frames_dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| frames_dir.display().to_string());
    let report = report_from_counts(tp, fp, tn, fn_, &dataset, model.metadata.clone())?;
    util::save_json(out, &report)?;

    println!("dataset {dataset}: {} frames", entries.len());
    println!(
        "  TP {tp}  FP {fp}  TN {tn}  FN {fn_}\n  DR {:.4}  FPR {:.4}  CR {:.4}",
        report.dr, report.fpr, report.cr
    );
    println!("wrote {}", out.display());
    Ok(())
}
