//! `synids predict` — classify every frame in a directory, one JSON line
//! per frame.

use std::path::Path;

use anyhow::Result;
use serde::Serialize;

use synids_core::imaging::{read_manifest, FrameLabel};
use synids_core::model_io::load_model;
use synids_core::pipeline::predict_frames;
use synids_core::traffic::atomic_write;

use crate::exit::CliError;
use crate::util;

/// Frames per load-predict batch: bounds memory without affecting results
/// (prediction is per-frame).
const BATCH: usize = 64;

#[derive(Serialize)]
struct PredictionLine<'a> {
    frame: &'a str,
    label: FrameLabel,
    score: f64,
    confidence: f64,
}

pub fn run(model_path: &Path, frames_dir: &Path, out: &Path, jobs: usize) -> Result<()> {
    if !frames_dir.join("frames.jsonl").exists() {
        return Err(CliError::Empty(format!(
            "{} has no frames.jsonl manifest",
            frames_dir.display()
        ))
        .into());
    }
    let manifest = read_manifest(frames_dir)?;
    if manifest.is_empty() {
        return Err(CliError::Empty(format!("{} lists no frames", frames_dir.display())).into());
    }
    let model = load_model(model_path)?;
    log::info!(
        "predict: {} frames from {}, jobs {}",
        manifest.len(),
        frames_dir.display(),
        jobs
    );

    let mut lines: Vec<u8> = Vec::new();
    for batch in manifest.chunks(BATCH) {
        let frames = util::frames_for_entries(frames_dir, batch)?;
        let preds = predict_frames(&model, &frames, jobs);
        for (entry, p) in batch.iter().zip(&preds) {
            serde_json::to_writer(
                &mut lines,
                &PredictionLine {
                    frame: &entry.file,
                    label: p.label,
                    score: p.score,
                    confidence: p.confidence,
                },
            )?;
            lines.push(b'\n');
        }
    }
    atomic_write(out, &lines)?;
    println!("wrote {} predictions to {}", manifest.len(), out.display());
    Ok(())
}
