//! Shared helpers: input sniffing, truth files, config plumbing, windows,
//! batched frame loading, and parallel descriptor extraction.

use std::path::Path;

use anyhow::{Context, Result};

use synids_core::capture::{parse_capture, parse_metadata_jsonl, PacketMeta, FEATURE_DIM};
use synids_core::config::{basis_from_config, parse_config, ConfigMap};
use synids_core::descriptors::{extract_from_frame, DescriptorSet, SiftParams};
use synids_core::imaging::{read_png_rgba, FrameManifestEntry, SessionImageFrame};
use synids_core::projection::ProjectionBasis;
use synids_core::traffic::{atomic_write, TruthInterval};

use crate::exit::CliError;

/// Converts a seconds flag to microseconds, rejecting non-positive values.
pub fn window_us_from_seconds(seconds: f64) -> Result<u64> {
    if !seconds.is_finite() || seconds <= 0.0 {
        return Err(CliError::Format(format!("window must be positive seconds, got {seconds}")).into());
    }
    Ok((seconds * 1e6).round() as u64)
}

/// Loads packets from either supported on-disk format. The binary capture
/// magic (both endiannesses) selects the capture parser; anything else is
/// treated as JSONL metadata.
pub fn load_packets(path: &Path) -> Result<Vec<PacketMeta>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let is_capture = bytes.len() >= 4
        && matches!(
            [bytes[0], bytes[1], bytes[2], bytes[3]],
            [0xd4, 0xc3, 0xb2, 0xa1] | [0xa1, 0xb2, 0xc3, 0xd4]
        );
    if is_capture {
        let read = parse_capture(&bytes);
        if let Some(err) = read.error {
            return Err(anyhow::Error::new(err).context(format!("parsing {}", path.display())));
        }
        if read.skipped.total() > 0 {
            let s = &read.skipped;
            log::warn!("{}: skipped {} records (non-ethernet {}, non-ipv4 {}, unsupported protocol {}, fragments {}, short {})",
                path.display(), s.total(), s.non_ethernet, s.non_ipv4, s.unsupported_protocol, s.fragments, s.short_record);
        }
        Ok(read.packets)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::Format(format!("{} is neither a capture nor UTF-8 JSONL", path.display())))?;
        let read = parse_metadata_jsonl(&text);
        for (line, msg) in &read.line_errors {
            log::warn!("{}:{line}: skipped line: {msg}", path.display());
        }
        if read.packets.is_empty() && !read.line_errors.is_empty() {
            return Err(CliError::Format(format!(
                "{}: every line failed to parse as packet metadata",
                path.display()
            ))
            .into());
        }
        Ok(read.packets)
    }
}

/// Reads a ground-truth intervals JSON array.
pub fn load_truth(path: &Path) -> Result<Vec<TruthInterval>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let truth: Vec<TruthInterval> = serde_json::from_str(&text)
        .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    Ok(truth)
}

/// Writes a ground-truth intervals JSON array atomically.
pub fn save_truth(path: &Path, truth: &[TruthInterval]) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(truth)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Serializes any value as pretty JSON and writes it atomically.
pub fn save_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Parses an optional pipeline config file.
pub fn load_config(path: Option<&Path>) -> Result<ConfigMap> {
    match path {
        None => Ok(ConfigMap::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(parse_config(&text)?)
        }
    }
}

/// Projection basis from an optional config file (default basis otherwise).
pub fn basis_from(config: Option<&Path>) -> Result<ProjectionBasis> {
    let map = load_config(config)?;
    Ok(basis_from_config(&map, FEATURE_DIM)?)
}

/// Reads a frames.jsonl-style manifest from an arbitrary path.
pub fn read_manifest_file(path: &Path) -> Result<Vec<FrameManifestEntry>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: FrameManifestEntry = serde_json::from_str(line)
            .map_err(|e| CliError::Format(format!("{}:{}: {e}", path.display(), idx + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

/// Loads the PNGs behind a batch of manifest entries, labels from the
/// entries. Keeps memory proportional to the batch, not the directory.
pub fn frames_for_entries(
    dir: &Path,
    entries: &[FrameManifestEntry],
) -> Result<Vec<SessionImageFrame>> {
    let mut frames = Vec::with_capacity(entries.len());
    for entry in entries {
        let path = dir.join(&entry.file);
        let (width, height, pixels) =
            read_png_rgba(&path).with_context(|| format!("reading {}", path.display()))?;
        frames.push(SessionImageFrame {
            width,
            height,
            pixels,
            window_start: entry.window_start_us,
            window_end: entry.window_end_us,
            polygons: Vec::new(),
            label: entry.label,
        });
    }
    Ok(frames)
}

/// Extracts one descriptor set per frame, splitting the work over `jobs`
/// threads. Chunk boundaries depend only on the frame count, and results are
/// stitched back in frame order, so output is independent of `jobs`.
pub fn extract_sets(
    frames: &[SessionImageFrame],
    params: &SiftParams,
    jobs: usize,
) -> Vec<DescriptorSet> {
    let jobs = jobs.max(1).min(frames.len().max(1));
    if jobs == 1 {
        return frames.iter().map(|f| extract_from_frame(f, params)).collect();
    }
    let chunk = frames.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = frames
            .chunks(chunk)
            .map(|span| scope.spawn(move || span.iter().map(|f| extract_from_frame(f, params)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("extraction worker panicked"))
            .collect()
    })
}
