//! `synids render` — turn a capture into per-window session-polygon frames.

use std::path::PathBuf;

use anyhow::Result;

use synids_core::imaging::write_frames;
use synids_core::pipeline::{label_frames_by_truth, render_packets, RenderOptions};

use crate::exit::CliError;
use crate::util;

pub struct RenderArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    pub truth: Option<PathBuf>,
    pub window: f64,
    pub size: u32,
    pub diff: bool,
    pub config: Option<PathBuf>,
    pub idle_timeout: f64,
}

pub fn run(args: &RenderArgs) -> Result<()> {
    if args.size == 0 {
        return Err(CliError::Format("--size must be positive".into()).into());
    }
    let packets = util::load_packets(&args.input)?;
    if packets.is_empty() {
        return Err(
            CliError::Empty(format!("{} contains no usable packets", args.input.display())).into(),
        );
    }
    let basis = util::basis_from(args.config.as_deref())?;
    let opts = RenderOptions {
        basis,
        window_us: util::window_us_from_seconds(args.window)?,
        size: args.size,
        diff: args.diff,
        idle_timeout_us: util::window_us_from_seconds(args.idle_timeout)?,
    };
    log::info!(
        "render: {} packets, window {}s, size {}, diff {}, idle timeout {}s",
        packets.len(),
        args.window,
        args.size,
        args.diff,
        args.idle_timeout
    );
    let (mut frames, _cal) = render_packets(&packets, &opts)?;
    if let Some(tp) = &args.truth {
        let truth = util::load_truth(tp)?;
        label_frames_by_truth(&mut frames, &truth);
    }
    let manifest = write_frames(&frames, &args.out)?;
    println!(
        "rendered {} frames ({}x{} px, {}s windows) to {}",
        manifest.len(),
        args.size,
        args.size,
        args.window,
        args.out.display()
    );
    Ok(())
}
