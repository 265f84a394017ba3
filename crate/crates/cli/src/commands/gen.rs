//! `synids gen` — synthesize a labeled capture from a scenario file.

use std::path::Path;

use anyhow::{Context, Result};

use synids_core::config::{parse_config, scenario_from_config};
use synids_core::traffic::{generate, write_capture, CaptureFormat};

use crate::util;
use crate::FormatArg;

pub fn run(
    spec_path: &Path,
    out: &Path,
    format: FormatArg,
    truth_path: Option<&Path>,
    seed: Option<u64>,
) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))?;
    let map = parse_config(&text)?;
    let mut scenario = scenario_from_config(&map)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    log::info!(
        "scenario: duration {}s, seed {}, attack {}",
        scenario.duration_s,
        scenario.seed,
        if scenario.attack.enabled {
            format!(
                "{}..{}s at {} pps over {} clients",
                scenario.attack.start_s,
                scenario.attack.end_s,
                scenario.attack.request_rate_pps,
                scenario.attack.client_count
            )
        } else {
            "disabled".into()
        }
    );

    let (packets, truth) = generate(&scenario)?;
    let fmt = match format {
        FormatArg::Capture => CaptureFormat::Capture,
        FormatArg::Jsonl => CaptureFormat::Jsonl,
    };
    write_capture(&packets, out, fmt)?;
    if let Some(tp) = truth_path {
        util::save_truth(tp, &truth)?;
    }
    println!(
        "wrote {} packets to {} ({} attack interval{})",
        packets.len(),
        out.display(),
        truth.len(),
        if truth.len() == 1 { "" } else { "s" }
    );
    Ok(())
}
