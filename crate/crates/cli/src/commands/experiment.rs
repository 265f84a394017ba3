//! `synids experiment` — one-command comparative study. Synthesizes labeled
//! traffic, trains the classifier on a small and a large training set, and
//! scores both models on one shared held-out test set.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use synids_core::capture::DEFAULT_IDLE_TIMEOUT_US;
use synids_core::classifier::TrainedModel;
use synids_core::derive_seed;
use synids_core::descriptors::{DescriptorSet, SiftParams, DEFAULT_MAX_DESCRIPTORS};
use synids_core::evaluation::{report_from_counts, EvalReport};
use synids_core::imaging::FrameLabel;
use synids_core::model_io::save_model;
use synids_core::pipeline::{
    predict_set, render_packets, train_from_sets, RenderOptions, TrainOptions, TrainingLog,
};
use synids_core::traffic::{atomic_write, generate, write_capture, CaptureFormat, ScenarioSpec};

use crate::exit::CliError;
use crate::util;

pub struct ExperimentArgs {
    pub out: PathBuf,
    pub scale: f64,
    pub seed: u64,
    pub clusters: usize,
    pub rounds: usize,
    pub window: f64,
    pub size: u32,
    pub attack_pps: f64,
    pub jobs: usize,
}

/// Reference dataset shape, scaled by `--scale`: 1500/500 small training
/// set, 3000/1500 large, 1000/1000 held-out test set.
const SMALL_LEGIT: usize = 1500;
const SMALL_DDOS: usize = 500;
const LARGE_LEGIT: usize = 3000;
const LARGE_DDOS: usize = 1500;
const TEST_LEGIT: usize = 1000;
const TEST_DDOS: usize = 1000;

/// Frames synthesized per shard capture. Sharding keeps peak memory
/// proportional to one shard regardless of the scale factor.
const SHARD_FRAMES: usize = 100;

#[derive(Serialize, Clone, Copy)]
struct ClassCounts {
    legitimate: usize,
    ddos: usize,
}

#[derive(Serialize, Clone, Copy)]
struct Counts {
    train_small: ClassCounts,
    train_large: ClassCounts,
    test: ClassCounts,
}

#[derive(Serialize)]
struct ExperimentReport {
    scale: f64,
    seed: u64,
    window_s: f64,
    size: u32,
    clusters: usize,
    rounds: usize,
    attack_pps: f64,
    counts: Counts,
    small: EvalReport,
    large: EvalReport,
}

#[derive(Serialize)]
struct ExpLogFile<'a> {
    options: ExpOptions<'a>,
    log: &'a TrainingLog,
}

#[derive(Serialize)]
struct ExpOptions<'a> {
    training_set: &'a str,
    master_seed: u64,
    clusters: usize,
    rounds: usize,
    window_us: u64,
    size: u32,
    max_descriptors: usize,
    attack_pps: f64,
    scale: f64,
    jobs: usize,
}

struct Ctx {
    render: RenderOptions,
    params: SiftParams,
    captures: PathBuf,
    window_s: f64,
}

pub fn run(args: &ExperimentArgs) -> Result<()> {
    if !args.scale.is_finite() || args.scale <= 0.0 {
        return Err(CliError::Format(format!("--scale must be positive, got {}", args.scale)).into());
    }
    if args.size == 0 {
        return Err(CliError::Format("--size must be positive".into()).into());
    }
    if !args.attack_pps.is_finite() || args.attack_pps <= 0.0 {
        return Err(
            CliError::Format(format!("--attack-pps must be positive, got {}", args.attack_pps)).into(),
        );
    }
    let window_us = util::window_us_from_seconds(args.window)?;
    let started = Instant::now();

    let scaled = |n: usize| ((n as f64 * args.scale).round() as usize).max(1);
    let counts = Counts {
        train_small: ClassCounts { legitimate: scaled(SMALL_LEGIT), ddos: scaled(SMALL_DDOS) },
        train_large: ClassCounts { legitimate: scaled(LARGE_LEGIT), ddos: scaled(LARGE_DDOS) },
        test: ClassCounts { legitimate: scaled(TEST_LEGIT), ddos: scaled(TEST_DDOS) },
    };

    let captures = args.out.join("captures");
    std::fs::create_dir_all(&captures)
        .with_context(|| format!("creating {}", captures.display()))?;
    let ctx = Ctx {
        render: RenderOptions {
            window_us,
            size: args.size,
            diff: false,
            idle_timeout_us: DEFAULT_IDLE_TIMEOUT_US,
            ..RenderOptions::default()
        },
        params: SiftParams::for_rendered_frames(),
        captures,
        window_s: args.window,
    };
    log::info!(
        "experiment: scale {}, seed {}, k {}, rounds {}, window {}s, size {}, attack {} pps, jobs {}",
        args.scale, args.seed, args.clusters, args.rounds, args.window, args.size,
        args.attack_pps, args.jobs
    );

    let (small_sets, small_labels) = collect_set(args, &ctx, "train-small", counts.train_small)?;
    let (large_sets, large_labels) = collect_set(args, &ctx, "train-large", counts.train_large)?;
    let (test_sets, test_labels) = collect_set(args, &ctx, "test", counts.test)?;

    let model_small = fit(args, &ctx, "small", &small_sets, &small_labels)?;
    drop(small_sets);
    let model_large = fit(args, &ctx, "large", &large_sets, &large_labels)?;
    drop(large_sets);

    println!("evaluating both models on the shared test set");
    let report_small = score(&model_small, &test_sets, &test_labels)?;
    let report_large = score(&model_large, &test_sets, &test_labels)?;
    if report_large.dr < report_small.dr {
        log::warn!(
            "large training set scored DR {:.4} below small's {:.4}; a different seed may separate them",
            report_large.dr,
            report_small.dr
        );
    }

    let report = ExperimentReport {
        scale: args.scale,
        seed: args.seed,
        window_s: args.window,
        size: args.size,
        clusters: args.clusters,
        rounds: args.rounds,
        attack_pps: args.attack_pps,
        counts,
        small: report_small,
        large: report_large,
    };
    util::save_json(&args.out.join("report.json"), &report)?;
    let text = table_text(&report);
    atomic_write(&args.out.join("report.txt"), text.as_bytes())?;

    print!("{text}");
    println!(
        "wrote {} (finished in {:.1}s)",
        args.out.join("report.json").display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

/// Synthesizes one legitimate and one ddos descriptor collection and returns
/// them concatenated (legitimate first) with parallel labels.
fn collect_set(
    args: &ExperimentArgs,
    ctx: &Ctx,
    name: &str,
    counts: ClassCounts,
) -> Result<(Vec<DescriptorSet>, Vec<FrameLabel>)> {
    println!(
        "synthesizing {name}: {} legitimate + {} ddos frames",
        counts.legitimate, counts.ddos
    );
    let mut sets = collect_class(args, ctx, &format!("{name}-legit"), FrameLabel::Legitimate, counts.legitimate)?;
    sets.extend(collect_class(args, ctx, &format!("{name}-ddos"), FrameLabel::Ddos, counts.ddos)?);
    let mut labels = vec![FrameLabel::Legitimate; counts.legitimate];
    labels.extend(std::iter::repeat(FrameLabel::Ddos).take(counts.ddos));
    Ok((sets, labels))
}

/// Generates shard captures for one class until `count` frames' descriptors
/// are collected. Every shard is written to the captures directory so the
/// run's inputs are inspectable and replayable.
fn collect_class(
    args: &ExperimentArgs,
    ctx: &Ctx,
    name: &str,
    label: FrameLabel,
    count: usize,
) -> Result<Vec<DescriptorSet>> {
    let mut sets: Vec<DescriptorSet> = Vec::with_capacity(count);
    let mut shard = 0usize;
    while sets.len() < count {
        let target = (count - sets.len()).min(SHARD_FRAMES);
        // One spare window up front (skipped as ramp-up) and padding at the
        // tail so the shard always yields `target` full windows.
        let duration_s = (target as f64 + 3.0) * ctx.window_s;
        let shard_seed = derive_seed(args.seed, &format!("exp.{name}.shard{shard}"));
        let spec = match label {
            FrameLabel::Legitimate => ScenarioSpec::background_only(duration_s, shard_seed),
            FrameLabel::Ddos => {
                ScenarioSpec::with_attack(duration_s, 0.0, duration_s, args.attack_pps, shard_seed)
            }
            FrameLabel::Unlabeled => unreachable!("experiment classes are always labeled"),
        };
        let (packets, truth) = generate(&spec)?;
        let stem = format!("{name}-{shard:03}");
        write_capture(&packets, &ctx.captures.join(format!("{stem}.capture")), CaptureFormat::Capture)?;
        util::save_truth(&ctx.captures.join(format!("{stem}.truth.json")), &truth)?;

        let (frames, _) = render_packets(&packets, &ctx.render)?;
        let start = usize::from(frames.len() > target);
        let end = (start + target).min(frames.len());
        let batch = util::extract_sets(&frames[start..end], &ctx.params, args.jobs);
        if batch.is_empty() {
            return Err(CliError::Empty(format!("shard {stem} produced no frames")).into());
        }
        sets.extend(batch);
        log::info!("{stem}: collected {}/{} frames", sets.len().min(count), count);
        shard += 1;
    }
    sets.truncate(count);
    Ok(sets)
}

fn fit(
    args: &ExperimentArgs,
    ctx: &Ctx,
    which: &str,
    sets: &[DescriptorSet],
    labels: &[FrameLabel],
) -> Result<TrainedModel> {
    println!("training {which} model on {} frames", sets.len());
    let opts = TrainOptions {
        seed: derive_seed(args.seed, &format!("exp.train-{which}")),
        clusters: args.clusters,
        rounds: args.rounds,
        window_us: ctx.render.window_us,
        size: args.size,
        max_descriptors: DEFAULT_MAX_DESCRIPTORS,
        basis: ctx.render.basis.clone(),
    };
    let (model, log) = train_from_sets(sets, labels, &opts)?;
    save_model(&model, &args.out.join(format!("model-{which}.bin")))?;
    util::save_json(
        &args.out.join(format!("model-{which}.log.json")),
        &ExpLogFile {
            options: ExpOptions {
                training_set: which,
                master_seed: args.seed,
                clusters: args.clusters,
                rounds: args.rounds,
                window_us: ctx.render.window_us,
                size: args.size,
                max_descriptors: DEFAULT_MAX_DESCRIPTORS,
                attack_pps: args.attack_pps,
                scale: args.scale,
                jobs: args.jobs,
            },
            log: &log,
        },
    )?;
    Ok(model)
}

fn score(
    model: &TrainedModel,
    sets: &[DescriptorSet],
    labels: &[FrameLabel],
) -> Result<EvalReport> {
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (set, truth) in sets.iter().zip(labels) {
        let predicted = predict_set(model, set).label;
        match (predicted, truth) {
            (FrameLabel::Ddos, FrameLabel::Ddos) => tp += 1,
            (FrameLabel::Ddos, FrameLabel::Legitimate) => fp += 1,
            (FrameLabel::Legitimate, FrameLabel::Legitimate) => tn += 1,
            (FrameLabel::Legitimate, FrameLabel::Ddos) => fn_ += 1,
            _ => unreachable!("experiment labels are always set"),
        }
    }
    Ok(report_from_counts(tp, fp, tn, fn_, "test", model.metadata.clone())?)
}

fn table_text(r: &ExperimentReport) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "comparative experiment: scale {}, seed {}, window {}s, size {}, k {}, rounds {}, attack {} pps\n",
        r.scale, r.seed, r.window_s, r.size, r.clusters, r.rounds, r.attack_pps
    ));
    s.push_str(&format!(
        "test set: {} legitimate + {} ddos frames\n\n",
        r.counts.test.legitimate, r.counts.test.ddos
    ));
    s.push_str("training set    legit    ddos       DR      FPR       CR\n");
    for (name, c, rep) in [
        ("small", r.counts.train_small, &r.small),
        ("large", r.counts.train_large, &r.large),
    ] {
        s.push_str(&format!(
            "{name:<14} {:>6}  {:>6}   {:.4}   {:.4}   {:.4}\n",
            c.legitimate, c.ddos, rep.dr, rep.fpr, rep.cr
        ));
    }
    s
}
