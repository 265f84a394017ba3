//! End-to-end orchestration: packets → frames → descriptors → vocabulary →
//! boosted classifier, plus the prediction path. Every stage's randomness is
//! derived from one master seed so a whole run is reproducible from its
//! options alone.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::{group_sessions, PacketMeta, DEFAULT_IDLE_TIMEOUT_US, FEATURE_DIM};
use crate::classifier::{
    adaboost_train, predict, ClassifierError, ModelMetadata, Prediction, TrainedModel,
    DEFAULT_ROUNDS,
};
use crate::derive_seed;
use crate::descriptors::{extract_from_frame, DescriptorSet, SiftParams, DEFAULT_MAX_DESCRIPTORS};
use crate::imaging::{
    diff_frames, frame_stream, read_manifest, read_png_rgba, CanvasCalibration, FrameLabel,
    ImagingError, SessionImageFrame, DEFAULT_CANVAS_SIZE, DEFAULT_WINDOW_US,
};
use crate::projection::{default_basis, ProjectionBasis, ProjectionError};
use crate::traffic::TruthInterval;
use crate::vocabulary::{
    build_frequency_matrix, kmeans, tfidf_weight, bow_vector, Vocabulary, VocabularyError,
    DEFAULT_CLUSTERS,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Vocabulary(#[from] VocabularyError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    EmptyInput(String),
}

/// Rendering stage options.
#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub basis: ProjectionBasis,
    pub window_us: u64,
    pub size: u32,
    /// Emit per-pixel frame-to-frame differences instead of raw frames.
    pub diff: bool,
    pub idle_timeout_us: u64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            basis: default_basis(FEATURE_DIM).expect("default basis is valid"),
            window_us: DEFAULT_WINDOW_US,
            size: DEFAULT_CANVAS_SIZE,
            diff: false,
            idle_timeout_us: DEFAULT_IDLE_TIMEOUT_US,
        }
    }
}

/// Renders packet metadata into the frame sequence plus the calibration the
/// frames were drawn with.
pub fn render_packets(
    packets: &[PacketMeta],
    opts: &RenderOptions,
) -> Result<(Vec<SessionImageFrame>, CanvasCalibration), PipelineError> {
    let cal = CanvasCalibration::for_basis(&opts.basis, opts.size, opts.size);
    let sessions = group_sessions(packets, opts.idle_timeout_us);
    let frames = frame_stream(&sessions, &opts.basis, &cal, opts.window_us)?;
    let frames = if opts.diff { diff_frames(&frames) } else { frames };
    Ok((frames, cal))
}

/// Labels every frame by overlap with the attack ground truth: a window that
/// intersects any truth interval is ddos, all others legitimate.
pub fn label_frames_by_truth(frames: &mut [SessionImageFrame], truth: &[TruthInterval]) {
    for frame in frames {
        let hit = truth
            .iter()
            .any(|iv| iv.overlaps(frame.window_start, frame.window_end.saturating_sub(1)));
        frame.label = if hit { FrameLabel::Ddos } else { FrameLabel::Legitimate };
    }
}

pub fn set_labels(frames: &mut [SessionImageFrame], label: FrameLabel) {
    for frame in frames {
        frame.label = label;
    }
}

/// Training stage options.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub seed: u64,
    pub clusters: usize,
    pub rounds: usize,
    pub window_us: u64,
    pub size: u32,
    pub max_descriptors: usize,
    pub basis: ProjectionBasis,
}

impl TrainOptions {
    pub fn new(seed: u64) -> Self {
        TrainOptions {
            seed,
            clusters: DEFAULT_CLUSTERS,
            rounds: DEFAULT_ROUNDS,
            window_us: DEFAULT_WINDOW_US,
            size: DEFAULT_CANVAS_SIZE,
            max_descriptors: DEFAULT_MAX_DESCRIPTORS,
            basis: default_basis(FEATURE_DIM).expect("default basis is valid"),
        }
    }
}

/// Everything the training run decided, for the training log file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingLog {
    pub seed: u64,
    pub k: usize,
    pub rounds_requested: usize,
    pub rounds_kept: usize,
    pub legitimate_images: usize,
    pub ddos_images: usize,
    /// Descriptors extracted per input frame, in frame order.
    pub descriptor_counts: Vec<usize>,
    pub total_descriptors: usize,
    pub kmeans_iterations: usize,
    pub kmeans_final_objective: f64,
    /// Weighted error of each kept boosting round.
    pub round_errors: Vec<f64>,
    pub alphas: Vec<f64>,
}

/// Steps 1–7 of the training algorithm over labeled frames: descriptors,
/// vocabulary, frequency matrix, tf-idf, boosted naive Bayes.
pub fn train_frames(
    frames: &[SessionImageFrame],
    opts: &TrainOptions,
) -> Result<(TrainedModel, TrainingLog), PipelineError> {
    let params = SiftParams {
        max_descriptors: opts.max_descriptors,
        ..SiftParams::for_rendered_frames()
    };
    let labels: Vec<FrameLabel> = frames.iter().map(|f| f.label).collect();
    let sets: Vec<DescriptorSet> = frames.iter().map(|f| extract_from_frame(f, &params)).collect();
    train_from_sets(&sets, &labels, opts)
}

/// Training from already-extracted descriptor sets, one per frame. Lets
/// callers stream extraction and discard pixel buffers before training.
/// `sets` and `labels` must be parallel.
pub fn train_from_sets(
    sets: &[DescriptorSet],
    labels: &[FrameLabel],
    opts: &TrainOptions,
) -> Result<(TrainedModel, TrainingLog), PipelineError> {
    assert_eq!(sets.len(), labels.len(), "one label per descriptor set");
    if sets.is_empty() {
        return Err(PipelineError::EmptyInput("no training frames".into()));
    }
    let descriptor_counts: Vec<usize> = sets.iter().map(DescriptorSet::len).collect();

    let points: Vec<&[f32]> = sets
        .iter()
        .flat_map(|s| s.descriptors.iter().map(|d| d.values.as_slice()))
        .collect();
    let vocab_seed = derive_seed(opts.seed, "vocabulary");
    let km = kmeans(&points, opts.clusters, vocab_seed)?;

    let matrix = build_frequency_matrix(&sets, &labels, &km.centroids);
    let (rows, idf) = tfidf_weight(&matrix);
    let ensemble = adaboost_train(&rows, &labels, opts.rounds, derive_seed(opts.seed, "boost"))?;

    let legitimate_images = labels.iter().filter(|&&l| l == FrameLabel::Legitimate).count();
    let ddos_images = labels.iter().filter(|&&l| l == FrameLabel::Ddos).count();
    let log = TrainingLog {
        seed: opts.seed,
        k: opts.clusters,
        rounds_requested: opts.rounds,
        rounds_kept: ensemble.learners.len(),
        legitimate_images,
        ddos_images,
        descriptor_counts,
        total_descriptors: points.len(),
        kmeans_iterations: km.iterations,
        kmeans_final_objective: *km.objective_history.last().expect("history is never empty"),
        round_errors: ensemble.round_errors.clone(),
        alphas: ensemble.alphas.clone(),
    };
    let model = TrainedModel {
        basis: opts.basis.clone(),
        calibration: CanvasCalibration::for_basis(&opts.basis, opts.size, opts.size),
        vocabulary: Vocabulary {
            centroids: km.centroids,
            k: opts.clusters,
            idf,
            rng_seed: vocab_seed,
        },
        ensemble,
        metadata: ModelMetadata {
            seed: opts.seed,
            k: opts.clusters,
            rounds: opts.rounds,
            legitimate_images,
            ddos_images,
            window_us: opts.window_us,
            canvas_size: opts.size,
            max_descriptors: opts.max_descriptors,
        },
    };
    Ok((model, log))
}

/// Runs the prediction pipeline on one frame.
pub fn predict_frame(model: &TrainedModel, frame: &SessionImageFrame) -> Prediction {
    let params = SiftParams {
        max_descriptors: model.metadata.max_descriptors,
        ..SiftParams::for_rendered_frames()
    };
    predict_set(model, &extract_from_frame(frame, &params))
}

/// Classifies an already-extracted descriptor set.
pub fn predict_set(model: &TrainedModel, set: &DescriptorSet) -> Prediction {
    let bow = bow_vector(set, &model.vocabulary);
    predict(model, &bow).expect("bow length matches the model vocabulary")
}

/// Predicts every frame, splitting the work over `jobs` threads. Output
/// order and content are independent of the thread count.
pub fn predict_frames(
    model: &TrainedModel,
    frames: &[SessionImageFrame],
    jobs: usize,
) -> Vec<Prediction> {
    let jobs = jobs.max(1).min(frames.len().max(1));
    if jobs == 1 {
        return frames.iter().map(|f| predict_frame(model, f)).collect();
    }
    // Fixed contiguous chunking: each worker owns a deterministic slice, and
    // results are stitched back in frame order.
    let chunk = frames.len().div_ceil(jobs);
    let mut out: Vec<Option<Prediction>> = vec![None; frames.len()];
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (w, span) in frames.chunks(chunk).enumerate() {
            handles.push((
                w * chunk,
                scope.spawn(move || span.iter().map(|f| predict_frame(model, f)).collect::<Vec<_>>()),
            ));
        }
        for (base, handle) in handles {
            for (i, p) in handle.join().expect("prediction worker panicked").into_iter().enumerate() {
                out[base + i] = Some(p);
            }
        }
    });
    out.into_iter().map(|p| p.expect("every frame predicted")).collect()
}

/// Loads a rendered frame directory (frames.jsonl + PNGs) back into memory.
pub fn load_frames_dir(dir: &Path) -> Result<Vec<SessionImageFrame>, PipelineError> {
    let manifest = read_manifest(dir)?;
    let mut frames = Vec::with_capacity(manifest.len());
    for entry in &manifest {
        let (width, height, pixels) = read_png_rgba(&dir.join(&entry.file))?;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::write_frames;
    use crate::model_io::{model_from_bytes, model_to_bytes};
    use crate::traffic::{generate, ScenarioSpec};

    fn small_options(seed: u64) -> TrainOptions {
        TrainOptions {
            clusters: 12,
            rounds: 4,
            size: 128,
            ..TrainOptions::new(seed)
        }
    }

    fn labeled_frames(seed: u64, attack: bool, take: usize) -> Vec<SessionImageFrame> {
        let spec = if attack {
            ScenarioSpec::with_attack(40.0, 0.0, 40.0, 30.0, seed)
        } else {
            ScenarioSpec::background_only(40.0, seed)
        };
        let (packets, truth) = generate(&spec).unwrap();
        let opts = RenderOptions {
            size: 128,
            ..RenderOptions::default()
        };
        let (mut frames, _) = render_packets(&packets, &opts).unwrap();
        label_frames_by_truth(&mut frames, &truth);
        frames.truncate(take);
        frames
    }

    #[test]
    fn truth_labeling_marks_overlapping_windows() {
        let spec = ScenarioSpec::with_attack(30.0, 10.0, 20.0, 25.0, 3);
        let (packets, truth) = generate(&spec).unwrap();
        let (mut frames, _) = render_packets(&packets, &RenderOptions::default()).unwrap();
        label_frames_by_truth(&mut frames, &truth);
        assert!(frames.iter().any(|f| f.label == FrameLabel::Ddos));
        assert!(frames.iter().any(|f| f.label == FrameLabel::Legitimate));
        for f in &frames {
            let expect = truth[0].overlaps(f.window_start, f.window_end - 1);
            assert_eq!(f.label == FrameLabel::Ddos, expect);
        }
    }

    #[test]
    fn train_produces_consistent_model_and_log() {
        let mut frames = labeled_frames(5, false, 4);
        frames.extend(labeled_frames(6, true, 4));
        let (model, log) = train_frames(&frames, &small_options(9)).unwrap();
        assert_eq!(model.vocabulary.k, 12);
        assert_eq!(model.vocabulary.centroids.len(), 12);
        assert_eq!(model.vocabulary.idf.len(), 12);
        assert_eq!(log.descriptor_counts.len(), frames.len());
        assert_eq!(
            log.total_descriptors,
            log.descriptor_counts.iter().sum::<usize>()
        );
        assert_eq!(log.round_errors.len(), log.rounds_kept);
        assert_eq!(log.alphas.len(), log.rounds_kept);
        assert!(log.legitimate_images > 0 && log.ddos_images > 0);
        assert_eq!(model.metadata.k, 12);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let mut frames = labeled_frames(5, false, 3);
        frames.extend(labeled_frames(6, true, 3));
        let (a, _) = train_frames(&frames, &small_options(77)).unwrap();
        let (b, _) = train_frames(&frames, &small_options(77)).unwrap();
        assert_eq!(model_to_bytes(&a), model_to_bytes(&b));
    }

    #[test]
    fn prediction_is_thread_count_invariant() {
        let mut frames = labeled_frames(5, false, 3);
        frames.extend(labeled_frames(6, true, 3));
        let (model, _) = train_frames(&frames, &small_options(11)).unwrap();
        let test_frames = labeled_frames(21, true, 5);
        let serial = predict_frames(&model, &test_frames, 1);
        let parallel = predict_frames(&model, &test_frames, 8);
        assert_eq!(serial.len(), parallel.len());
        for (a, b) in serial.iter().zip(&parallel) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.score.to_bits(), b.score.to_bits());
            assert_eq!(a.confidence.to_bits(), b.confidence.to_bits());
        }
    }

    #[test]
    fn too_few_descriptors_is_insufficient_data() {
        let frames = labeled_frames(5, false, 1);
        let opts = TrainOptions {
            clusters: 1_000_000,
            ..small_options(1)
        };
        match train_frames(&frames, &opts) {
            Err(PipelineError::Vocabulary(VocabularyError::InsufficientData { .. })) => {}
            other => panic!("unexpected result: {other:?}"),
        }
    }

    #[test]
    fn frames_round_trip_through_directory() {
        let frames = labeled_frames(8, true, 4);
        let dir = tempfile::tempdir().unwrap();
        write_frames(&frames, dir.path()).unwrap();
        let loaded = load_frames_dir(dir.path()).unwrap();
        assert_eq!(loaded.len(), frames.len());
        for (got, want) in loaded.iter().zip(&frames) {
            assert_eq!(got.pixels, want.pixels);
            assert_eq!(got.label, want.label);
            assert_eq!(got.window_start, want.window_start);
            assert_eq!(got.window_end, want.window_end);
        }
    }

    #[test]
    fn model_bytes_round_trip_preserves_predictions() {
        let mut frames = labeled_frames(5, false, 3);
        frames.extend(labeled_frames(6, true, 3));
        let (model, _) = train_frames(&frames, &small_options(13)).unwrap();
        let restored = model_from_bytes(&model_to_bytes(&model)).unwrap();
        let test_frames = labeled_frames(30, false, 3);
        let a = predict_frames(&model, &test_frames, 1);
        let b = predict_frames(&restored, &test_frames, 1);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.label, y.label);
            assert_eq!(x.score.to_bits(), y.score.to_bits());
        }
    }
}
