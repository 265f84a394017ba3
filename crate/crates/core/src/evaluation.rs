//! Detection-rate / false-positive-rate / complex-rate evaluation over
//! labeled frame sets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{predict, ModelMetadata, TrainedModel};
use crate::descriptors::{extract_from_frame, SiftParams};
use crate::imaging::{FrameLabel, SessionImageFrame};
use crate::vocabulary::bow_vector;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("empty class: dataset has no {0:?} frames")]
    EmptyClass(FrameLabel),
    #[error("frame {0} is unlabeled")]
    UnlabeledFrame(usize),
}

/// Confusion counts and the derived rates. The positive class is ddos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    /// Detection rate TP / (TP + FN).
    pub dr: f64,
    /// False positive rate FP / (FP + TN).
    pub fpr: f64,
    /// Complex rate (DR + (1 - FPR)) / 2.
    pub cr: f64,
    pub dataset: String,
    pub metadata: ModelMetadata,
}

/// Complex rate: averages the detection rate and the true-negative rate.
pub fn complex_rate(dr: f64, fpr: f64) -> f64 {
    (dr + (1.0 - fpr)) / 2.0
}

/// Builds a report from confusion counts; each class must be represented.
pub fn report_from_counts(
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
    dataset: &str,
    metadata: ModelMetadata,
) -> Result<EvalReport, EvaluationError> {
    if tp + fn_ == 0 {
        return Err(EvaluationError::EmptyClass(FrameLabel::Ddos));
    }
    if fp + tn == 0 {
        return Err(EvaluationError::EmptyClass(FrameLabel::Legitimate));
    }
    let dr = tp as f64 / (tp + fn_) as f64;
    let fpr = fp as f64 / (fp + tn) as f64;
    Ok(EvalReport {
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        dr,
        fpr,
        cr: complex_rate(dr, fpr),
        dataset: dataset.to_string(),
        metadata,
    })
}

/// Runs the full per-frame prediction pipeline (grayscale, descriptors,
/// bag-of-words, boosted classifier) and tallies the confusion matrix
/// against the frame labels.
pub fn evaluate(
    model: &TrainedModel,
    frames: &[SessionImageFrame],
    dataset: &str,
) -> Result<EvalReport, EvaluationError> {
    let params = SiftParams {
        max_descriptors: model.metadata.max_descriptors,
        ..SiftParams::for_rendered_frames()
    };
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (i, frame) in frames.iter().enumerate() {
        let truth = match frame.label {
            FrameLabel::Unlabeled => return Err(EvaluationError::UnlabeledFrame(i)),
            l => l,
        };
        let set = extract_from_frame(frame, &params);
        let bow = bow_vector(&set, &model.vocabulary);
        let pred = predict(model, &bow).expect("bow length matches the model vocabulary");
        match (pred.label, truth) {
            (FrameLabel::Ddos, FrameLabel::Ddos) => tp += 1,
            (FrameLabel::Ddos, FrameLabel::Legitimate) => fp += 1,
            (FrameLabel::Legitimate, FrameLabel::Legitimate) => tn += 1,
            (FrameLabel::Legitimate, FrameLabel::Ddos) => fn_ += 1,
            _ => unreachable!("prediction labels are never unlabeled"),
        }
    }
    report_from_counts(tp, fp, tn, fn_, dataset, model.metadata.clone())
}
