//! Boosted Gaussian naive-Bayes classification over tf-idf bag-of-words
//! vectors, plus the self-contained trained-model record.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{CanvasCalibration, FrameLabel};
use crate::projection::ProjectionBasis;
use crate::vocabulary::{BowVector, Vocabulary};

/// Lower bound applied to every per-feature variance.
pub const VARIANCE_FLOOR: f64 = 1e-9;
/// Boosting rounds used when nothing else is configured.
pub const DEFAULT_ROUNDS: usize = 10;
const EPSILON_CLAMP: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("missing class: training data contains no {0:?} samples")]
    MissingClass(FrameLabel),
    #[error("dimension mismatch: model expects {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Per-class Gaussian parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub prior: f64,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Gaussian naive Bayes over real-valued features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub legitimate: ClassStats,
    pub ddos: ClassStats,
}

impl NaiveBayesModel {
    fn log_likelihood(&self, stats: &ClassStats, x: &[f64]) -> f64 {
        let mut ll = stats.prior.ln();
        for ((&v, &m), &var) in x.iter().zip(&stats.means).zip(&stats.variances) {
            let d = v - m;
            ll += -0.5 * (std::f64::consts::TAU * var).ln() - d * d / (2.0 * var);
        }
        ll
    }

    /// +1 for ddos, -1 for legitimate; exact ties go to legitimate.
    pub fn decide(&self, x: &[f64]) -> i8 {
        let ll_ddos = self.log_likelihood(&self.ddos, x);
        let ll_legit = self.log_likelihood(&self.legitimate, x);
        if ll_ddos > ll_legit {
            1
        } else {
            -1
        }
    }
}

/// AdaBoost ensemble of naive-Bayes weak learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub learners: Vec<NaiveBayesModel>,
    pub alphas: Vec<f64>,
    /// Weighted error of each kept round, for the training log.
    pub round_errors: Vec<f64>,
}

impl BoostedEnsemble {
    /// Ensemble margin: sum of alpha_t * h_t(x).
    pub fn score(&self, x: &[f64]) -> f64 {
        self.learners
            .iter()
            .zip(&self.alphas)
            .map(|(nb, a)| a * f64::from(nb.decide(x)))
            .sum()
    }
}

/// Deterministic training metadata embedded in the model file. Contains no
/// timestamps so re-training with equal inputs yields a bitwise-equal file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub k: usize,
    pub rounds: usize,
    pub legitimate_images: usize,
    pub ddos_images: usize,
    pub window_us: u64,
    pub canvas_size: u32,
    pub max_descriptors: usize,
}

/// Everything prediction needs, persisted as one record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub basis: ProjectionBasis,
    pub calibration: CanvasCalibration,
    pub vocabulary: Vocabulary,
    pub ensemble: BoostedEnsemble,
    pub metadata: ModelMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: FrameLabel,
    /// Ensemble margin; positive means ddos.
    pub score: f64,
    /// Logistic of the margin, in (0,1).
    pub confidence: f64,
}

fn sign_of(label: FrameLabel) -> i8 {
    match label {
        FrameLabel::Ddos => 1,
        FrameLabel::Legitimate => -1,
        FrameLabel::Unlabeled => panic!("unlabeled sample in training data"),
    }
}

/// Weighted Gaussian naive Bayes fit. Weights must be positive; priors and
/// moments are normalized by the weight sums, so uniformly rescaled weights
/// produce the identical model.
pub fn train_nb(
    rows: &[Vec<f64>],
    labels: &[FrameLabel],
    weights: &[f64],
) -> Result<NaiveBayesModel, ClassifierError> {
    assert_eq!(rows.len(), labels.len());
    assert_eq!(rows.len(), weights.len());
    let dim = rows.first().map_or(0, Vec::len);
    let fit = |want: FrameLabel| -> Result<ClassStats, ClassifierError> {
        let total: f64 = weights.iter().sum();
        let mut class_w = 0.0f64;
        let mut means = vec![0.0f64; dim];
        for ((row, &label), &w) in rows.iter().zip(labels).zip(weights) {
            if label != want {
                continue;
            }
            class_w += w;
            for (m, &v) in means.iter_mut().zip(row) {
                *m += w * v;
            }
        }
        if class_w <= 0.0 {
            return Err(ClassifierError::MissingClass(want));
        }
        for m in &mut means {
            *m /= class_w;
        }
        let mut variances = vec![0.0f64; dim];
        for ((row, &label), &w) in rows.iter().zip(labels).zip(weights) {
            if label != want {
                continue;
            }
            for ((var, &v), &m) in variances.iter_mut().zip(row).zip(&means) {
                let d = v - m;
                *var += w * d * d;
            }
        }
        for var in &mut variances {
            *var = (*var / class_w).max(VARIANCE_FLOOR);
        }
        Ok(ClassStats {
            prior: class_w / total,
            means,
            variances,
        })
    };
    Ok(NaiveBayesModel {
        legitimate: fit(FrameLabel::Legitimate)?,
        ddos: fit(FrameLabel::Ddos)?,
    })
}

/// Discrete two-class AdaBoost over naive-Bayes weak learners. The scheme
/// uses no randomness; `_seed` mirrors the pipeline interface and is recorded
/// in the model metadata instead.
pub fn adaboost_train(
    rows: &[Vec<f64>],
    labels: &[FrameLabel],
    t_rounds: usize,
    _seed: u64,
) -> Result<BoostedEnsemble, ClassifierError> {
    assert!(t_rounds >= 1, "need at least one boosting round");
    let n = rows.len();
    let mut weights = vec![1.0 / n as f64; n];
    let mut ensemble = BoostedEnsemble {
        learners: Vec::new(),
        alphas: Vec::new(),
        round_errors: Vec::new(),
    };
    for _ in 0..t_rounds {
        let nb = train_nb(rows, labels, &weights)?;
        let preds: Vec<i8> = rows.iter().map(|r| nb.decide(r)).collect();
        let eps: f64 = preds
            .iter()
            .zip(labels)
            .zip(&weights)
            .filter(|((&p, &y), _)| p != sign_of(y))
            .map(|(_, &w)| w)
            .sum();
        if eps >= 0.5 {
            // The weak learner is no better than chance: discard it and halt.
            break;
        }
        let eps_c = eps.clamp(EPSILON_CLAMP, 1.0 - EPSILON_CLAMP);
        let alpha = 0.5 * ((1.0 - eps_c) / eps_c).ln();
        ensemble.learners.push(nb);
        ensemble.alphas.push(alpha);
        ensemble.round_errors.push(eps);
        if eps <= EPSILON_CLAMP {
            break;
        }
        let scale = alpha.exp();
        for ((&p, &y), w) in preds.iter().zip(labels).zip(&mut weights) {
            if p != sign_of(y) {
                *w *= scale;
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
    }
    Ok(ensemble)
}

/// Classifies one bag-of-words vector with the trained ensemble.
pub fn predict(model: &TrainedModel, bow: &BowVector) -> Result<Prediction, ClassifierError> {
    if bow.values.len() != model.vocabulary.k {
        return Err(ClassifierError::DimensionMismatch {
            expected: model.vocabulary.k,
            got: bow.values.len(),
        });
    }
    Ok(predict_with_ensemble(&model.ensemble, &bow.values))
}

pub fn predict_with_ensemble(ensemble: &BoostedEnsemble, x: &[f64]) -> Prediction {
    let score = ensemble.score(x);
    let label = if score > 0.0 {
        FrameLabel::Ddos
    } else {
        FrameLabel::Legitimate
    };
    let confidence = 1.0 / (1.0 + (-2.0 * score).exp());
    Prediction {
        label,
        score,
        confidence,
    }
}
