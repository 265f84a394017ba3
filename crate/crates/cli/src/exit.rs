//! Error-to-exit-code mapping: 2 empty or missing input class, 3
//! insufficient data, 4 malformed input format, 1 anything else.

use synids_core::capture::CaptureError;
use synids_core::classifier::ClassifierError;
use synids_core::config::ConfigError;
use synids_core::evaluation::EvaluationError;
use synids_core::imaging::ImagingError;
use synids_core::model_io::ModelIoError;
use synids_core::pipeline::PipelineError;
use synids_core::traffic::TrafficError;
use synids_core::vocabulary::VocabularyError;

/// CLI-level failures that don't originate in a library error.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// An input class (frames, packets) is empty or missing — exit 2.
    #[error("{0}")]
    Empty(String),
    /// Malformed input file — exit 4.
    #[error("{0}")]
    Format(String),
}

fn classifier_code(e: &ClassifierError) -> u8 {
    match e {
        ClassifierError::MissingClass(_) => 2,
        ClassifierError::DimensionMismatch { .. } => 4,
    }
}

fn imaging_code(e: &ImagingError) -> u8 {
    match e {
        ImagingError::EmptyInput => 2,
        ImagingError::Codec(_) => 4,
        _ => 1,
    }
}

/// `PipelineError` wraps most module errors transparently, so their variants
/// must be matched here rather than found deeper in the chain.
fn pipeline_code(e: &PipelineError) -> u8 {
    match e {
        PipelineError::EmptyInput(_) => 2,
        PipelineError::Vocabulary(VocabularyError::InsufficientData { .. }) => 3,
        PipelineError::Classifier(c) => classifier_code(c),
        PipelineError::Imaging(i) => imaging_code(i),
        PipelineError::Projection(_) => 4,
        PipelineError::Io(_) => 1,
    }
}

/// Walks the error chain outermost-first and returns the first documented
/// exit code; unrecognized errors exit 1.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Empty(_) => 2,
                CliError::Format(_) => 4,
            };
        }
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return pipeline_code(e);
        }
        if let Some(e) = cause.downcast_ref::<EvaluationError>() {
            return match e {
                EvaluationError::EmptyClass(_) => 2,
                EvaluationError::UnlabeledFrame(_) => 4,
            };
        }
        if let Some(e) = cause.downcast_ref::<ClassifierError>() {
            return classifier_code(e);
        }
        if cause.downcast_ref::<VocabularyError>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<CaptureError>().is_some() {
            return 4;
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<ModelIoError>() {
            return match e {
                ModelIoError::FileError(_) => 1,
                _ => 4,
            };
        }
        if let Some(e) = cause.downcast_ref::<TrafficError>() {
            return match e {
                TrafficError::InvalidSpec(_) => 4,
                TrafficError::FileError(_) => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<ImagingError>() {
            return imaging_code(e);
        }
    }
    1
}
