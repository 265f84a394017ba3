//! Detects HTTP GET-flood style anomalies by re-representing TCP/IP session
//! metadata as images and classifying those images.
//!
//! The pipeline: parse captured packets into metadata records, group them
//! into sessions, project each packet's feature vector onto a plane, render
//! every session as a filled convex polygon on a time-windowed canvas,
//! extract scale-invariant descriptors from the frames, encode frames as
//! tf-idf weighted visual-word histograms, and classify with a boosted
//! naive-Bayes ensemble. A seeded traffic generator makes the whole
//! experiment reproducible without real captures.

pub mod capture;
pub mod classifier;
pub mod config;
pub mod descriptors;
pub mod evaluation;
pub mod imaging;
pub mod model_io;
pub mod pipeline;
pub mod projection;
pub mod traffic;
pub mod vocabulary;

pub use capture::{CaptureError, FeatureVector, PacketMeta, Session};
pub use classifier::{BoostedEnsemble, NaiveBayesModel, Prediction, TrainedModel};
pub use evaluation::EvalReport;
pub use imaging::{CanvasCalibration, SessionImageFrame, SessionPolygon};
pub use projection::{PlanePoint, ProjectionBasis};
pub use traffic::ScenarioSpec;
pub use vocabulary::{BowVector, FrequencyMatrix, Vocabulary};

/// Derives a per-stage seed from the master seed so one `--seed` flag
/// drives every random choice in the pipeline.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    // FNV-1a over the stage label, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_per_stage() {
        let a = derive_seed(42, "kmeans");
        let b = derive_seed(42, "boost");
        let c = derive_seed(43, "kmeans");
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(42, "kmeans"));
    }
}
