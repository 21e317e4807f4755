//! Radar-based recognition of human daily-living activities.
//!
//! The crate covers the whole chain from synthetic FMCW baseband data to a
//! decoded activity timeline: range-map and micro-Doppler computation,
//! image cleaning, Radon and power-burst segmentation, 2-D PCA fusion
//! features with a nearest-neighbor classifier, and decoding constrained by
//! a human-motion state diagram.

// `!(x > 0.0)` is the parameter-check idiom here: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod ethogram;
pub mod features;
pub mod io;
pub mod pbc;
pub mod pipeline;
pub mod preprocess;
pub mod radon;
pub mod rdmap;
pub mod scenarios;
pub mod sim;

pub use error::{Error, Result};
pub use ethogram::{
    decode_backward, decode_forward, reconcile, ClassId, ClassifierRegistry, DecodedTimeline,
    DecoderOptions, Node, StateDiagram, TimeDirection,
};
pub use features::{Classification, ConfusionMatrix, Dims, FeatureModel, NnOptions, Snippet};
pub use pbc::{MotionSegment, SegmentSource};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutput};
pub use radon::{BreakPoint, DetectedLine, MotionKind, RadonImage, TimelineParams};
pub use rdmap::{ImageKind, RadarImage, StftParams};
pub use sim::{BasebandMatrix, Direction, RadarParams, ScattererTrack, Scenario, TruthLabel};
