//! Camouflage-map toolkit.
//!
//! Training-free building blocks for camouflaged object segmentation
//! pipelines that run dual main/mirror detection streams:
//!
//! * [`roi`]: quantized max pooling, sampled RoI Align, and precise
//!   integration-based RoI pooling with analytic box-coordinate gradients;
//! * [`losses`]: the multi-task detection loss terms with gradients;
//! * [`fusion`]: winner-take-all fusion of main and mirror detections into a
//!   single camouflage map;
//! * [`metrics`]: the evaluation suite (F-measure, IOU, MAE, E-measure,
//!   S-measure, weighted F-measure) under adaptive or fixed thresholds;
//! * [`augment`]: copy-paste instance augmentation onto color-compatible
//!   background regions;
//! * [`visdiff`]: foreground/background visual-difference analysis in RGB,
//!   lαβ, texton, and ingested deep-feature spaces;
//! * [`io`] and [`dataset`]: PNG, JSON-lines detection files, raw feature
//!   ingestion, and dataset manifests.
//!
//! All operations are pure functions over immutable values and are safe to
//! call from multiple threads.

pub mod augment;
pub mod dataset;
pub mod detection;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod map;
pub mod metrics;
pub mod roi;
pub mod visdiff;

pub use detection::{Detection, Label, Stream, StreamOutput};
pub use error::{Error, Result};
pub use geometry::BoundingBox;
pub use map::{BinaryMask, FeatureMap, GrayscaleMap, RgbImage};
