//! Post-processing toolkit for object-detection ensembles.
//!
//! The crate covers the steps between raw per-model prediction files and a
//! final scored result:
//!
//! - [`geometry`] — axis-aligned box arithmetic (areas, intersections, IoU,
//!   GIoU);
//! - [`detections`] — the prediction/ground-truth data model plus COCO-style
//!   JSON ingestion and emission;
//! - [`fusion`] — overlap-based clustering of pooled predictions with
//!   confidence filtering and per-cluster representative selection;
//! - [`tta`] — test-time-augmentation transforms (resize, HSV adjustment)
//!   and the exact inverse mapping of predicted boxes back to original image
//!   coordinates;
//! - [`eval`] — a COCO-style mean-average-precision evaluator.
//!
//! All geometry is double precision. Every operation is deterministic:
//! identical inputs produce identical outputs, including where work is
//! parallelized internally.

pub mod detections;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod tta;

pub use detections::{CategoryId, Detection, GroundTruth, ImageId, PredictionSet};
pub use eval::{EvalConfig, EvalReport};
pub use fusion::{FusionConfig, OverlapMetric, Selection};
pub use geometry::BBox;
pub use tta::{RasterImage, TransformSpec};
