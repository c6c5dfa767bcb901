//! Object-transplanting robustness harness for object detectors.
//!
//! The pipeline pastes a masked object into a scene over a translation grid,
//! collects detections for every generated image, and measures how far the
//! detections drift from those on the untouched scene:
//!
//! * [`dataset`] loads COCO-style annotations and decodes all three mask encodings.
//! * [`compositing`] performs the pixel-level manipulations (transplant, duplicate, ablations).
//! * [`sweep`] enumerates translations and streams generated test cases.
//! * [`detector`] is the port for obtaining detections (stub, file, HTTP).
//! * [`matching`] scores a modified detection set against the original one.
//! * [`stats`] aggregates per-translation scores into the affected table and exemplar lists.
//! * [`nms`] contains greedy NMS and the suppression chain-reaction probe.
//! * [`cli`] ties the stages together with on-disk handoff between them.

pub mod cli;
pub mod compositing;
pub mod dataset;
pub mod detector;
pub mod geometry;
pub mod matching;
pub mod nms;
pub mod stats;
pub mod sweep;
pub mod synthetic;

pub use compositing::{Sprite, Translation};
pub use dataset::{BinaryMask, DatasetIndex, ImageBuffer, Instance};
pub use detector::{Category, Detection, DetectionSet, Detector};
pub use geometry::{BBox, PixelRect};
pub use matching::{CoverageReport, MatchResult};
pub use sweep::{SweepConfig, TestCase};
