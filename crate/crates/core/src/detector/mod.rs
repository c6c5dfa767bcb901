//! Detection types and the port through which detections are obtained.
//!
//! Three backends implement [`Detector`]: the built-in [`StubDetector`], a
//! [`FileDetector`] replaying an exchange file, and an [`HttpDetector`] that
//! talks to an external inference service.

mod exchange;
mod http;
mod stub;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ImageBuffer;
use crate::geometry::BBox;

pub use self::exchange::{
    load_detections, parse_record_line, read_detections, to_record_line, write_detections, ExchangeDetection,
    ExchangeRecord, LoadedDetections, RejectedDetection,
};
pub use self::http::{HttpDetector, DEFAULT_TIMEOUT_MS, TIMEOUT_ENV};
pub use self::stub::{palette_color, StubDetector, MIN_COMPONENT_PIXELS, PALETTE, STUB_DETECTOR_ID};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("no detections recorded for case {0}")]
    CaseMissing(String),
    #[error("duplicate case_id {case_id} at line {line}")]
    DuplicateCase { case_id: String, line: usize },
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("detection backend unavailable: {0}")]
    Unavailable(String),
    #[error("detection service answered {status}: {body}")]
    Status { status: u16, body: String },
    #[error("detection service protocol error: {0}")]
    Protocol(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
}

impl Category {
    pub fn new(id: u64, name: impl Into<String>) -> Self {
        Self { id, name: name.into() }
    }
}

/// One detector output: box, confidence and category.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub category: Category,
}

impl Detection {
    pub fn new(bbox: BBox, score: f64, category: Category) -> Result<Self, DetectorError> {
        if !bbox.is_valid() {
            return Err(DetectorError::InvalidDetection(format!(
                "box must satisfy x_min < x_max and y_min < y_max, got {:?}",
                [bbox.x_min, bbox.y_min, bbox.x_max, bbox.y_max]
            )));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(DetectorError::InvalidDetection(format!("score {score} outside [0, 1]")));
        }
        Ok(Self { bbox, score, category })
    }
}

/// Canonical order: descending score, then category id, `x_min`, `y_min`.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.category.id.cmp(&b.category.id))
        .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
        .then(a.bbox.y_min.total_cmp(&b.bbox.y_min))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub case_id: String,
    pub detector_id: String,
    detections: Vec<Detection>,
}

impl DetectionSet {
    /// Sorts `detections` into canonical order (stable for full ties).
    pub fn new(case_id: impl Into<String>, detector_id: impl Into<String>, mut detections: Vec<Detection>) -> Self {
        detections.sort_by(detection_order);
        Self {
            case_id: case_id.into(),
            detector_id: detector_id.into(),
            detections,
        }
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn with_case_id(mut self, case_id: impl Into<String>) -> Self {
        self.case_id = case_id.into();
        self
    }
}

/// Keeps detections whose score strictly exceeds `theta`.
pub fn threshold_filter(set: &DetectionSet, theta: f64) -> DetectionSet {
    DetectionSet {
        case_id: set.case_id.clone(),
        detector_id: set.detector_id.clone(),
        detections: set.detections.iter().filter(|d| d.score > theta).cloned().collect(),
    }
}

pub trait Detector: Send + Sync {
    /// Identifies the backend and its configuration in output records.
    fn detector_id(&self) -> String;

    fn detect(&self, image: &ImageBuffer, case_id: &str) -> Result<DetectionSet, DetectorError>;
}

/// Replays detections loaded from an exchange file.
#[derive(Debug, Clone)]
pub struct FileDetector {
    sets: std::collections::BTreeMap<String, DetectionSet>,
    id: String,
}

impl FileDetector {
    pub fn new(sets: std::collections::BTreeMap<String, DetectionSet>) -> Self {
        let mut ids: Vec<&str> = sets.values().map(|s| s.detector_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        let id = format!("file:{}", ids.join("+"));
        Self { sets, id }
    }

    pub fn open(path: &std::path::Path) -> Result<Self, DetectorError> {
        Ok(Self::new(load_detections(path)?.sets))
    }

    pub fn contains(&self, case_id: &str) -> bool {
        self.sets.contains_key(case_id)
    }
}

impl Detector for FileDetector {
    fn detector_id(&self) -> String {
        self.id.clone()
    }

    fn detect(&self, _image: &ImageBuffer, case_id: &str) -> Result<DetectionSet, DetectorError> {
        self.sets
            .get(case_id)
            .cloned()
            .ok_or_else(|| DetectorError::CaseMissing(case_id.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(score: f64, cat: u64, x: f64) -> Detection {
        Detection::new(BBox::new(x, 0.0, x + 5.0, 5.0), score, Category::new(cat, "c")).unwrap()
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(Detection::new(BBox::new(1.0, 0.0, 1.0, 2.0), 0.5, Category::new(1, "a")).is_err());
        assert!(Detection::new(BBox::new(0.0, 0.0, 1.0, 2.0), 1.5, Category::new(1, "a")).is_err());
        assert!(Detection::new(BBox::new(0.0, 0.0, 1.0, 2.0), f64::NAN, Category::new(1, "a")).is_err());
    }

    #[test]
    fn sets_are_canonically_ordered() {
        let s = DetectionSet::new("c", "d", vec![det(0.5, 2, 0.0), det(0.9, 1, 0.0), det(0.5, 1, 3.0), det(0.5, 1, 1.0)]);
        let order: Vec<_> = s.detections().iter().map(|d| (d.score, d.category.id, d.bbox.x_min)).collect();
        assert_eq!(order, vec![(0.9, 1, 0.0), (0.5, 1, 1.0), (0.5, 1, 3.0), (0.5, 2, 0.0)]);
    }

    #[test]
    fn threshold_is_strict() {
        let s = DetectionSet::new("c", "d", vec![det(0.5, 1, 0.0), det(0.51, 1, 10.0), det(0.0, 1, 20.0)]);
        let kept = threshold_filter(&s, 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept.detections()[0].score, 0.51);
        assert_eq!(threshold_filter(&s, 0.0).len(), 2);
        assert!(threshold_filter(&s, 1.0).is_empty());
    }

    #[test]
    fn file_detector_reports_missing_case() {
        let mut sets = std::collections::BTreeMap::new();
        sets.insert("a".to_string(), DetectionSet::new("a", "m", vec![]));
        let f = FileDetector::new(sets);
        let img = ImageBuffer::filled(1, 1, [0, 0, 0]);
        assert!(f.detect(&img, "a").is_ok());
        assert!(matches!(f.detect(&img, "b"), Err(DetectorError::CaseMissing(c)) if c == "b"));
        assert_eq!(f.detector_id(), "file:m");
    }
}
