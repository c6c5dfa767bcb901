//! Line-delimited detection exchange format.
//!
//! One JSON object per line:
//! `{"case_id": .., "detector_id": .., "detections": [{"box": [x_min, y_min, x_max, y_max], "score": .., "category_id": .., "category_name": ..}]}`

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Category, Detection, DetectionSet, DetectorError};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeDetection {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub score: f64,
    pub category_id: u64,
    pub category_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRecord {
    pub case_id: String,
    pub detector_id: String,
    pub detections: Vec<ExchangeDetection>,
}

impl From<&DetectionSet> for ExchangeRecord {
    fn from(set: &DetectionSet) -> Self {
        ExchangeRecord {
            case_id: set.case_id.clone(),
            detector_id: set.detector_id.clone(),
            detections: set
                .detections()
                .iter()
                .map(|d| ExchangeDetection {
                    bbox: [d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max],
                    score: d.score,
                    category_id: d.category.id,
                    category_name: d.category.name.clone(),
                })
                .collect(),
        }
    }
}

/// A detection dropped because it broke a [`Detection`] invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedDetection {
    pub line: usize,
    pub case_id: String,
    pub index: usize,
    pub reason: String,
}

impl ExchangeRecord {
    /// Converts to a set, splitting off invalid detections.
    pub fn into_set(self) -> (DetectionSet, Vec<(usize, String)>) {
        let mut kept = Vec::with_capacity(self.detections.len());
        let mut rejected = Vec::new();
        for (i, d) in self.detections.into_iter().enumerate() {
            let [x0, y0, x1, y1] = d.bbox;
            match Detection::new(BBox::new(x0, y0, x1, y1), d.score, Category::new(d.category_id, d.category_name)) {
                Ok(det) => kept.push(det),
                Err(e) => rejected.push((i, e.to_string())),
            }
        }
        (DetectionSet::new(self.case_id, self.detector_id, kept), rejected)
    }
}

pub fn to_record_line(set: &DetectionSet) -> String {
    serde_json::to_string(&ExchangeRecord::from(set)).expect("exchange records always serialize")
}

/// Parses one line; `line` is used only for error messages.
pub fn parse_record_line(text: &str, line: usize) -> Result<ExchangeRecord, DetectorError> {
    serde_json::from_str(text).map_err(|e| DetectorError::MalformedRecord {
        line,
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Default)]
pub struct LoadedDetections {
    pub sets: BTreeMap<String, DetectionSet>,
    pub rejected: Vec<RejectedDetection>,
}

pub fn read_detections(text: &str) -> Result<LoadedDetections, DetectorError> {
    let mut out = LoadedDetections::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record = parse_record_line(raw, line)?;
        if out.sets.contains_key(&record.case_id) {
            return Err(DetectorError::DuplicateCase {
                case_id: record.case_id,
                line,
            });
        }
        let (set, rejected) = record.into_set();
        out.rejected.extend(rejected.into_iter().map(|(index, reason)| RejectedDetection {
            line,
            case_id: set.case_id.clone(),
            index,
            reason,
        }));
        out.sets.insert(set.case_id.clone(), set);
    }
    Ok(out)
}

pub fn load_detections(path: &Path) -> Result<LoadedDetections, DetectorError> {
    let text = fs::read_to_string(path).map_err(|source| DetectorError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_detections(&text)
}

/// Writes sets in the given order, one record per line.
pub fn write_detections<'a>(path: &Path, sets: impl IntoIterator<Item = &'a DetectionSet>) -> Result<(), DetectorError> {
    let io_err = |source| DetectorError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut buf = Vec::new();
    for set in sets {
        buf.extend_from_slice(to_record_line(set).as_bytes());
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&buf).map_err(io_err)?;
    Ok(())
}
