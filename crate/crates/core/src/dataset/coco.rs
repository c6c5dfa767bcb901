//! Serde model of the COCO "instances" annotation document.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoDocument {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supercategory: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// `[x, y, w, h]`
    pub bbox: [f64; 4],
    #[serde(default)]
    pub area: f64,
    #[serde(default)]
    pub iscrowd: u8,
    /// Kept raw so an unrecognised encoding rejects one instance, not the document.
    pub segmentation: Value,
}

/// The three segmentation encodings COCO uses.
#[derive(Debug, Clone, PartialEq)]
pub enum Segmentation {
    Polygons(Vec<Vec<f64>>),
    UncompressedRle { counts: Vec<u32>, size: [u32; 2] },
    CompressedRle { counts: String, size: [u32; 2] },
}

impl Segmentation {
    pub fn parse(value: &Value) -> Option<Segmentation> {
        match value {
            Value::Array(polys) => polys
                .iter()
                .map(|p| {
                    p.as_array()?
                        .iter()
                        .map(Value::as_f64)
                        .collect::<Option<Vec<f64>>>()
                })
                .collect::<Option<Vec<_>>>()
                .map(Segmentation::Polygons),
            Value::Object(obj) => {
                let size = obj.get("size")?.as_array()?;
                let size = match size.as_slice() {
                    [h, w] => [u32::try_from(h.as_u64()?).ok()?, u32::try_from(w.as_u64()?).ok()?],
                    _ => return None,
                };
                match obj.get("counts")? {
                    Value::String(s) => Some(Segmentation::CompressedRle {
                        counts: s.clone(),
                        size,
                    }),
                    Value::Array(items) => items
                        .iter()
                        .map(|c| c.as_u64().and_then(|c| u32::try_from(c).ok()))
                        .collect::<Option<Vec<u32>>>()
                        .map(|counts| Segmentation::UncompressedRle { counts, size }),
                    _ => None,
                }
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parses_all_three_encodings() {
        assert_eq!(
            Segmentation::parse(&json!([[0, 0, 4, 0, 0, 4]])),
            Some(Segmentation::Polygons(vec![vec![0.0, 0.0, 4.0, 0.0, 0.0, 4.0]]))
        );
        assert_eq!(
            Segmentation::parse(&json!({"counts": [2, 3, 1], "size": [3, 2]})),
            Some(Segmentation::UncompressedRle {
                counts: vec![2, 3, 1],
                size: [3, 2]
            })
        );
        assert_eq!(
            Segmentation::parse(&json!({"counts": "0<", "size": [3, 4]})),
            Some(Segmentation::CompressedRle {
                counts: "0<".into(),
                size: [3, 4]
            })
        );
    }

    #[test]
    fn unknown_shapes_are_none() {
        assert_eq!(Segmentation::parse(&json!("mask.png")), None);
        assert_eq!(Segmentation::parse(&json!({"counts": [1, 2]})), None);
        assert_eq!(Segmentation::parse(&json!({"counts": 5, "size": [1, 5]})), None);
        assert_eq!(Segmentation::parse(&json!([[0, "a"]])), None);
    }
}
