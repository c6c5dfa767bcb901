//! COCO-style dataset ingestion.
//!
//! [`load_dataset`] reads an instances document, decodes every segmentation
//! into a [`BinaryMask`], and checks each instance against its invariants.
//! Instances that fail are left out of the index and listed in
//! [`DatasetIndex::issues`] instead of aborting the load.

mod coco;
mod image;
mod mask;
mod polygon;
pub mod rle;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use self::coco::{CocoAnnotation, CocoCategory, CocoDocument, CocoImage, Segmentation};
pub use self::image::ImageBuffer;
pub use self::mask::BinaryMask;
pub use self::polygon::{points_from_flat, rasterize_polygons, PolygonError};
pub use self::rle::{
    decode_compressed_rle, decode_uncompressed_rle, encode_compressed_rle, encode_counts, RleError,
};

use crate::geometry::{BBox, PixelRect};

/// Largest tolerated relative gap between decoded foreground and the `area` field.
pub const AREA_TOLERANCE: f64 = 0.02;
/// Pixels a mask may spill past its bbox before the instance is rejected.
pub const MASK_BBOX_SLACK: i64 = 1;
const BBOX_EPS: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed annotation document {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: ::image::ImageError,
    },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("duplicate image id {0} in annotation document")]
    DuplicateImage(u64),
    #[error("unknown image id {0}")]
    UnknownImage(u64),
    #[error("unknown instance id {0}")]
    UnknownInstance(u64),
}

/// Which segmentation encoding an instance's mask was decoded from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskEncoding {
    Polygon,
    UncompressedRle,
    CompressedRle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub instance_id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub category_name: String,
    /// Corner form, converted from COCO's `[x, y, w, h]`.
    pub bbox: BBox,
    pub mask: BinaryMask,
    pub area: f64,
    pub is_crowd: bool,
    pub encoding: MaskEncoding,
}

impl Instance {
    /// Checks the instance against the image it annotates. Returns the first violated rule.
    pub fn validate(&self, image_width: u32, image_height: u32) -> Result<(), String> {
        if self.mask.dimensions() != (image_width, image_height) {
            return Err(format!(
                "mask is {}x{} but image is {image_width}x{image_height}",
                self.mask.width(),
                self.mask.height()
            ));
        }
        let b = &self.bbox;
        if !b.is_valid() {
            return Err(format!("degenerate bbox {b:?}"));
        }
        if b.x_min < -BBOX_EPS
            || b.y_min < -BBOX_EPS
            || b.x_max > image_width as f64 + BBOX_EPS
            || b.y_max > image_height as f64 + BBOX_EPS
        {
            return Err(format!("bbox {b:?} exceeds {image_width}x{image_height} image"));
        }
        let Some(bounds) = self.mask.foreground_bounds() else {
            return Err("mask has no foreground pixels".into());
        };
        let r = PixelRect::enclosing(b);
        let s = MASK_BBOX_SLACK;
        if bounds.x0 < r.x0 - s || bounds.y0 < r.y0 - s || bounds.x1 > r.x1 + s || bounds.y1 > r.y1 + s {
            return Err(format!("mask foreground {bounds:?} extends past bbox {r:?}"));
        }
        if self.area > 0.0 {
            let fg = self.mask.count_foreground() as f64;
            let rel = (fg - self.area).abs() / self.area;
            if rel > AREA_TOLERANCE {
                return Err(format!(
                    "decoded foreground {fg} differs from area {} by {:.1}%",
                    self.area,
                    rel * 100.0
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: String,
    pub path: PathBuf,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    MissingImageFile,
    ImageSizeMismatch,
    UnknownImage,
    UnknownCategory,
    UnknownEncoding,
    DecodeFailure,
    InvariantViolation,
}

/// Something wrong with one image or instance, found while loading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadIssue {
    pub kind: IssueKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<u64>,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct DatasetIndex {
    pub images: BTreeMap<u64, ImageRecord>,
    pub instances: BTreeMap<u64, Instance>,
    pub by_image: BTreeMap<u64, Vec<u64>>,
    pub categories: BTreeMap<u64, String>,
    pub issues: Vec<LoadIssue>,
}

impl DatasetIndex {
    pub fn image(&self, image_id: u64) -> Result<&ImageRecord, DatasetError> {
        self.images.get(&image_id).ok_or(DatasetError::UnknownImage(image_id))
    }

    pub fn instance(&self, instance_id: u64) -> Result<&Instance, DatasetError> {
        self.instances
            .get(&instance_id)
            .ok_or(DatasetError::UnknownInstance(instance_id))
    }

    /// Instances annotated on `image_id`, ascending by id.
    pub fn instances_of(&self, image_id: u64) -> impl Iterator<Item = &Instance> {
        self.by_image
            .get(&image_id)
            .into_iter()
            .flatten()
            .map(|id| &self.instances[id])
    }

    pub fn load_image(&self, image_id: u64) -> Result<ImageBuffer, DatasetError> {
        let rec = self.image(image_id)?;
        let img = ImageBuffer::open(&rec.path)?;
        if img.dimensions() != (rec.width, rec.height) {
            return Err(DatasetError::InvalidImage(format!(
                "{} is {}x{}, annotations say {}x{}",
                rec.path.display(),
                img.width(),
                img.height(),
                rec.width,
                rec.height
            )));
        }
        Ok(img)
    }
}

/// Decodes one segmentation against the dimensions of its image.
pub fn decode_segmentation(seg: &Segmentation, width: u32, height: u32) -> Result<(BinaryMask, MaskEncoding), String> {
    let check_size = |size: &[u32; 2]| {
        if *size != [height, width] {
            Err(format!(
                "RLE size {:?} does not match image [h, w] = [{height}, {width}]",
                size
            ))
        } else {
            Ok(())
        }
    };
    match seg {
        Segmentation::Polygons(polys) => {
            let pts = polys
                .iter()
                .enumerate()
                .map(|(i, p)| points_from_flat(i, p))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            let mask = rasterize_polygons(&pts, height, width).map_err(|e| e.to_string())?;
            Ok((mask, MaskEncoding::Polygon))
        }
        Segmentation::UncompressedRle { counts, size } => {
            check_size(size)?;
            let mask = decode_uncompressed_rle(counts, height, width).map_err(|e| e.to_string())?;
            Ok((mask, MaskEncoding::UncompressedRle))
        }
        Segmentation::CompressedRle { counts, size } => {
            check_size(size)?;
            let mask = decode_compressed_rle(counts, height, width).map_err(|e| e.to_string())?;
            Ok((mask, MaskEncoding::CompressedRle))
        }
    }
}

/// Loads an annotation document and resolves image files under `images_root`.
///
/// Image files are only probed (existence and header dimensions); a missing
/// or mismatched file is reported and its annotations stay indexed.
pub fn load_dataset(annotations_path: &Path, images_root: &Path) -> Result<DatasetIndex, DatasetError> {
    let text = fs::read_to_string(annotations_path).map_err(|source| DatasetError::Io {
        path: annotations_path.to_path_buf(),
        source,
    })?;
    let doc: CocoDocument = serde_json::from_str(&text).map_err(|source| DatasetError::Json {
        path: annotations_path.to_path_buf(),
        source,
    })?;
    index_document(doc, images_root)
}

pub fn index_document(doc: CocoDocument, images_root: &Path) -> Result<DatasetIndex, DatasetError> {
    let mut index = DatasetIndex::default();
    for c in &doc.categories {
        index.categories.insert(c.id, c.name.clone());
    }
    for img in &doc.images {
        let rec = ImageRecord {
            id: img.id,
            file_name: img.file_name.clone(),
            path: images_root.join(&img.file_name),
            width: img.width,
            height: img.height,
        };
        if index.images.insert(img.id, rec).is_some() {
            return Err(DatasetError::DuplicateImage(img.id));
        }
        index.by_image.entry(img.id).or_default();
    }

    let mut header_issues: Vec<LoadIssue> = index
        .images
        .par_iter()
        .filter_map(|(&id, rec)| probe_image_file(id, rec))
        .collect();
    header_issues.sort_by_key(|i| (i.image_id, i.kind));
    index.issues.extend(header_issues);

    for ann in doc.annotations {
        match build_instance(&index, ann) {
            Ok(inst) => {
                index.by_image.entry(inst.image_id).or_default().push(inst.instance_id);
                index.instances.insert(inst.instance_id, inst);
            }
            Err(issue) => index.issues.push(issue),
        }
    }
    for ids in index.by_image.values_mut() {
        ids.sort_unstable();
    }
    Ok(index)
}

fn probe_image_file(id: u64, rec: &ImageRecord) -> Option<LoadIssue> {
    if !rec.path.is_file() {
        return Some(LoadIssue {
            kind: IssueKind::MissingImageFile,
            image_id: Some(id),
            instance_id: None,
            message: format!("image file {} not found", rec.path.display()),
        });
    }
    match ::image::image_dimensions(&rec.path) {
        Ok(dims) if dims == (rec.width, rec.height) => None,
        Ok((w, h)) => Some(LoadIssue {
            kind: IssueKind::ImageSizeMismatch,
            image_id: Some(id),
            instance_id: None,
            message: format!(
                "{} is {w}x{h}, annotations say {}x{}",
                rec.path.display(),
                rec.width,
                rec.height
            ),
        }),
        Err(e) => Some(LoadIssue {
            kind: IssueKind::MissingImageFile,
            image_id: Some(id),
            instance_id: None,
            message: format!("cannot read header of {}: {e}", rec.path.display()),
        }),
    }
}

fn build_instance(index: &DatasetIndex, ann: CocoAnnotation) -> Result<Instance, LoadIssue> {
    let issue = |kind, message: String| LoadIssue {
        kind,
        image_id: Some(ann.image_id),
        instance_id: Some(ann.id),
        message,
    };
    let Some(img) = index.images.get(&ann.image_id) else {
        return Err(issue(IssueKind::UnknownImage, format!("image {} not in document", ann.image_id)));
    };
    let Some(category_name) = index.categories.get(&ann.category_id) else {
        return Err(issue(
            IssueKind::UnknownCategory,
            format!("category {} not in document", ann.category_id),
        ));
    };
    let Some(seg) = Segmentation::parse(&ann.segmentation) else {
        return Err(issue(IssueKind::UnknownEncoding, "unrecognised segmentation encoding".into()));
    };
    let (mask, encoding) =
        decode_segmentation(&seg, img.width, img.height).map_err(|m| issue(IssueKind::DecodeFailure, m))?;
    let [x, y, w, h] = ann.bbox;
    let inst = Instance {
        instance_id: ann.id,
        image_id: ann.image_id,
        category_id: ann.category_id,
        category_name: category_name.clone(),
        bbox: BBox::from_xywh(x, y, w, h),
        mask,
        area: ann.area,
        is_crowd: ann.iscrowd != 0,
        encoding,
    };
    inst.validate(img.width, img.height)
        .map_err(|m| issue(IssueKind::InvariantViolation, m))?;
    Ok(inst)
}
