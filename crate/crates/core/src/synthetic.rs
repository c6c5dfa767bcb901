//! Seeded synthetic corpus: palette-coloured shapes on a white background,
//! written as PNG files plus a COCO-style annotations file.
//!
//! Shapes never touch each other, so the stub detector sees exactly one
//! component per annotated object on an untouched image.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::dataset::{DatasetError, ImageBuffer};
use crate::detector::PALETTE;

const BACKGROUND: [u8; 3] = [255, 255, 255];
/// Empty pixels kept between shapes.
const GAP: u32 = 2;
const MAX_PLACEMENT_TRIES: usize = 200;

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub images: u32,
    pub width: u32,
    pub height: u32,
    pub min_objects: u32,
    pub max_objects: u32,
    pub min_side: u32,
    pub max_side: u32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            images: 6,
            width: 160,
            height: 120,
            min_objects: 2,
            max_objects: 4,
            min_side: 14,
            max_side: 40,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub annotations: PathBuf,
    pub images_root: PathBuf,
}

#[derive(Clone, Copy)]
struct Shape {
    x0: u32,
    y0: u32,
    w: u32,
    h: u32,
    /// Notched shapes lose their lower-right quadrant.
    notched: bool,
}

impl Shape {
    fn polygon(&self) -> Vec<f64> {
        let (x0, y0, x1, y1) = (self.x0, self.y0, self.x0 + self.w, self.y0 + self.h);
        let pts: Vec<(u32, u32)> = if self.notched {
            let (mx, my) = (x0 + self.w / 2, y0 + self.h / 2);
            vec![(x0, y0), (x1, y0), (x1, my), (mx, my), (mx, y1), (x0, y1)]
        } else {
            vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
        };
        pts.into_iter().flat_map(|(x, y)| [x as f64, y as f64]).collect()
    }

    fn area(&self) -> u32 {
        if self.notched {
            self.w * self.h - (self.w - self.w / 2) * (self.h - self.h / 2)
        } else {
            self.w * self.h
        }
    }

    fn paint(&self, img: &mut ImageBuffer, rgb: [u8; 3]) {
        let (x1, y1) = (self.x0 + self.w, self.y0 + self.h);
        img.fill_rect(self.x0, self.y0, x1, y1, rgb);
        if self.notched {
            img.fill_rect(self.x0 + self.w / 2, self.y0 + self.h / 2, x1, y1, BACKGROUND);
        }
    }

    fn clear_of(&self, other: &Shape) -> bool {
        self.x0 + self.w + GAP <= other.x0
            || other.x0 + other.w + GAP <= self.x0
            || self.y0 + self.h + GAP <= other.y0
            || other.y0 + other.h + GAP <= self.y0
    }
}

/// Writes the corpus under `dir` and returns where it landed.
pub fn generate_synthetic(dir: &Path, cfg: &SyntheticConfig) -> Result<SyntheticCorpus, DatasetError> {
    let images_root = dir.join("images");
    fs::create_dir_all(&images_root).map_err(|source| DatasetError::Io {
        path: images_root.clone(),
        source,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    let max_side = cfg.max_side.min(cfg.width - GAP).min(cfg.height - GAP);
    let min_side = cfg.min_side.max(2).min(max_side);

    for image_id in 1..=cfg.images as u64 {
        let mut img = ImageBuffer::filled(cfg.width, cfg.height, BACKGROUND);
        let target = rng.gen_range(cfg.min_objects..=cfg.max_objects.max(cfg.min_objects));
        let mut shapes: Vec<Shape> = Vec::new();
        for _ in 0..MAX_PLACEMENT_TRIES {
            if shapes.len() as u32 >= target {
                break;
            }
            let w = rng.gen_range(min_side..=max_side);
            let h = rng.gen_range(min_side..=max_side);
            let shape = Shape {
                x0: rng.gen_range(0..=cfg.width - w),
                y0: rng.gen_range(0..=cfg.height - h),
                w,
                h,
                notched: rng.gen_bool(0.3),
            };
            if shapes.iter().all(|s| s.clear_of(&shape)) {
                shapes.push(shape);
            }
        }
        for shape in &shapes {
            let (cat_id, _, rgb) = PALETTE[rng.gen_range(0..PALETTE.len())];
            shape.paint(&mut img, rgb);
            annotations.push(json!({
                "id": annotations.len() as u64 + 1,
                "image_id": image_id,
                "category_id": cat_id,
                "bbox": [shape.x0, shape.y0, shape.w, shape.h],
                "area": shape.area(),
                "iscrowd": 0,
                "segmentation": [shape.polygon()],
            }));
        }
        let file_name = format!("{image_id:06}.png");
        img.save_png(&images_root.join(&file_name))?;
        images.push(json!({
            "id": image_id,
            "file_name": file_name,
            "width": cfg.width,
            "height": cfg.height,
        }));
    }

    let categories: Vec<_> = PALETTE
        .iter()
        .map(|(id, name, _)| json!({"id": id, "name": name}))
        .collect();
    let doc = json!({"images": images, "annotations": annotations, "categories": categories});
    let path = dir.join("annotations.json");
    let mut text = serde_json::to_string_pretty(&doc).map_err(|source| DatasetError::Json {
        path: path.clone(),
        source,
    })?;
    text.push('\n');
    fs::write(&path, text).map_err(|source| DatasetError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(SyntheticCorpus {
        annotations: path,
        images_root,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_dataset;
    use crate::detector::StubDetector;

    #[test]
    fn corpus_loads_cleanly_and_stub_sees_every_object() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_synthetic(dir.path(), &SyntheticConfig::default()).unwrap();
        let ds = load_dataset(&corpus.annotations, &corpus.images_root).unwrap();
        assert!(ds.issues.is_empty(), "{:?}", ds.issues);
        for id in ds.images.keys() {
            let img = ds.load_image(*id).unwrap();
            let found = StubDetector.detect_image(&img).len();
            assert_eq!(found, ds.instances_of(*id).count());
            for inst in ds.instances_of(*id) {
                assert_eq!(inst.mask.count_foreground() as f64, inst.area);
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig::default();
        let ca = generate_synthetic(a.path(), &cfg).unwrap();
        let cb = generate_synthetic(b.path(), &cfg).unwrap();
        assert_eq!(fs::read(&ca.annotations).unwrap(), fs::read(&cb.annotations).unwrap());
        assert_eq!(
            fs::read(ca.images_root.join("000001.png")).unwrap(),
            fs::read(cb.images_root.join("000001.png")).unwrap()
        );
    }
}
