//! Rule-based detector for synthetic scenes.
//!
//! Every pixel whose colour is exactly one of the [`PALETTE`] entries belongs
//! to that colour; anything else is background. Each 4-connected component
//! of one colour with at least [`MIN_COMPONENT_PIXELS`] pixels becomes a
//! detection whose box is the component's bounding rectangle (exclusive max
//! edges), whose category is the palette entry, and whose score is the box
//! area over the image area, clamped to `[0.01, 0.99]`.

use super::{Category, Detection, DetectionSet, Detector, DetectorError};
use crate::dataset::ImageBuffer;
use crate::geometry::BBox;

pub const STUB_DETECTOR_ID: &str = "stub-v1";
pub const MIN_COMPONENT_PIXELS: usize = 4;
const SCORE_FLOOR: f64 = 0.01;
const SCORE_CEIL: f64 = 0.99;

/// `(category id, name, rgb)`
pub const PALETTE: [(u64, &str, [u8; 3]); 8] = [
    (1, "red", [255, 0, 0]),
    (2, "green", [0, 255, 0]),
    (3, "blue", [0, 0, 255]),
    (4, "yellow", [255, 255, 0]),
    (5, "cyan", [0, 255, 255]),
    (6, "magenta", [255, 0, 255]),
    (7, "orange", [255, 128, 0]),
    (8, "purple", [128, 0, 255]),
];

/// Palette index of an exact colour match.
pub fn palette_color(rgb: [u8; 3]) -> Option<usize> {
    PALETTE.iter().position(|(_, _, c)| *c == rgb)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StubDetector;

impl StubDetector {
    pub fn detect_image(&self, image: &ImageBuffer) -> Vec<Detection> {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let labels: Vec<Option<usize>> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| palette_color(image.pixel(x as u32, y as u32)))
            .collect();
        let mut seen = vec![false; w * h];
        let mut stack = Vec::new();
        let image_area = (w * h) as f64;
        let mut out = Vec::new();

        for start in 0..w * h {
            let Some(color) = labels[start] else { continue };
            if seen[start] {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
            let mut count = 0usize;
            while let Some(p) = stack.pop() {
                let (x, y) = (p % w, p / w);
                count += 1;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
                let mut visit = |q: usize| {
                    if !seen[q] && labels[q] == Some(color) {
                        seen[q] = true;
                        stack.push(q);
                    }
                };
                if x > 0 {
                    visit(p - 1);
                }
                if x + 1 < w {
                    visit(p + 1);
                }
                if y > 0 {
                    visit(p - w);
                }
                if y + 1 < h {
                    visit(p + w);
                }
            }
            if count < MIN_COMPONENT_PIXELS {
                continue;
            }
            let bbox = BBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64);
            let score = (bbox.area() / image_area).clamp(SCORE_FLOOR, SCORE_CEIL);
            let (id, name, _) = PALETTE[color];
            out.push(Detection::new(bbox, score, Category::new(id, name)).expect("component box is non-empty"));
        }
        out
    }
}

impl Detector for StubDetector {
    fn detector_id(&self) -> String {
        STUB_DETECTOR_ID.to_string()
    }

    fn detect(&self, image: &ImageBuffer, case_id: &str) -> Result<DetectionSet, DetectorError> {
        Ok(DetectionSet::new(case_id, STUB_DETECTOR_ID, self.detect_image(image)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const WHITE: [u8; 3] = [255, 255, 255];

    #[test]
    fn blank_image_has_no_detections() {
        let img = ImageBuffer::filled(64, 48, WHITE);
        assert!(StubDetector.detect(&img, "x").unwrap().is_empty());
    }

    #[test]
    fn single_red_rectangle() {
        let mut img = ImageBuffer::filled(200, 200, WHITE);
        img.fill_rect(30, 50, 70, 80, [255, 0, 0]);
        let set = StubDetector.detect(&img, "x").unwrap();
        assert_eq!(set.len(), 1);
        let d = &set.detections()[0];
        assert_eq!(d.category, Category::new(1, "red"));
        assert_eq!(d.bbox, BBox::new(30.0, 50.0, 70.0, 80.0));
        assert_eq!(d.score, 1200.0 / 40000.0);
        assert!((d.score - 0.03).abs() < 1e-15);
    }

    #[test]
    fn two_rectangles_in_canonical_order() {
        let mut img = ImageBuffer::filled(100, 100, WHITE);
        img.fill_rect(60, 60, 70, 70, [0, 0, 255]);
        img.fill_rect(0, 0, 20, 20, [0, 255, 0]);
        let set = StubDetector.detect(&img, "x").unwrap();
        let names: Vec<_> = set.detections().iter().map(|d| d.category.name.as_str()).collect();
        // larger box scores higher
        assert_eq!(names, vec!["green", "blue"]);
    }

    #[test]
    fn touching_colours_stay_separate_and_speckles_are_ignored() {
        let mut img = ImageBuffer::filled(50, 50, WHITE);
        img.fill_rect(0, 0, 10, 10, [255, 0, 0]);
        img.fill_rect(10, 0, 20, 10, [0, 255, 0]);
        img.fill_rect(40, 40, 41, 43, [0, 0, 255]);
        let set = StubDetector.detect(&img, "x").unwrap();
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn near_palette_colours_are_background() {
        let mut img = ImageBuffer::filled(20, 20, WHITE);
        img.fill_rect(0, 0, 10, 10, [254, 0, 0]);
        assert!(StubDetector.detect(&img, "x").unwrap().is_empty());
    }

    #[test]
    fn score_is_clamped() {
        let img = ImageBuffer::filled(10, 10, [255, 0, 0]);
        let set = StubDetector.detect(&img, "x").unwrap();
        assert_eq!(set.detections()[0].score, 0.99);
        let mut img = ImageBuffer::filled(100, 100, WHITE);
        img.fill_rect(0, 0, 2, 2, [255, 0, 0]);
        assert_eq!(StubDetector.detect(&img, "x").unwrap().detections()[0].score, 0.01);
    }
}
