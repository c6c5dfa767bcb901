//! Box types shared by every stage.

use serde::{Deserialize, Serialize};

/// Axis-aligned box in corner form, pixel coordinates with a top-left origin.
///
/// `x_max`/`y_max` are exclusive edges, so a box covering the single pixel at
/// (3, 4) is `(3, 4, 4, 5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// Converts COCO's `[x, y, w, h]`.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// True when both extents are strictly positive and all coordinates finite.
    pub fn is_valid(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox::new(
            self.x_min.max(other.x_min),
            self.y_min.max(other.y_min),
            self.x_max.min(other.x_max),
            self.y_max.min(other.y_max),
        );
        (b.x_min < b.x_max && b.y_min < b.y_max).then_some(b)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        self.intersection(other).map_or(0.0, |b| b.area())
    }

    pub fn scaled(&self, factor: f64) -> BBox {
        BBox::new(
            self.x_min * factor,
            self.y_min * factor,
            self.x_max * factor,
            self.y_max * factor,
        )
    }
}

/// Integer pixel rectangle, half-open: covers columns `x0..x1` and rows `y0..y1`.
///
/// Coordinates are signed so a rectangle may hang partly (or fully) off an image;
/// consumers clip against the image they operate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl PixelRect {
    pub const fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::new(0, 0, width as i64, height as i64)
    }

    /// Smallest integer rectangle containing `b`.
    pub fn enclosing(b: &BBox) -> Self {
        Self::new(
            b.x_min.floor() as i64,
            b.y_min.floor() as i64,
            b.x_max.ceil() as i64,
            b.y_max.ceil() as i64,
        )
    }

    pub fn width(&self) -> i64 {
        (self.x1 - self.x0).max(0)
    }

    pub fn height(&self) -> i64 {
        (self.y1 - self.y0).max(0)
    }

    pub fn is_empty(&self) -> bool {
        self.width() == 0 || self.height() == 0
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Part of the rectangle lying inside a `width` x `height` image, if any.
    pub fn clip(&self, width: u32, height: u32) -> Option<PixelRect> {
        let r = PixelRect::new(
            self.x0.max(0),
            self.y0.max(0),
            self.x1.min(width as i64),
            self.y1.min(height as i64),
        );
        (!r.is_empty()).then_some(r)
    }

    pub fn to_bbox(&self) -> BBox {
        BBox::new(self.x0 as f64, self.y0 as f64, self.x1 as f64, self.y1 as f64)
    }
}
