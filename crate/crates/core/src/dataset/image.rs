use std::path::Path;

use image::{ImageFormat, RgbImage};

use super::DatasetError;

/// 8-bit RGB raster stored row-major, three samples per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, DatasetError> {
        if width == 0 || height == 0 {
            return Err(DatasetError::InvalidImage(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(DatasetError::InvalidImage(format!(
                "{width}x{height} image needs {expected} samples, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image filled with a single colour.
    ///
    /// # Panics
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.pixels
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }

    /// Fills `[x0, x1) x [y0, y1)` with `rgb`; the rectangle must be in bounds.
    pub fn fill_rect(&mut self, x0: u32, y0: u32, x1: u32, y1: u32, rgb: [u8; 3]) {
        for y in y0..y1 {
            for x in x0..x1 {
                self.set_pixel(x, y, rgb);
            }
        }
    }

    pub fn from_rgb_image(img: RgbImage) -> Result<Self, DatasetError> {
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw())
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("sample count checked at construction")
    }

    /// Reads a PNG or JPEG file, converting to 8-bit RGB.
    pub fn open(path: &Path) -> Result<Self, DatasetError> {
        let img = image::open(path).map_err(|source| DatasetError::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_rgb_image(img.to_rgb8())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), DatasetError> {
        self.to_rgb_image()
            .save_with_format(path, ImageFormat::Png)
            .map_err(|source| DatasetError::Image {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_rgb_image()
            .write_to(&mut out, ImageFormat::Png)
            .expect("in-memory PNG encoding does not fail");
        out.into_inner()
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, DatasetError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|source| {
            DatasetError::Image {
                path: "<memory>".into(),
                source,
            }
        })?;
        Self::from_rgb_image(img.to_rgb8())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_sample_count() {
        assert!(ImageBuffer::new(2, 2, vec![0; 11]).is_err());
        assert!(ImageBuffer::new(0, 2, vec![]).is_err());
        assert!(ImageBuffer::new(2, 2, vec![0; 12]).is_ok());
    }

    #[test]
    fn png_round_trip_is_lossless() {
        let mut img = ImageBuffer::filled(5, 3, [10, 20, 30]);
        img.set_pixel(4, 2, [255, 0, 7]);
        let back = ImageBuffer::decode_png(&img.encode_png()).unwrap();
        assert_eq!(back, img);
    }
}
