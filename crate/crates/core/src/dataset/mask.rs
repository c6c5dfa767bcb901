use crate::geometry::PixelRect;

/// One bit per pixel, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("foreground", &self.count_foreground())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width as usize * height as usize],
        }
    }

    /// Builds a mask from row-major bits; `None` if the length is wrong.
    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Option<Self> {
        (bits.len() == width as usize * height as usize).then_some(Self {
            width,
            height,
            bits,
        })
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

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count_foreground(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn count_background(&self) -> usize {
        self.bits.len() - self.count_foreground()
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        assert_eq!(self.dimensions(), other.dimensions());
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    /// Iterates over foreground `(x, y)` positions in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }

    /// Tight bounding rectangle of the foreground, `None` for an empty mask.
    pub fn foreground_bounds(&self) -> Option<PixelRect> {
        self.foreground().fold(None, |acc, (x, y)| {
            let (x, y) = (x as i64, y as i64);
            Some(match acc {
                None => PixelRect::new(x, y, x + 1, y + 1),
                Some(r) => PixelRect::new(r.x0.min(x), r.y0.min(y), r.x1.max(x + 1), r.y1.max(y + 1)),
            })
        })
    }

    /// Copies `rect` out of the mask. Positions outside the mask read as background.
    pub fn crop(&self, rect: PixelRect) -> BinaryMask {
        let w = rect.width() as u32;
        let h = rect.height() as u32;
        let mut out = BinaryMask::new(w, h);
        for cy in 0..h {
            let sy = rect.y0 + cy as i64;
            if sy < 0 || sy >= self.height as i64 {
                continue;
            }
            for cx in 0..w {
                let sx = rect.x0 + cx as i64;
                if sx >= 0 && sx < self.width as i64 && self.get(sx as u32, sy as u32) {
                    out.set(cx, cy, true);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_preserves_foreground_inside_rect() {
        let mut m = BinaryMask::new(6, 6);
        m.set(2, 2, true);
        m.set(3, 4, true);
        m.set(5, 5, true);
        let c = m.crop(PixelRect::new(2, 2, 5, 5));
        assert_eq!(c.dimensions(), (3, 3));
        assert_eq!(c.count_foreground(), 2);
        assert!(c.get(0, 0) && c.get(1, 2));
    }

    #[test]
    fn foreground_bounds_is_tight() {
        let mut m = BinaryMask::new(8, 8);
        assert_eq!(m.foreground_bounds(), None);
        m.set(1, 6, true);
        m.set(4, 2, true);
        assert_eq!(m.foreground_bounds(), Some(PixelRect::new(1, 2, 5, 7)));
    }
}
