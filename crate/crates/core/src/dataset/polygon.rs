use thiserror::Error;

use super::BinaryMask;

#[derive(Debug, Error, PartialEq)]
pub enum PolygonError {
    #[error("no polygons to rasterize")]
    Empty,
    #[error("polygon {0} has fewer than 3 vertices")]
    TooFewVertices(usize),
    #[error("polygon {0} has an odd number of coordinates")]
    OddCoordinates(usize),
    #[error("polygon {0} has a non-finite coordinate")]
    NonFinite(usize),
}

/// Splits COCO's flat `[x1, y1, x2, y2, ...]` list into points.
pub fn points_from_flat(index: usize, flat: &[f64]) -> Result<Vec<[f64; 2]>, PolygonError> {
    if !flat.len().is_multiple_of(2) {
        return Err(PolygonError::OddCoordinates(index));
    }
    Ok(flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
}

/// Fills the union of `polygons` on a `height` x `width` grid.
///
/// Each polygon is filled with the even-odd rule; a pixel is foreground when
/// its centre `(x + 0.5, y + 0.5)` is inside. Vertices are clamped to the
/// image rectangle first.
pub fn rasterize_polygons(polygons: &[Vec<[f64; 2]>], height: u32, width: u32) -> Result<BinaryMask, PolygonError> {
    if polygons.is_empty() {
        return Err(PolygonError::Empty);
    }
    let mut mask = BinaryMask::new(width, height);
    let mut crossings = Vec::new();
    for (index, poly) in polygons.iter().enumerate() {
        if poly.len() < 3 {
            return Err(PolygonError::TooFewVertices(index));
        }
        if poly.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PolygonError::NonFinite(index));
        }
        let pts: Vec<[f64; 2]> = poly
            .iter()
            .map(|&[x, y]| [x.clamp(0.0, width as f64), y.clamp(0.0, height as f64)])
            .collect();
        let y_lo = pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let y_hi = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let row_start = (y_lo - 0.5).floor().max(0.0) as u32;
        let row_end = ((y_hi + 0.5).ceil() as u32).min(height);

        for y in row_start..row_end {
            let yc = y as f64 + 0.5;
            crossings.clear();
            let mut j = pts.len() - 1;
            for i in 0..pts.len() {
                let [xi, yi] = pts[i];
                let [xj, yj] = pts[j];
                if (yi > yc) != (yj > yc) {
                    crossings.push((xj - xi) * (yc - yi) / (yj - yi) + xi);
                }
                j = i;
            }
            crossings.sort_by(f64::total_cmp);
            // centre xc is inside iff an odd number of crossings lie right of it,
            // i.e. c[2k] <= xc < c[2k+1]
            for span in crossings.chunks_exact(2) {
                let (a, b) = (span[0], span[1]);
                let first = ((a - 0.5).floor().max(0.0)) as u32;
                let last = ((b + 0.5).ceil() as u32).min(width);
                for x in first..last {
                    let xc = x as f64 + 0.5;
                    if xc >= a && xc < b {
                        mask.set(x, y, true);
                    }
                }
            }
        }
    }
    Ok(mask)
}
