//! Pixel-level manipulations: sprite extraction, transplanting, same-image
//! duplication and the feature-interference ablations.
//!
//! Compositing is hard: a pixel is either copied from the sprite (mask
//! foreground) or left as is. There is no blending at sprite borders.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{BinaryMask, ImageBuffer, Instance};
use crate::geometry::PixelRect;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompositeError {
    #[error("instance bbox {rect:?} is outside the {width}x{height} image")]
    BoxOutsideImage { rect: PixelRect, width: u32, height: u32 },
    #[error("instance {instance_id} mask does not match its image dimensions")]
    MaskMismatch { instance_id: u64 },
    #[error("sprite for instance {instance_id} has no foreground pixels")]
    EmptySprite { instance_id: u64 },
    #[error("{sprite_w}x{sprite_h} sprite at ({tx}, {ty}) does not fit in {base_w}x{base_h} image")]
    OutOfBounds {
        sprite_w: u32,
        sprite_h: u32,
        tx: u32,
        ty: u32,
        base_w: u32,
        base_h: u32,
    },
    #[error("mask is {mask_w}x{mask_h} but image is {image_w}x{image_h}")]
    DimensionMismatch {
        mask_w: u32,
        mask_h: u32,
        image_w: u32,
        image_h: u32,
    },
}

/// Placement origin of a sprite's top-left corner in the target image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Translation {
    pub x: u32,
    pub y: u32,
}

impl Translation {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

/// Bounding-box crop of an object plus its mask, ready for placement.
#[derive(Debug, Clone, PartialEq)]
pub struct Sprite {
    pixels: ImageBuffer,
    mask: BinaryMask,
    pub source_instance_id: u64,
    pub source_image_id: u64,
    /// Where the crop was taken from in the source image.
    pub origin: Translation,
}

impl Sprite {
    pub fn new(
        pixels: ImageBuffer,
        mask: BinaryMask,
        source_instance_id: u64,
        source_image_id: u64,
        origin: Translation,
    ) -> Result<Self, CompositeError> {
        if mask.count_foreground() == 0 {
            return Err(CompositeError::EmptySprite {
                instance_id: source_instance_id,
            });
        }
        Self::from_raw_parts(pixels, mask, source_instance_id, source_image_id, origin)
    }

    /// Like [`Sprite::new`] but accepts a mask without foreground.
    pub fn from_raw_parts(
        pixels: ImageBuffer,
        mask: BinaryMask,
        source_instance_id: u64,
        source_image_id: u64,
        origin: Translation,
    ) -> Result<Self, CompositeError> {
        if mask.dimensions() != pixels.dimensions() {
            return Err(CompositeError::DimensionMismatch {
                mask_w: mask.width(),
                mask_h: mask.height(),
                image_w: pixels.width(),
                image_h: pixels.height(),
            });
        }
        Ok(Self {
            pixels,
            mask,
            source_instance_id,
            source_image_id,
            origin,
        })
    }

    pub fn pixels(&self) -> &ImageBuffer {
        &self.pixels
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.pixels.dimensions()
    }

    /// Rectangle the sprite occupies when placed at `t`.
    pub fn placement(&self, t: Translation) -> PixelRect {
        PixelRect::new(
            t.x as i64,
            t.y as i64,
            t.x as i64 + self.width() as i64,
            t.y as i64 + self.height() as i64,
        )
    }
}

/// Crop rectangle for an instance: its bbox rounded outward to whole pixels.
pub fn sprite_rect(instance: &Instance) -> PixelRect {
    PixelRect::enclosing(&instance.bbox)
}

pub fn extract_sprite(image: &ImageBuffer, instance: &Instance) -> Result<Sprite, CompositeError> {
    let (w, h) = image.dimensions();
    if instance.mask.dimensions() != (w, h) {
        return Err(CompositeError::MaskMismatch {
            instance_id: instance.instance_id,
        });
    }
    let rect = sprite_rect(instance);
    if rect.is_empty() || rect.x0 < 0 || rect.y0 < 0 || rect.x1 > w as i64 || rect.y1 > h as i64 {
        return Err(CompositeError::BoxOutsideImage {
            rect,
            width: w,
            height: h,
        });
    }
    let (cw, ch) = (rect.width() as u32, rect.height() as u32);
    let (x0, y0) = (rect.x0 as u32, rect.y0 as u32);
    let mut samples = Vec::with_capacity(cw as usize * ch as usize * 3);
    for y in y0..y0 + ch {
        for x in x0..x0 + cw {
            samples.extend_from_slice(&image.pixel(x, y));
        }
    }
    let pixels = ImageBuffer::new(cw, ch, samples).expect("crop has positive size");
    let mask = instance.mask.crop(rect);
    Sprite::new(
        pixels,
        mask,
        instance.instance_id,
        instance.image_id,
        Translation::new(x0, y0),
    )
}

fn check_fits(base: &ImageBuffer, sprite: &Sprite, t: Translation) -> Result<(), CompositeError> {
    let (bw, bh) = base.dimensions();
    let (sw, sh) = sprite.dimensions();
    if t.x as u64 + sw as u64 > bw as u64 || t.y as u64 + sh as u64 > bh as u64 {
        return Err(CompositeError::OutOfBounds {
            sprite_w: sw,
            sprite_h: sh,
            tx: t.x,
            ty: t.y,
            base_w: bw,
            base_h: bh,
        });
    }
    Ok(())
}

/// Copies the sprite's foreground pixels into a copy of `base` at `t`.
pub fn transplant(base: &ImageBuffer, sprite: &Sprite, t: Translation) -> Result<ImageBuffer, CompositeError> {
    check_fits(base, sprite, t)?;
    let mut out = base.clone();
    for (sx, sy) in sprite.mask.foreground() {
        out.set_pixel(t.x + sx, t.y + sy, sprite.pixels.pixel(sx, sy));
    }
    Ok(out)
}

/// Copies an object to another place in its own image.
pub fn duplicate_within(image: &ImageBuffer, instance: &Instance, t: Translation) -> Result<ImageBuffer, CompositeError> {
    let sprite = extract_sprite(image, instance)?;
    transplant(image, &sprite, t)
}

/// What replaces pixels outside the kept box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutsideFill {
    Zero,
    /// Independent uniform samples over the full 8-bit range, per channel.
    Noise,
}

fn clip_or_err(image: &ImageBuffer, rect: PixelRect) -> Result<PixelRect, CompositeError> {
    rect.clip(image.width(), image.height())
        .ok_or(CompositeError::BoxOutsideImage {
            rect,
            width: image.width(),
            height: image.height(),
        })
}

/// Replaces every pixel outside `rect` by zero or seeded noise.
///
/// Noise is drawn row-major over the outside pixels from a ChaCha8 stream
/// seeded with `seed`, three samples per pixel.
pub fn ablate_outside_box(
    image: &ImageBuffer,
    rect: PixelRect,
    fill: OutsideFill,
    seed: u64,
) -> Result<ImageBuffer, CompositeError> {
    let keep = clip_or_err(image, rect)?;
    let mut out = image.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for y in 0..image.height() {
        for x in 0..image.width() {
            if keep.contains(x as i64, y as i64) {
                continue;
            }
            let v = match fill {
                OutsideFill::Zero => [0, 0, 0],
                OutsideFill::Noise => [rng.gen(), rng.gen(), rng.gen()],
            };
            out.set_pixel(x, y, v);
        }
    }
    Ok(out)
}

/// Zeroes pixels inside `rect` that are background in the full-image `mask`.
pub fn ablate_non_object_inside_box(
    image: &ImageBuffer,
    rect: PixelRect,
    mask: &BinaryMask,
) -> Result<ImageBuffer, CompositeError> {
    if mask.dimensions() != image.dimensions() {
        return Err(CompositeError::DimensionMismatch {
            mask_w: mask.width(),
            mask_h: mask.height(),
            image_w: image.width(),
            image_h: image.height(),
        });
    }
    let mut out = image.clone();
    let Some(r) = rect.clip(image.width(), image.height()) else {
        return Ok(out);
    };
    for y in r.y0 as u32..r.y1 as u32 {
        for x in r.x0 as u32..r.x1 as u32 {
            if !mask.get(x, y) {
                out.set_pixel(x, y, [0, 0, 0]);
            }
        }
    }
    Ok(out)
}

/// The three feature-interference variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AblationVariant {
    /// Everything outside the box set to zero.
    OutsideZero,
    /// Outside zeroed, then non-object pixels inside the box zeroed.
    MaskOnly,
    /// Non-object pixels inside the box zeroed, then noise outside.
    MaskPlusNoise,
}

impl AblationVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            AblationVariant::OutsideZero => "outside-zero",
            AblationVariant::MaskOnly => "mask-only",
            AblationVariant::MaskPlusNoise => "mask-plus-noise",
        }
    }
}

pub fn apply_ablation(
    image: &ImageBuffer,
    rect: PixelRect,
    mask: &BinaryMask,
    variant: AblationVariant,
    seed: u64,
) -> Result<ImageBuffer, CompositeError> {
    match variant {
        AblationVariant::OutsideZero => ablate_outside_box(image, rect, OutsideFill::Zero, seed),
        AblationVariant::MaskOnly => {
            let outside = ablate_outside_box(image, rect, OutsideFill::Zero, seed)?;
            ablate_non_object_inside_box(&outside, rect, mask)
        }
        AblationVariant::MaskPlusNoise => {
            let inside = ablate_non_object_inside_box(image, rect, mask)?;
            ablate_outside_box(&inside, rect, OutsideFill::Noise, seed)
        }
    }
}
