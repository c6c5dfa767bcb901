//! Translation-grid sweeps.
//!
//! A sweep fixes one base image and one sprite and yields a test image for
//! every grid translation, preceded by the untouched base image (the null
//! case) so the reference detections come from the same run.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compositing::{extract_sprite, sprite_rect, transplant, CompositeError, Sprite, Translation};
use crate::dataset::{DatasetError, DatasetIndex, ImageBuffer, Instance};
use crate::geometry::PixelRect;

/// Random source selection gives up after this many rejected draws.
pub const MAX_RANDOM_DRAWS: usize = 1000;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error("{sprite_w}x{sprite_h} sprite does not fit in {base_w}x{base_h} image")]
    SpriteTooLarge {
        sprite_w: u32,
        sprite_h: u32,
        base_w: u32,
        base_h: u32,
    },
    #[error("instance {instance_id} is not eligible: {reason}")]
    NotEligible { instance_id: u64, reason: Rejection },
    #[error("instance {instance_id} is not on image {image_id}")]
    WrongImage { instance_id: u64, image_id: u64 },
    #[error("no eligible instance found after {0} random draws")]
    NoEligibleInstance(usize),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Composite(#[from] CompositeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Grid step in pixels.
    pub stride: u32,
    pub min_area_fraction: f64,
    pub max_area_fraction: f64,
    pub exclude_crowd: bool,
    pub seed: u64,
    /// Detection confidence threshold applied before scoring (strict `>`).
    pub confidence_threshold: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            stride: 10,
            min_area_fraction: 0.01,
            max_area_fraction: 0.30,
            exclude_crowd: true,
            seed: 0,
            confidence_threshold: 0.5,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.stride < 1 {
            return Err(SweepError::Config("stride must be at least 1".into()));
        }
        if !(0.0 < self.min_area_fraction
            && self.min_area_fraction < self.max_area_fraction
            && self.max_area_fraction <= 1.0)
        {
            return Err(SweepError::Config(format!(
                "need 0 < min_area_fraction < max_area_fraction <= 1, got {} and {}",
                self.min_area_fraction, self.max_area_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(SweepError::Config(format!(
                "confidence threshold {} outside [0, 1]",
                self.confidence_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseVariant {
    /// The unmodified base image.
    Original,
    Transplant,
    /// Source and base are the same image.
    Duplicate,
}

impl CaseVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            CaseVariant::Original => "original",
            CaseVariant::Transplant => "transplant",
            CaseVariant::Duplicate => "duplicate",
        }
    }
}

/// One generated image and where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub case_id: String,
    pub base_image_id: u64,
    pub source_image_id: u64,
    pub instance_id: u64,
    /// `None` for the original (null) case.
    pub translation: Option<Translation>,
    pub variant: CaseVariant,
    /// Rectangle covered by the placed sprite; `None` for the null case.
    pub placement: Option<PixelRect>,
}

impl TestCase {
    /// Deterministic id built from every other field.
    pub fn make_id(
        variant: CaseVariant,
        base_image_id: u64,
        source_image_id: u64,
        instance_id: u64,
        translation: Option<Translation>,
    ) -> String {
        match translation {
            None => format!("{}-b{base_image_id}", variant.as_str()),
            Some(t) => format!(
                "{}-b{base_image_id}-s{source_image_id}-i{instance_id}-x{}-y{}",
                variant.as_str(),
                t.x,
                t.y
            ),
        }
    }

    pub fn is_original(&self) -> bool {
        self.variant == CaseVariant::Original
    }
}

/// All grid origins keeping a `sprite` sized object inside `base`.
///
/// Each axis takes the multiples of `stride` up to the far limit, plus the far
/// limit itself when it is not a multiple. Ordered row-major (y outer).
pub fn enumerate_translations(base: (u32, u32), sprite: (u32, u32), stride: u32) -> Result<Vec<Translation>, SweepError> {
    let (bw, bh) = base;
    let (sw, sh) = sprite;
    if sw > bw || sh > bh {
        return Err(SweepError::SpriteTooLarge {
            sprite_w: sw,
            sprite_h: sh,
            base_w: bw,
            base_h: bh,
        });
    }
    if stride == 0 {
        return Err(SweepError::Config("stride must be at least 1".into()));
    }
    let axis = |limit: u32| -> Vec<u32> {
        let mut v: Vec<u32> = (0..=limit).step_by(stride as usize).collect();
        if !limit.is_multiple_of(stride) {
            v.push(limit);
        }
        v
    };
    let xs = axis(bw - sw);
    let ys = axis(bh - sh);
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| Translation::new(x, y)))
        .collect())
}

/// Why an instance cannot serve as a transplant source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rejection {
    Crowd,
    DoesNotFit,
    TooLarge,
    TooSmall,
}

impl Rejection {
    pub fn as_str(&self) -> &'static str {
        match self {
            Rejection::Crowd => "crowd",
            Rejection::DoesNotFit => "does-not-fit",
            Rejection::TooLarge => "too-large",
            Rejection::TooSmall => "too-small",
        }
    }
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Checks an instance against the area band and crowd rule.
///
/// The area fraction is the sprite crop area over the base image area; both
/// ends of the band are inclusive.
pub fn eligible_instance(instance: &Instance, base: (u32, u32), cfg: &SweepConfig) -> Result<(), Rejection> {
    if cfg.exclude_crowd && instance.is_crowd {
        return Err(Rejection::Crowd);
    }
    let r = sprite_rect(instance);
    eligible_size((r.width() as u32, r.height() as u32), base, cfg)
}

pub fn eligible_size(sprite: (u32, u32), base: (u32, u32), cfg: &SweepConfig) -> Result<(), Rejection> {
    let (sw, sh) = sprite;
    let (bw, bh) = base;
    if sw > bw || sh > bh {
        return Err(Rejection::DoesNotFit);
    }
    let fraction = (sw as f64 * sh as f64) / (bw as f64 * bh as f64);
    if fraction > cfg.max_area_fraction {
        Err(Rejection::TooLarge)
    } else if fraction < cfg.min_area_fraction {
        Err(Rejection::TooSmall)
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceSelection {
    Instance(u64),
    /// Random instance from `source_image`, or from a random other image when `None`.
    Random { source_image: Option<u64> },
}

/// A resolved sweep: base pixels, sprite and the ordered case list.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    base: ImageBuffer,
    sprite: Sprite,
    cases: Vec<TestCase>,
}

impl SweepPlan {
    pub fn new(
        dataset: &DatasetIndex,
        base_image_id: u64,
        selection: SourceSelection,
        cfg: &SweepConfig,
    ) -> Result<Self, SweepError> {
        cfg.validate()?;
        let base_rec = dataset.image(base_image_id)?;
        let base_dims = (base_rec.width, base_rec.height);
        let instance = match selection {
            SourceSelection::Instance(id) => {
                let inst = dataset.instance(id)?;
                eligible_instance(inst, base_dims, cfg).map_err(|reason| SweepError::NotEligible {
                    instance_id: id,
                    reason,
                })?;
                inst
            }
            SourceSelection::Random { source_image } => {
                pick_random_instance(dataset, base_image_id, source_image, cfg)?
            }
        };
        let base = dataset.load_image(base_image_id)?;
        let source = if instance.image_id == base_image_id {
            base.clone()
        } else {
            dataset.load_image(instance.image_id)?
        };
        let sprite = extract_sprite(&source, instance)?;
        Self::from_parts(base_image_id, base, sprite, cfg.stride)
    }

    /// Builds a plan from an already-extracted sprite.
    pub fn from_parts(base_image_id: u64, base: ImageBuffer, sprite: Sprite, stride: u32) -> Result<Self, SweepError> {
        let translations = enumerate_translations(base.dimensions(), sprite.dimensions(), stride)?;
        let variant = if sprite.source_image_id == base_image_id {
            CaseVariant::Duplicate
        } else {
            CaseVariant::Transplant
        };
        let (src, inst) = (sprite.source_image_id, sprite.source_instance_id);
        let mut cases = Vec::with_capacity(translations.len() + 1);
        cases.push(TestCase {
            case_id: TestCase::make_id(CaseVariant::Original, base_image_id, src, inst, None),
            base_image_id,
            source_image_id: src,
            instance_id: inst,
            translation: None,
            variant: CaseVariant::Original,
            placement: None,
        });
        cases.extend(translations.into_iter().map(|t| TestCase {
            case_id: TestCase::make_id(variant, base_image_id, src, inst, Some(t)),
            base_image_id,
            source_image_id: src,
            instance_id: inst,
            translation: Some(t),
            variant,
            placement: Some(sprite.placement(t)),
        }));
        Ok(Self { base, sprite, cases })
    }

    pub fn cases(&self) -> &[TestCase] {
        &self.cases
    }

    pub fn base(&self) -> &ImageBuffer {
        &self.base
    }

    pub fn sprite(&self) -> &Sprite {
        &self.sprite
    }

    /// Produces the image for one of this plan's cases.
    pub fn render(&self, case: &TestCase) -> Result<ImageBuffer, SweepError> {
        match case.translation {
            None => Ok(self.base.clone()),
            Some(t) => Ok(transplant(&self.base, &self.sprite, t)?),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<(TestCase, ImageBuffer), SweepError>> + '_ {
        self.cases
            .iter()
            .map(move |c| self.render(c).map(|img| (c.clone(), img)))
    }
}

/// Resolves the sweep and streams `(case, image)` pairs, null case first.
pub fn generate_sweep(
    dataset: &DatasetIndex,
    base_image_id: u64,
    selection: SourceSelection,
    cfg: &SweepConfig,
) -> Result<impl Iterator<Item = Result<(TestCase, ImageBuffer), SweepError>>, SweepError> {
    let plan = SweepPlan::new(dataset, base_image_id, selection, cfg)?;
    let mut index = 0;
    Ok(std::iter::from_fn(move || {
        let case = plan.cases.get(index)?;
        index += 1;
        Some(plan.render(case).map(|img| (case.clone(), img)))
    }))
}

fn pick_random_instance<'a>(
    dataset: &'a DatasetIndex,
    base_image_id: u64,
    source_image: Option<u64>,
    cfg: &SweepConfig,
) -> Result<&'a Instance, SweepError> {
    let base = dataset.image(base_image_id)?;
    let base_dims = (base.width, base.height);
    let candidates: Vec<u64> = match source_image {
        Some(id) => {
            dataset.image(id)?;
            vec![id]
        }
        None => dataset
            .images
            .keys()
            .copied()
            .filter(|&id| id != base_image_id)
            .collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ base_image_id.rotate_left(32));
    for _ in 0..MAX_RANDOM_DRAWS {
        let Some(&image_id) = candidates.choose(&mut rng) else {
            break;
        };
        let Some(ids) = dataset.by_image.get(&image_id).filter(|ids| !ids.is_empty()) else {
            continue;
        };
        let inst = &dataset.instances[ids.choose(&mut rng).expect("non-empty")];
        if eligible_instance(inst, base_dims, cfg).is_ok() {
            return Ok(inst);
        }
    }
    Err(SweepError::NoEligibleInstance(MAX_RANDOM_DRAWS))
}
