//! Comparing detections on a modified image with those on the original.
//!
//! Detections of the two sets form a bipartite graph; an edge joins a
//! modified and an original detection when their boxes overlap (and, for the
//! class-constrained variant, their categories agree). Edge weight is the
//! overlap score, IoU by default. The score of the best matching divides its
//! total weight by `max(|modified| - 1, |original|)`; the `- 1` discounts the
//! detection of the transplanted object itself.

pub mod assignment;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::detector::{Category, Detection};
use crate::geometry::BBox;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Edge weight between two boxes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Overlap {
    #[default]
    Iou,
    /// Intersection over the smaller of the two areas.
    IntersectionOverMin,
}

impl Overlap {
    pub fn weight(&self, a: &BBox, b: &BBox) -> f64 {
        match self {
            Overlap::Iou => iou(a, b),
            Overlap::IntersectionOverMin => {
                let inter = a.intersection_area(b);
                if inter <= 0.0 {
                    0.0
                } else {
                    inter / a.area().min(b.area())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    /// Index into the modified-image detections.
    pub modified: usize,
    /// Index into the original-image detections.
    pub original: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub total_weight: f64,
    pub score: f64,
    pub n_mod: usize,
    pub n_orig: usize,
    pub unmatched_modified: Vec<usize>,
    pub unmatched_original: Vec<usize>,
    pub class_constrained: bool,
}

/// Match score from its parts; 1 when there is nothing besides the transplant to match.
pub fn score_from_total(total_weight: f64, n_mod: usize, n_orig: usize) -> f64 {
    let denom = (n_mod as i64 - 1).max(n_orig as i64);
    if denom <= 0 {
        1.0
    } else {
        total_weight / denom as f64
    }
}

pub fn match_score(m: &MatchResult, n_mod: usize, n_orig: usize) -> f64 {
    score_from_total(m.total_weight, n_mod, n_orig)
}

/// Edge weights, zero where no edge exists.
pub fn edge_weights(d_mod: &[Detection], d_orig: &[Detection], class_constrained: bool, overlap: Overlap) -> Vec<Vec<f64>> {
    d_mod
        .iter()
        .map(|m| {
            d_orig
                .iter()
                .map(|o| {
                    if class_constrained && m.category.id != o.category.id {
                        0.0
                    } else {
                        overlap.weight(&m.bbox, &o.bbox)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn build_match(d_mod: &[Detection], d_orig: &[Detection], class_constrained: bool) -> MatchResult {
    build_match_with(d_mod, d_orig, class_constrained, Overlap::Iou)
}

pub fn build_match_with(d_mod: &[Detection], d_orig: &[Detection], class_constrained: bool, overlap: Overlap) -> MatchResult {
    let weights = edge_weights(d_mod, d_orig, class_constrained, overlap);
    let chosen = assignment::max_weight_matching(&weights, d_mod.len(), d_orig.len());
    let pairs: Vec<MatchedPair> = chosen
        .into_iter()
        .map(|(i, j)| MatchedPair {
            modified: i,
            original: j,
            weight: weights[i][j],
        })
        .collect();
    let total_weight: f64 = pairs.iter().map(|p| p.weight).sum();
    let mut mod_used = vec![false; d_mod.len()];
    let mut orig_used = vec![false; d_orig.len()];
    for p in &pairs {
        mod_used[p.modified] = true;
        orig_used[p.original] = true;
    }
    let unmatched = |used: Vec<bool>| -> Vec<usize> {
        used.iter().enumerate().filter(|(_, &u)| !u).map(|(i, _)| i).collect()
    };
    MatchResult {
        score: score_from_total(total_weight, d_mod.len(), d_orig.len()),
        total_weight,
        n_mod: d_mod.len(),
        n_orig: d_orig.len(),
        unmatched_modified: unmatched(mod_used),
        unmatched_original: unmatched(orig_used),
        pairs,
        class_constrained,
    }
}

/// Categories detected on the modified image but not on the original.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassDifference {
    /// Sorted by category id.
    pub new_categories: Vec<Category>,
    pub cardinality: usize,
}

pub fn class_set_difference(d_mod: &[Detection], d_orig: &[Detection]) -> ClassDifference {
    let original: std::collections::BTreeSet<u64> = d_orig.iter().map(|d| d.category.id).collect();
    let new: BTreeMap<u64, &Category> = d_mod
        .iter()
        .filter(|d| !original.contains(&d.category.id))
        .map(|d| (d.category.id, &d.category))
        .collect();
    let new_categories: Vec<Category> = new.into_values().cloned().collect();
    ClassDifference {
        cardinality: new_categories.len(),
        new_categories,
    }
}

/// Fraction of each original box covered by the transplant's box, and the maximum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub per_box: Vec<(usize, f64)>,
    pub max_coverage: f64,
}

pub fn coverage(d_orig: &[Detection], t_box: &BBox) -> CoverageReport {
    let per_box: Vec<(usize, f64)> = d_orig
        .iter()
        .enumerate()
        .map(|(i, d)| (i, (d.bbox.intersection_area(t_box) / d.bbox.area()).clamp(0.0, 1.0)))
        .collect();
    let max_coverage = per_box.iter().map(|&(_, c)| c).fold(0.0, f64::max);
    CoverageReport { per_box, max_coverage }
}
