//! Greedy non-maximum suppression and a probe for suppression chain reactions.
//!
//! Removing (or weakening) one detection can change which detections survive
//! far away from it: if A suppressed B, B no longer suppresses C once A is
//! gone. [`chain_reaction_probe`] reports exactly those differences.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::detector::Detection;
use crate::matching::iou;

#[derive(Debug, Error, PartialEq)]
pub enum NmsError {
    #[error("iou threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("detection index {index} out of range for {len} detections")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("attenuation factor {0} outside [0, 1)")]
    InvalidFactor(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmsConfig {
    pub iou_threshold: f64,
    pub class_aware: bool,
}

impl Default for NmsConfig {
    fn default() -> Self {
        NmsConfig {
            iou_threshold: 0.5,
            class_aware: true,
        }
    }
}

impl NmsConfig {
    pub fn validate(&self) -> Result<(), NmsError> {
        if self.iou_threshold > 0.0 && self.iou_threshold < 1.0 {
            Ok(())
        } else {
            Err(NmsError::InvalidThreshold(self.iou_threshold))
        }
    }

    fn suppresses(&self, kept: &Detection, other: &Detection) -> bool {
        (!self.class_aware || kept.category.id == other.category.id) && iou(&kept.bbox, &other.bbox) > self.iou_threshold
    }
}

/// Indices into `detections` that survive, in the order they were kept.
/// Equal scores keep input order.
pub fn greedy_nms(detections: &[Detection], cfg: &NmsConfig) -> Vec<usize> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .score
            .partial_cmp(&detections[a].score)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if !kept.iter().any(|&k| cfg.suppresses(&detections[k], &detections[i])) {
            kept.push(i);
        }
    }
    kept
}

/// How the probed detection is taken out of play.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeMode {
    Remove,
    /// Multiply its score by the factor instead of dropping it.
    Attenuate(f64),
}

/// Kept sets before and after the probe, as indices into the original list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainReaction {
    pub probed_index: usize,
    pub kept_before: Vec<usize>,
    pub kept_after: Vec<usize>,
    /// Kept after but not before.
    pub newly_surfaced: Vec<usize>,
    /// Kept before but not after, not counting the probed detection.
    pub newly_suppressed: Vec<usize>,
}

impl ChainReaction {
    /// Symmetric difference of the kept sets, including the probed detection.
    pub fn kept_diff(&self) -> Vec<usize> {
        let before: BTreeSet<_> = self.kept_before.iter().copied().collect();
        let after: BTreeSet<_> = self.kept_after.iter().copied().collect();
        before.symmetric_difference(&after).copied().collect()
    }

    pub fn is_non_local(&self) -> bool {
        !self.newly_suppressed.is_empty() || !self.newly_surfaced.is_empty()
    }
}

pub fn chain_reaction_probe(
    detections: &[Detection],
    index: usize,
    cfg: &NmsConfig,
    mode: ProbeMode,
) -> Result<ChainReaction, NmsError> {
    cfg.validate()?;
    if index >= detections.len() {
        return Err(NmsError::IndexOutOfRange {
            index,
            len: detections.len(),
        });
    }
    let mut before = greedy_nms(detections, cfg);
    let mut after = match mode {
        ProbeMode::Remove => {
            let rest: Vec<Detection> = detections
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != index)
                .map(|(_, d)| d.clone())
                .collect();
            greedy_nms(&rest, cfg)
                .into_iter()
                .map(|i| if i >= index { i + 1 } else { i })
                .collect()
        }
        ProbeMode::Attenuate(factor) => {
            if !(0.0..1.0).contains(&factor) {
                return Err(NmsError::InvalidFactor(factor));
            }
            let mut weakened = detections.to_vec();
            weakened[index].score *= factor;
            greedy_nms(&weakened, cfg)
        }
    };
    before.sort_unstable();
    after.sort_unstable();
    let newly_surfaced = after.iter().copied().filter(|i| !before.contains(i)).collect();
    let newly_suppressed = before
        .iter()
        .copied()
        .filter(|&i| i != index && !after.contains(&i))
        .collect();
    Ok(ChainReaction {
        probed_index: index,
        kept_before: before,
        kept_after: after,
        newly_surfaced,
        newly_suppressed,
    })
}
