//! Aggregation of per-translation scores.
//!
//! Each scored case becomes a [`SweepRecord`]. Records are pooled into an
//! [`AffectedTable`]: for every threshold tau, the percentage of translations
//! whose match score falls strictly below tau, in four variants that differ
//! in matching rule and in how much the transplant may occlude originals.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::Detection;
use crate::geometry::BBox;
use crate::matching::{build_match, class_set_difference, coverage};

pub use self::report::{emit_report, render_table, ReportFiles, ReportInputs};

pub const DEFAULT_TAUS: [f64; 5] = [0.3, 0.5, 0.7, 0.95, 0.99];
/// Records with maximal coverage above this are dropped from the Occ-20 row.
pub const OCC_20_LIMIT: f64 = 0.2;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("no records to aggregate")]
    NoRecords,
    #[error("tau {0} outside [0, 1]")]
    InvalidTau(f64),
    #[error("no tau values given")]
    NoTaus,
    #[error("cannot write {path}: {message}")]
    Io { path: std::path::PathBuf, message: String },
}

/// Scores of one translated case against its base image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub case_id: String,
    pub t_x: u32,
    pub t_y: u32,
    #[serde(rename = "S_constrained")]
    pub s_constrained: f64,
    #[serde(rename = "S_agnostic")]
    pub s_agnostic: f64,
    pub new_class_count: usize,
    pub new_classes: Vec<String>,
    #[serde(rename = "C_T")]
    pub c_t: f64,
    pub n_mod: usize,
    pub n_orig: usize,
    pub base_image_id: u64,
}

impl SweepRecord {
    /// Scores thresholded detection lists; `t_box` is the transplant's placement box.
    pub fn compute(
        case_id: impl Into<String>,
        base_image_id: u64,
        translation: (u32, u32),
        t_box: &BBox,
        d_mod: &[Detection],
        d_orig: &[Detection],
    ) -> Self {
        let constrained = build_match(d_mod, d_orig, true);
        let agnostic = build_match(d_mod, d_orig, false);
        let diff = class_set_difference(d_mod, d_orig);
        let cov = coverage(d_orig, t_box);
        SweepRecord {
            case_id: case_id.into(),
            t_x: translation.0,
            t_y: translation.1,
            s_constrained: constrained.score,
            s_agnostic: agnostic.score,
            new_class_count: diff.cardinality,
            new_classes: diff.new_categories.into_iter().map(|c| c.name).collect(),
            c_t: cov.max_coverage,
            n_mod: d_mod.len(),
            n_orig: d_orig.len(),
            base_image_id,
        }
    }
}

/// A translation is affected when its score is strictly below `tau`.
pub fn affected(score: f64, tau: f64) -> bool {
    score < tau
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum TableVariant {
    Affected,
    AffectedClassAgnostic,
    AffectedOcc20,
    AffectedNoOcc,
}

impl TableVariant {
    pub const ALL: [TableVariant; 4] = [
        TableVariant::Affected,
        TableVariant::AffectedClassAgnostic,
        TableVariant::AffectedOcc20,
        TableVariant::AffectedNoOcc,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            TableVariant::Affected => "Affected",
            TableVariant::AffectedClassAgnostic => "Affected-class-Agnostic",
            TableVariant::AffectedOcc20 => "Affected-Occ-20",
            TableVariant::AffectedNoOcc => "Affected-No-Occ",
        }
    }

    fn includes(&self, r: &SweepRecord) -> bool {
        match self {
            TableVariant::Affected | TableVariant::AffectedClassAgnostic => true,
            TableVariant::AffectedOcc20 => r.c_t <= OCC_20_LIMIT,
            TableVariant::AffectedNoOcc => r.c_t == 0.0,
        }
    }

    fn score(&self, r: &SweepRecord) -> f64 {
        match self {
            TableVariant::AffectedClassAgnostic => r.s_agnostic,
            _ => r.s_constrained,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffectedRow {
    pub variant: TableVariant,
    pub denominator: usize,
    /// One percentage per tau; `None` when no record qualifies for the row.
    pub percentages: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffectedTable {
    pub tau_values: Vec<f64>,
    pub rows: Vec<AffectedRow>,
}

impl AffectedTable {
    pub fn row(&self, variant: TableVariant) -> &AffectedRow {
        self.rows
            .iter()
            .find(|r| r.variant == variant)
            .expect("every variant has a row")
    }

    pub fn cell(&self, variant: TableVariant, tau_index: usize) -> Option<f64> {
        self.row(variant).percentages.as_ref().map(|p| p[tau_index])
    }
}

pub fn build_affected_table(records: &[SweepRecord], tau_values: &[f64]) -> Result<AffectedTable, StatsError> {
    if records.is_empty() {
        return Err(StatsError::NoRecords);
    }
    if tau_values.is_empty() {
        return Err(StatsError::NoTaus);
    }
    if let Some(&bad) = tau_values.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(StatsError::InvalidTau(bad));
    }
    let rows = TableVariant::ALL
        .iter()
        .map(|&variant| {
            let scores: Vec<f64> = records
                .iter()
                .filter(|r| variant.includes(r))
                .map(|r| variant.score(r))
                .collect();
            let denominator = scores.len();
            let percentages = (denominator > 0).then(|| {
                tau_values
                    .iter()
                    .map(|&tau| {
                        let hit = scores.iter().filter(|&&s| affected(s, tau)).count();
                        100.0 * hit as f64 / denominator as f64
                    })
                    .collect()
            });
            AffectedRow {
                variant,
                denominator,
                percentages,
            }
        })
        .collect();
    Ok(AffectedTable {
        tau_values: tau_values.to_vec(),
        rows,
    })
}

/// One table per base image, for per-image-then-average readings.
pub fn build_per_image_tables(records: &[SweepRecord], tau_values: &[f64]) -> Result<BTreeMap<u64, AffectedTable>, StatsError> {
    let mut groups: BTreeMap<u64, Vec<SweepRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.base_image_id).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(id, recs)| build_affected_table(&recs, tau_values).map(|t| (id, t)))
        .collect()
}

/// Descending new-class count, ties by case id.
pub fn rank_by_new_classes(records: &[SweepRecord]) -> Vec<&SweepRecord> {
    let mut v: Vec<&SweepRecord> = records.iter().collect();
    v.sort_by(|a, b| {
        b.new_class_count
            .cmp(&a.new_class_count)
            .then_with(|| a.case_id.cmp(&b.case_id))
    });
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exemplar {
    pub record: SweepRecord,
    /// Classes this record adds beyond earlier exemplars.
    pub incremental: Vec<String>,
}

/// Walks records in rank order keeping only those that add a class not seen
/// in any earlier pick.
pub fn select_novel_exemplars(records: &[SweepRecord], limit: usize) -> Vec<Exemplar> {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut out = Vec::new();
    for r in rank_by_new_classes(records) {
        if out.len() >= limit {
            break;
        }
        let incremental: Vec<String> = r
            .new_classes
            .iter()
            .filter(|c| !seen.contains(c.as_str()))
            .cloned()
            .collect();
        if incremental.is_empty() {
            continue;
        }
        seen.extend(r.new_classes.iter().map(String::as_str));
        out.push(Exemplar {
            record: r.clone(),
            incremental,
        });
    }
    out
}
