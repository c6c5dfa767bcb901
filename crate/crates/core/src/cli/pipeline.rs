use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{failure, CliError, GenerateArgs, RunArgs, ScoreArgs};
use crate::dataset::{load_dataset, DatasetError, DatasetIndex, ImageBuffer};
use crate::detector::{
    load_detections, read_detections, threshold_filter, to_record_line, write_detections, DetectionSet, Detector,
    DetectorError, FileDetector, HttpDetector, StubDetector,
};
use crate::stats::{
    build_affected_table, build_per_image_tables, emit_report, render_table, select_novel_exemplars, ReportInputs,
    SweepRecord,
};
use crate::sweep::{SourceSelection, SweepConfig, SweepError, SweepPlan, TestCase};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
/// Records finished so far by an interrupted `run`; consumed on resume.
pub const PARTIAL_FILE: &str = "detections.partial.jsonl";
/// Backend id of the run that wrote [`PARTIAL_FILE`].
const PARTIAL_BACKEND_FILE: &str = "detections.partial.backend";
const IMAGES_DIR: &str = "images";
const REPORT_DIR: &str = "report";

/// One manifest line: the test case plus its image, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub case: TestCase,
    pub image_path: String,
}

pub(super) fn load_dataset_checked(annotations: &Path, images: &Path) -> Result<DatasetIndex, CliError> {
    if !annotations.is_file() {
        return Err(CliError::Usage(format!(
            "annotations file {} does not exist",
            annotations.display()
        )));
    }
    if !images.is_dir() {
        return Err(CliError::Usage(format!("image directory {} does not exist", images.display())));
    }
    let ds = load_dataset(annotations, images).map_err(failure)?;
    for issue in &ds.issues {
        eprintln!("warning: {:?}: {}", issue.kind, issue.message);
    }
    Ok(ds)
}

fn sweep_error(e: SweepError) -> CliError {
    match e {
        SweepError::Config(_)
        | SweepError::NotEligible { .. }
        | SweepError::WrongImage { .. }
        | SweepError::SpriteTooLarge { .. }
        | SweepError::Dataset(DatasetError::UnknownImage(_) | DatasetError::UnknownInstance(_)) => {
            CliError::Usage(e.to_string())
        }
        other => failure(other),
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(failure)
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let cfg = SweepConfig {
        stride: args.stride,
        min_area_fraction: args.min_area,
        max_area_fraction: args.max_area,
        exclude_crowd: !args.include_crowd,
        seed: args.seed,
        ..SweepConfig::default()
    };
    cfg.validate().map_err(sweep_error)?;
    let pool = thread_pool(args.jobs)?;
    let ds = load_dataset_checked(&args.dataset.annotations, &args.dataset.images)?;

    let explicit = !args.base_images.is_empty();
    let bases: Vec<u64> = if explicit {
        args.base_images.clone()
    } else {
        ds.images.keys().copied().collect()
    };
    let mut plans = Vec::new();
    for &base in &bases {
        let selection = match (args.instance, args.duplicate) {
            (Some(id), dup) => {
                let inst = ds.instance(id).map_err(|e| CliError::Usage(e.to_string()))?;
                if dup && inst.image_id != base {
                    return Err(sweep_error(SweepError::WrongImage {
                        instance_id: id,
                        image_id: base,
                    }));
                }
                SourceSelection::Instance(id)
            }
            (None, true) => SourceSelection::Random {
                source_image: Some(base),
            },
            (None, false) => SourceSelection::Random {
                source_image: args.source_image,
            },
        };
        match SweepPlan::new(&ds, base, selection, &cfg) {
            Ok(plan) => plans.push(plan),
            // Corpus-wide runs skip bases that cannot host a sweep.
            Err(e @ (SweepError::NoEligibleInstance(_) | SweepError::NotEligible { .. } | SweepError::SpriteTooLarge { .. }))
                if !explicit =>
            {
                eprintln!("warning: skipping base image {base}: {e}");
            }
            Err(e) => return Err(sweep_error(e)),
        }
    }
    if plans.is_empty() {
        return Err(failure("no base image produced a sweep"));
    }

    let images_dir = args.out.join(IMAGES_DIR);
    fs::create_dir_all(&images_dir).map_err(|e| failure(format!("{}: {e}", images_dir.display())))?;
    let mut manifest = String::new();
    for plan in &plans {
        let entries: Vec<ManifestEntry> = pool.install(|| {
            plan.cases()
                .par_iter()
                .map(|case| {
                    let img = plan.render(case).map_err(sweep_error)?;
                    let rel = format!("{IMAGES_DIR}/{}.png", case.case_id);
                    img.save_png(&args.out.join(&rel)).map_err(failure)?;
                    Ok(ManifestEntry {
                        case: case.clone(),
                        image_path: rel,
                    })
                })
                .collect::<Result<_, CliError>>()
        })?;
        for e in &entries {
            manifest.push_str(&serde_json::to_string(e).map_err(failure)?);
            manifest.push('\n');
        }
    }
    let path = args.out.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(|e| failure(format!("{}: {e}", path.display())))?;
    let total: usize = plans.iter().map(|p| p.cases().len()).sum();
    eprintln!("wrote {total} cases from {} base image(s) to {}", plans.len(), args.out.display());
    Ok(())
}

pub fn read_manifest(out: &Path) -> Result<Vec<ManifestEntry>, CliError> {
    let path = out.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: ManifestEntry = serde_json::from_str(line)
            .map_err(|err| failure(format!("{}:{}: {err}", path.display(), i + 1)))?;
        if !seen.insert(e.case.case_id.clone()) {
            return Err(failure(format!("{}:{}: duplicate case {}", path.display(), i + 1, e.case.case_id)));
        }
        entries.push(e);
    }
    Ok(entries)
}

/// Parsed `--detector` value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetectorSpec {
    Stub,
    File(PathBuf),
    Http(String),
}

impl std::str::FromStr for DetectorSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "stub" {
            Ok(DetectorSpec::Stub)
        } else if let Some(p) = s.strip_prefix("file:").filter(|p| !p.is_empty()) {
            Ok(DetectorSpec::File(PathBuf::from(p)))
        } else if let Some(u) = s.strip_prefix("http:").filter(|u| !u.is_empty()) {
            // Accept both `http:host:port` and `http:http://host:port`.
            let url = if u.starts_with("http://") || u.starts_with("https://") {
                u.to_string()
            } else {
                format!("http://{}", u.trim_start_matches("//"))
            };
            Ok(DetectorSpec::Http(url))
        } else {
            Err(format!("unknown detector {s:?}; expected stub, file:PATH or http:URL"))
        }
    }
}

impl DetectorSpec {
    fn build(&self) -> Result<Box<dyn Detector>, CliError> {
        Ok(match self {
            DetectorSpec::Stub => Box::new(StubDetector),
            DetectorSpec::File(p) => Box::new(FileDetector::open(p).map_err(|e| CliError::Usage(e.to_string()))?),
            DetectorSpec::Http(u) => Box::new(HttpDetector::from_env(u.clone()).with_attempts(3, Duration::from_millis(200))),
        })
    }

    fn needs_pixels(&self) -> bool {
        !matches!(self, DetectorSpec::File(_))
    }
}

fn read_partial(path: &Path) -> Result<BTreeMap<String, DetectionSet>, CliError> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(BTreeMap::new());
    };
    // A crash can leave a torn final line; keep only complete records.
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    Ok(read_detections(complete).map_err(failure)?.sets)
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let spec: DetectorSpec = args.detector.parse().map_err(CliError::Usage)?;
    let pool = thread_pool(args.jobs)?;
    let manifest = read_manifest(&args.out)?;
    let detector = spec.build()?;
    let partial_path = args.out.join(PARTIAL_FILE);
    let backend_path = args.out.join(PARTIAL_BACKEND_FILE);
    let backend_id = detector.detector_id();
    let mut done = read_partial(&partial_path)?;
    if partial_path.exists() {
        let previous = fs::read_to_string(&backend_path).unwrap_or_default();
        if previous.trim() != backend_id {
            return Err(CliError::Usage(format!(
                "{} was written by backend {:?}, not {backend_id:?}; remove it to start over",
                partial_path.display(),
                previous.trim()
            )));
        }
    } else {
        done.clear();
        fs::create_dir_all(&args.out).map_err(failure)?;
        fs::write(&backend_path, format!("{backend_id}\n")).map_err(|e| failure(format!("{}: {e}", backend_path.display())))?;
    }
    if !done.is_empty() {
        eprintln!("resuming: {} of {} cases already done", done.len(), manifest.len());
    }

    let pending: Vec<&ManifestEntry> = manifest.iter().filter(|e| !done.contains_key(&e.case.case_id)).collect();
    let mut partial = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&partial_path)
        .map_err(|e| failure(format!("{}: {e}", partial_path.display())))?;
    let detect_one = |entry: &ManifestEntry| -> Result<DetectionSet, CliError> {
        let case_id = &entry.case.case_id;
        let image = if spec.needs_pixels() {
            ImageBuffer::open(&args.out.join(&entry.image_path)).map_err(failure)?
        } else {
            ImageBuffer::filled(1, 1, [0, 0, 0])
        };
        let set = detector.detect(&image, case_id).map_err(|e| match e {
            DetectorError::CaseMissing(c) => failure(format!("detections missing for case {c}")),
            other => failure(format!("case {case_id}: {other}")),
        })?;
        Ok(set.with_case_id(case_id.clone()))
    };

    for chunk in pending.chunks(args.jobs * 4) {
        let results: Vec<Result<DetectionSet, CliError>> = pool.install(|| chunk.par_iter().map(|e| detect_one(e)).collect());
        let mut first_err = None;
        let mut lines = String::new();
        for r in results {
            match r {
                Ok(set) => {
                    lines.push_str(&to_record_line(&set));
                    lines.push('\n');
                    done.insert(set.case_id.clone(), set);
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        partial
            .write_all(lines.as_bytes())
            .and_then(|_| partial.flush())
            .map_err(|e| failure(format!("{}: {e}", partial_path.display())))?;
        if let Some(e) = first_err {
            eprintln!(
                "{} of {} cases done; rerun to resume from {}",
                done.len(),
                manifest.len(),
                partial_path.display()
            );
            return Err(e);
        }
    }

    let ordered: Vec<&DetectionSet> = manifest.iter().map(|e| &done[&e.case.case_id]).collect();
    let final_path = args.out.join(DETECTIONS_FILE);
    write_detections(&final_path, ordered).map_err(failure)?;
    drop(partial);
    for p in [&partial_path, &backend_path] {
        fs::remove_file(p).map_err(|e| failure(format!("{}: {e}", p.display())))?;
    }
    eprintln!("wrote {} records to {}", manifest.len(), final_path.display());
    Ok(())
}

pub fn cmd_score(args: &ScoreArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(CliError::Usage(format!("--threshold {} outside [0, 1]", args.threshold)));
    }
    if let Some(t) = args.taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(CliError::Usage(format!("--tau {t} outside [0, 1]")));
    }
    let manifest = read_manifest(&args.out)?;
    let det_path = args.detections.clone().unwrap_or_else(|| args.out.join(DETECTIONS_FILE));
    let loaded = load_detections(&det_path).map_err(failure)?;
    for r in &loaded.rejected {
        eprintln!(
            "warning: {}:{}: case {} detection {} rejected: {}",
            det_path.display(),
            r.line,
            r.case_id,
            r.index,
            r.reason
        );
    }
    let ids: BTreeSet<&str> = loaded.sets.values().map(|s| s.detector_id.as_str()).collect();
    if ids.len() > 1 {
        return Err(failure(format!(
            "detections come from several detectors ({}); score one detector at a time",
            ids.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let lookup = |case_id: &str| -> Result<DetectionSet, CliError> {
        loaded
            .sets
            .get(case_id)
            .map(|s| threshold_filter(s, args.threshold))
            .ok_or_else(|| failure(format!("no detections for case {case_id}")))
    };

    let mut originals: BTreeMap<u64, DetectionSet> = BTreeMap::new();
    for e in manifest.iter().filter(|e| e.case.is_original()) {
        let set = lookup(&e.case.case_id).map_err(|_| {
            failure(format!(
                "null case {} for base image {} has no detections",
                e.case.case_id, e.case.base_image_id
            ))
        })?;
        originals.insert(e.case.base_image_id, set);
    }
    let mut records = Vec::new();
    for e in manifest.iter().filter(|e| !e.case.is_original()) {
        let case = &e.case;
        let d_orig = originals.get(&case.base_image_id).ok_or_else(|| {
            failure(format!(
                "null case for base image {} is missing, cannot score {}",
                case.base_image_id, case.case_id
            ))
        })?;
        let d_mod = lookup(&case.case_id)?;
        let (t, placement) = case
            .translation
            .zip(case.placement)
            .ok_or_else(|| failure(format!("case {} has no translation", case.case_id)))?;
        records.push(SweepRecord::compute(
            case.case_id.clone(),
            case.base_image_id,
            (t.x, t.y),
            &placement.to_bbox(),
            d_mod.detections(),
            d_orig.detections(),
        ));
    }

    let table = build_affected_table(&records, &args.taus).map_err(failure)?;
    let per_image = build_per_image_tables(&records, &args.taus).map_err(failure)?;
    let exemplars = select_novel_exemplars(&records, args.exemplars);
    let image_paths: BTreeMap<String, String> = manifest
        .iter()
        .map(|e| (e.case.case_id.clone(), e.image_path.clone()))
        .collect();
    let report_dir = args.report.clone().unwrap_or_else(|| args.out.join(REPORT_DIR));
    emit_report(
        &report_dir,
        &ReportInputs {
            table: &table,
            per_image: &per_image,
            records: &records,
            exemplars: &exemplars,
            image_paths: &image_paths,
        },
    )
    .map_err(failure)?;
    print!("{}", render_table(&table));
    eprintln!("{} translations scored; reports in {}", records.len(), report_dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detector_specs() {
        assert_eq!("stub".parse(), Ok(DetectorSpec::Stub));
        assert_eq!("file:a/b.jsonl".parse(), Ok(DetectorSpec::File("a/b.jsonl".into())));
        assert_eq!("http:localhost:8000".parse(), Ok(DetectorSpec::Http("http://localhost:8000".into())));
        assert_eq!("http://127.0.0.1:9".parse(), Ok(DetectorSpec::Http("http://127.0.0.1:9".into())));
        assert!("file:".parse::<DetectorSpec>().is_err());
        assert!("yolo".parse::<DetectorSpec>().is_err());
    }

    #[test]
    fn torn_partial_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.jsonl");
        fs::write(&p, "{\"case_id\":\"a\",\"detector_id\":\"d\",\"detections\":[]}\n{\"case_id\":\"b\",\"dete").unwrap();
        let sets = read_partial(&p).unwrap();
        assert_eq!(sets.keys().collect::<Vec<_>>(), vec!["a"]);
        assert!(read_partial(&dir.path().join("none")).unwrap().is_empty());
    }
}
