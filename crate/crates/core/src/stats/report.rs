use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{AffectedTable, Exemplar, StatsError, SweepRecord};

pub struct ReportInputs<'a> {
    pub table: &'a AffectedTable,
    pub per_image: &'a BTreeMap<u64, AffectedTable>,
    pub records: &'a [SweepRecord],
    pub exemplars: &'a [Exemplar],
    /// Rendered image path per case id, when images were written.
    pub image_paths: &'a BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub affected_table: PathBuf,
    pub affected_by_image: PathBuf,
    pub records: PathBuf,
    pub exemplars: PathBuf,
}

#[derive(Serialize)]
struct ExemplarEntry<'a> {
    case_id: &'a str,
    image_path: Option<&'a str>,
    new_class_count: usize,
    new_classes: &'a [String],
    incremental_classes: &'a [String],
}

#[derive(Serialize)]
struct ExemplarFile<'a> {
    exemplars: Vec<ExemplarEntry<'a>>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> StatsError {
    StatsError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn cells(table: &AffectedTable) -> Vec<(String, Vec<String>, usize)> {
    table
        .rows
        .iter()
        .map(|row| {
            let values = match &row.percentages {
                Some(p) => p.iter().map(|v| format!("{v:.1}")).collect(),
                None => vec!["n/a".to_string(); table.tau_values.len()],
            };
            (row.variant.label().to_string(), values, row.denominator)
        })
        .collect()
}

fn tau_headers(table: &AffectedTable) -> Vec<String> {
    table.tau_values.iter().map(|t| format!("tau_{t}")).collect()
}

/// Fixed-width text rendering of the table for terminal output.
pub fn render_table(table: &AffectedTable) -> String {
    let rows = cells(table);
    let name_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("variant".len());
    let mut out = format!("{:<name_w$}", "variant");
    for h in tau_headers(table) {
        out.push_str(&format!(" {h:>9}"));
    }
    out.push_str(&format!(" {:>11}\n", "denominator"));
    for (name, values, denom) in rows {
        out.push_str(&format!("{name:<name_w$}"));
        for v in values {
            out.push_str(&format!(" {v:>9}"));
        }
        out.push_str(&format!(" {denom:>11}\n"));
    }
    out
}

fn write_table_csv(path: &Path, table: &AffectedTable) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let mut header = vec!["variant".to_string()];
    header.extend(tau_headers(table));
    header.push("denominator".into());
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for (name, values, denom) in cells(table) {
        let mut rec = vec![name];
        rec.extend(values);
        rec.push(denom.to_string());
        w.write_record(&rec).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_per_image_csv(path: &Path, tables: &BTreeMap<u64, AffectedTable>, taus: &AffectedTable) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let mut header = vec!["base_image_id".to_string(), "variant".to_string()];
    header.extend(tau_headers(taus));
    header.push("denominator".into());
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for (id, table) in tables {
        for (name, values, denom) in cells(table) {
            let mut rec = vec![id.to_string(), name];
            rec.extend(values);
            rec.push(denom.to_string());
            w.write_record(&rec).map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes the four report files into `dir`. Output depends only on the
/// inputs' content, not on record order.
pub fn emit_report(dir: &Path, inputs: &ReportInputs<'_>) -> Result<ReportFiles, StatsError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let files = ReportFiles {
        affected_table: dir.join("affected_table.csv"),
        affected_by_image: dir.join("affected_by_image.csv"),
        records: dir.join("records.jsonl"),
        exemplars: dir.join("exemplars.json"),
    };
    write_table_csv(&files.affected_table, inputs.table)?;
    write_per_image_csv(&files.affected_by_image, inputs.per_image, inputs.table)?;

    let mut sorted: Vec<&SweepRecord> = inputs.records.iter().collect();
    sorted.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    let mut text = String::new();
    for r in sorted {
        text.push_str(&serde_json::to_string(r).map_err(|e| io_err(&files.records, e))?);
        text.push('\n');
    }
    fs::write(&files.records, text).map_err(|e| io_err(&files.records, e))?;

    let doc = ExemplarFile {
        exemplars: inputs
            .exemplars
            .iter()
            .map(|e| ExemplarEntry {
                case_id: &e.record.case_id,
                image_path: inputs.image_paths.get(&e.record.case_id).map(String::as_str),
                new_class_count: e.record.new_class_count,
                new_classes: &e.record.new_classes,
                incremental_classes: &e.incremental,
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&doc).map_err(|e| io_err(&files.exemplars, e))?;
    json.push('\n');
    fs::write(&files.exemplars, json).map_err(|e| io_err(&files.exemplars, e))?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{build_affected_table, build_per_image_tables, select_novel_exemplars};

    fn rec(id: &str, img: u64, s: f64, c_t: f64) -> SweepRecord {
        SweepRecord {
            case_id: id.into(),
            t_x: 1,
            t_y: 2,
            s_constrained: s,
            s_agnostic: s,
            new_class_count: 1,
            new_classes: vec![format!("k{id}")],
            c_t,
            n_mod: 2,
            n_orig: 1,
            base_image_id: img,
        }
    }

    fn emit(dir: &Path, records: &[SweepRecord]) {
        let table = build_affected_table(records, &[0.3, 0.5]).unwrap();
        let per = build_per_image_tables(records, &[0.3, 0.5]).unwrap();
        let ex = select_novel_exemplars(records, 5);
        let paths = BTreeMap::new();
        emit_report(
            dir,
            &ReportInputs {
                table: &table,
                per_image: &per,
                records,
                exemplars: &ex,
                image_paths: &paths,
            },
        )
        .unwrap();
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        emit(dir.path(), &[rec("a", 1, 0.4, 0.0), rec("b", 2, 1.0, 0.5), rec("c", 2, 0.1, 0.1)]);
        let text = fs::read_to_string(dir.path().join("affected_table.csv")).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "variant,tau_0.3,tau_0.5,denominator");
        assert_eq!(lines[1], "Affected,33.3,66.7,3");
        assert_eq!(lines[3], "Affected-Occ-20,50.0,100.0,2");
        assert_eq!(lines[4], "Affected-No-Occ,0.0,100.0,1");
        let by_img = fs::read_to_string(dir.path().join("affected_by_image.csv")).unwrap();
        assert!(by_img.contains("\n2,Affected-No-Occ,n/a,n/a,0\n"));
    }

    #[test]
    fn record_order_does_not_change_output() {
        let recs = vec![rec("a", 1, 0.4, 0.0), rec("b", 2, 1.0, 0.5), rec("c", 2, 0.1, 0.1)];
        let mut rev = recs.clone();
        rev.reverse();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        emit(d1.path(), &recs);
        emit(d2.path(), &rev);
        for f in ["affected_table.csv", "affected_by_image.csv", "records.jsonl", "exemplars.json"] {
            assert_eq!(fs::read(d1.path().join(f)).unwrap(), fs::read(d2.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn record_field_names() {
        let line = serde_json::to_string(&rec("a", 1, 0.4, 0.0)).unwrap();
        for key in ["case_id", "t_x", "t_y", "S_constrained", "S_agnostic", "new_class_count", "new_classes", "C_T", "n_mod", "n_orig"] {
            assert!(line.contains(&format!("\"{key}\"")), "{key}");
        }
    }

    #[test]
    fn rendered_table_has_all_rows() {
        let t = build_affected_table(&[rec("a", 1, 0.4, 0.9)], &[0.5]).unwrap();
        let s = render_table(&t);
        assert_eq!(s.lines().count(), 5);
        assert!(s.contains("n/a"));
    }
}
