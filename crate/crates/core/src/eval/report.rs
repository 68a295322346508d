use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DefectClass;
use crate::error::{Error, Result};
use crate::raster::{DefectReport, Section};

/// Section-wise mean coverage over a set of reports. Each cell averages
/// only the reports in which that section is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionTable {
    /// `[section][class]`, sections TS/BT/VS, classes in
    /// [`DefectClass::ALL`] order.
    pub mean: [[Option<f64>; 3]; 3],
    pub counts: [[usize; 3]; 3],
    pub images: usize,
}

pub fn aggregate_reports(reports: &[DefectReport]) -> Result<SectionTable> {
    if reports.is_empty() {
        return Err(Error::Empty("no reports to aggregate".into()));
    }
    let mut sum = [[0.0; 3]; 3];
    let mut counts = [[0usize; 3]; 3];
    for r in reports {
        for (s, cov) in r.sections.iter().enumerate() {
            if let (true, Some(p)) = (cov.present, cov.percent) {
                for c in 0..3 {
                    sum[s][c] += p[c];
                    counts[s][c] += 1;
                }
            }
        }
    }
    let mut mean = [[None; 3]; 3];
    for s in 0..3 {
        for c in 0..3 {
            if counts[s][c] > 0 {
                mean[s][c] = Some(sum[s][c] / counts[s][c] as f64);
            }
        }
    }
    Ok(SectionTable {
        mean,
        counts,
        images: reports.len(),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn header() -> Vec<String> {
    let mut h = vec!["defect".to_string()];
    h.extend(Section::HULL.iter().map(|s| s.short_name().to_string()));
    h
}

/// Defect rows by section columns.
pub fn write_table_csv(path: &Path, table: &SectionTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header())?;
    for c in DefectClass::ALL {
        let mut row = vec![c.name().to_string()];
        row.extend((0..3).map(|s| cell(table.mean[s][c.index()])));
        w.write_record(row)?;
    }
    let mut row = vec!["images".to_string()];
    row.extend((0..3).map(|s| table.counts[s][0].to_string()));
    w.write_record(row)?;
    w.flush()?;
    Ok(())
}

/// One defect-by-section block per report, rows prefixed with the image
/// id.
pub fn write_reports_csv(path: &Path, reports: &[DefectReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut h = vec!["image".to_string()];
    h.extend(header());
    w.write_record(h)?;
    for r in reports {
        for c in DefectClass::ALL {
            let mut row = vec![r.image_id.clone(), c.name().to_string()];
            row.extend(Section::HULL.iter().map(|&s| cell(r.percent(s, c))));
            w.write_record(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}
