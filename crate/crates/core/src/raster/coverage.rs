use serde::{Deserialize, Serialize};

use super::{Section, SectionMap};
use crate::data::{DefectClass, MaskSet};
use crate::error::{Error, Result};

/// Coverage of one hull section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionCoverage {
    pub section: Section,
    pub present: bool,
    pub area: usize,
    /// Percent of the section covered by each class, in
    /// [`DefectClass::ALL`] order. `None` when the section is absent.
    pub percent: Option<[f64; 3]>,
}

/// Per-section defect coverage of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub image_id: String,
    pub sections: [SectionCoverage; 3],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl DefectReport {
    /// Report with every section absent.
    pub fn empty(image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            sections: Section::HULL.map(|s| SectionCoverage {
                section: s,
                present: false,
                area: 0,
                percent: None,
            }),
            diagnostics: Vec::new(),
        }
    }

    pub fn section(&self, s: Section) -> &SectionCoverage {
        &self.sections[s.hull_index().expect("hull section")]
    }

    pub fn percent(&self, s: Section, c: DefectClass) -> Option<f64> {
        self.section(s).percent.map(|p| p[c.index()])
    }
}

/// `100 * |defect ∩ section| / |section|` for every hull section and class.
pub fn coverage(image_id: &str, sections: &SectionMap, defects: &MaskSet) -> Result<DefectReport> {
    if sections.dims() != defects.dims() {
        return Err(Error::Shape(format!(
            "section map {:?} vs defects {:?}",
            sections.dims(),
            defects.dims()
        )));
    }
    let mut area = [0usize; 3];
    let mut hits = [[0usize; 3]; 3];
    let labels = sections.data();
    let masks: Vec<&[u8]> = DefectClass::ALL
        .iter()
        .map(|&c| defects.get(c).data())
        .collect();
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let s = l as usize - 1;
        area[s] += 1;
        for c in 0..3 {
            hits[s][c] += masks[c][i] as usize;
        }
    }
    let mut report = DefectReport::empty(image_id);
    for (s, cov) in report.sections.iter_mut().enumerate() {
        cov.area = area[s];
        cov.present = area[s] > 0;
        if cov.present {
            cov.percent = Some(hits[s].map(|h| 100.0 * h as f64 / area[s] as f64));
        }
    }
    Ok(report)
}

/// Clears fouling on top-side pixels; other classes are untouched.
pub fn suppress_ts_fouling(sections: &SectionMap, defects: &MaskSet) -> Result<MaskSet> {
    if sections.dims() != defects.dims() {
        return Err(Error::Shape("section map vs defects".into()));
    }
    let ts = sections.mask(Section::TopSide);
    let mut out = defects.clone();
    *out.get_mut(DefectClass::Fouling) = defects.get(DefectClass::Fouling).difference(&ts)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Mask;
    use proptest::prelude::*;

    fn map_rows(w: u32, rows: &[(u32, Section)]) -> SectionMap {
        let h: u32 = rows.iter().map(|r| r.0).sum();
        let mut m = SectionMap::new(w, h);
        let mut y = 0;
        for &(n, s) in rows {
            for yy in y..y + n {
                for x in 0..w {
                    m.set(x, yy, s);
                }
            }
            y += n;
        }
        m
    }

    #[test]
    fn quarter_of_boot_top() {
        // 100-px boot top, 25 corroded.
        let sections = map_rows(10, &[(10, Section::BootTop)]);
        let mut d = MaskSet::empty(10, 10);
        *d.get_mut(DefectClass::Corrosion) = Mask::from_fn(10, 10, |x, y| x < 5 && y < 5);
        let r = coverage("a", &sections, &d).unwrap();
        assert_eq!(
            r.percent(Section::BootTop, DefectClass::Corrosion),
            Some(25.0)
        );
        assert_eq!(r.percent(Section::BootTop, DefectClass::Fouling), Some(0.0));
        assert!(!r.section(Section::TopSide).present);
        assert_eq!(r.percent(Section::TopSide, DefectClass::Corrosion), None);
    }

    #[test]
    fn full_and_empty_coverage() {
        let sections = map_rows(
            4,
            &[
                (2, Section::TopSide),
                (3, Section::BootTop),
                (1, Section::VerticalSide),
            ],
        );
        let mut d = MaskSet::empty(4, 6);
        let r = coverage("a", &sections, &d).unwrap();
        assert!(r.sections.iter().all(|s| s.percent.unwrap() == [0.0; 3]));
        *d.get_mut(DefectClass::Delamination) = sections.mask(Section::BootTop);
        let r = coverage("a", &sections, &d).unwrap();
        assert_eq!(
            r.percent(Section::BootTop, DefectClass::Delamination),
            Some(100.0)
        );
    }

    #[test]
    fn suppression_cases() {
        let sections = map_rows(
            10,
            &[
                (3, Section::TopSide),
                (5, Section::BootTop),
                (2, Section::VerticalSide),
            ],
        );
        // Straddling: 30 px in TS, 50 in BT.
        let mut d = MaskSet::empty(10, 10);
        *d.get_mut(DefectClass::Fouling) = Mask::from_fn(10, 10, |_, y| y < 8);
        *d.get_mut(DefectClass::Corrosion) = Mask::from_fn(10, 10, |_, y| y < 2);
        let s = suppress_ts_fouling(&sections, &d).unwrap();
        assert_eq!(s.get(DefectClass::Fouling).count(), 50);
        assert_eq!(s.get(DefectClass::Corrosion), d.get(DefectClass::Corrosion));
        // Entirely in VS.
        *d.get_mut(DefectClass::Fouling) = sections.mask(Section::VerticalSide);
        assert_eq!(suppress_ts_fouling(&sections, &d).unwrap(), d);
        // Entirely in TS.
        *d.get_mut(DefectClass::Fouling) = sections.mask(Section::TopSide);
        assert!(suppress_ts_fouling(&sections, &d)
            .unwrap()
            .get(DefectClass::Fouling)
            .is_empty());
    }

    proptest! {
        #[test]
        fn percentages_bounded_and_suppression_exact(
            labels in prop::collection::vec(0u8..4, 48),
            bits in prop::collection::vec(0u8..2, 144),
        ) {
            let sections = SectionMap::from_labels(8, 6, labels.clone()).unwrap();
            let masks = [0, 1, 2].map(|c| Mask::from_vec(8, 6, bits[c * 48..(c + 1) * 48].to_vec()).unwrap());
            let d = MaskSet::new(masks).unwrap();
            let r = coverage("p", &sections, &d).unwrap();
            for (s, cov) in r.sections.iter().enumerate() {
                let area = labels.iter().filter(|&&l| l as usize == s + 1).count();
                prop_assert_eq!(cov.present, area > 0);
                if let Some(p) = cov.percent {
                    prop_assert!(p.iter().all(|&v| (0.0..=100.0).contains(&v)));
                }
            }
            let s = suppress_ts_fouling(&sections, &d).unwrap();
            let r = coverage("p", &sections, &s).unwrap();
            if let Some(v) = r.percent(Section::TopSide, DefectClass::Fouling) {
                prop_assert_eq!(v, 0.0);
            }
        }
    }
}
