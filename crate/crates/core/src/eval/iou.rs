use serde::{Deserialize, Serialize};

use super::metrics::{mean_defined, Metric};
use crate::data::{DefectClass, MaskSet};
use crate::error::{Error, Result};
use crate::raster::{Mask, Section, SectionMap};

/// Intersection and union pixel counts for one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Overlap {
    pub intersection: u64,
    pub union: u64,
    pub pred: u64,
    pub truth: u64,
}

impl Overlap {
    pub fn of(pred: &Mask, truth: &Mask) -> Result<Overlap> {
        if pred.dims() != truth.dims() {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                pred.dims(),
                truth.dims()
            )));
        }
        let mut o = Overlap::default();
        for (&p, &t) in pred.data().iter().zip(truth.data()) {
            let (p, t) = (p != 0, t != 0);
            o.intersection += (p && t) as u64;
            o.union += (p || t) as u64;
            o.pred += p as u64;
            o.truth += t as u64;
        }
        Ok(o)
    }

    pub fn merge(&mut self, o: &Overlap) {
        self.intersection += o.intersection;
        self.union += o.union;
        self.pred += o.pred;
        self.truth += o.truth;
    }

    pub fn iou(&self) -> Metric {
        Metric::ratio(self.intersection as f64, self.union as f64)
    }

    pub fn precision(&self) -> Metric {
        Metric::ratio(self.intersection as f64, self.pred as f64)
    }

    pub fn recall(&self) -> Metric {
        Metric::ratio(self.intersection as f64, self.truth as f64)
    }
}

/// Per-class IoU with the mean over defined classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub per_class: Vec<Metric>,
    pub mean: Metric,
}

impl ClassIou {
    pub fn from_overlaps(o: &[Overlap]) -> ClassIou {
        let per_class: Vec<Metric> = o.iter().map(Overlap::iou).collect();
        let mean = mean_defined(per_class.iter().copied());
        ClassIou { per_class, mean }
    }
}

/// Per-class overlaps in [`DefectClass::ALL`] order.
pub fn mask_set_overlaps(pred: &MaskSet, truth: &MaskSet) -> Result<[Overlap; 3]> {
    let mut out = [Overlap::default(); 3];
    for c in DefectClass::ALL {
        out[c.index()] = Overlap::of(pred.get(c), truth.get(c))?;
    }
    Ok(out)
}

/// Overlaps for TS, BT and VS.
pub fn section_overlaps(pred: &SectionMap, truth: &SectionMap) -> Result<[Overlap; 3]> {
    if pred.dims() != truth.dims() {
        return Err(Error::Shape(format!(
            "{:?} vs {:?}",
            pred.dims(),
            truth.dims()
        )));
    }
    let mut out = [Overlap::default(); 3];
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        for (k, s) in Section::HULL.iter().enumerate() {
            let (p, t) = (p == *s as u8, t == *s as u8);
            let o = &mut out[k];
            o.intersection += (p && t) as u64;
            o.union += (p || t) as u64;
            o.pred += p as u64;
            o.truth += t as u64;
        }
    }
    Ok(out)
}

pub fn mask_set_iou(pred: &MaskSet, truth: &MaskSet) -> Result<ClassIou> {
    Ok(ClassIou::from_overlaps(&mask_set_overlaps(pred, truth)?))
}

pub fn section_iou(pred: &SectionMap, truth: &SectionMap) -> Result<ClassIou> {
    Ok(ClassIou::from_overlaps(&section_overlaps(pred, truth)?))
}

/// Per-class mean of per-image IoUs, skipping images where a class is
/// undefined.
pub fn mean_over_images(items: &[ClassIou]) -> ClassIou {
    let k = items.first().map_or(0, |c| c.per_class.len());
    let per_class: Vec<Metric> = (0..k)
        .map(|i| mean_defined(items.iter().map(|c| c.per_class[i])))
        .collect();
    let mean = mean_defined(per_class.iter().copied());
    ClassIou { per_class, mean }
}
