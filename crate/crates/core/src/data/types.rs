use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BoundaryPair, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::validation(
                "split",
                format!("unknown split `{other}`"),
            )),
        }
    }
}

/// Defect classes, in the order used for classifier outputs and loss
/// weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectClass {
    Corrosion = 0,
    Fouling = 1,
    Delamination = 2,
}

impl DefectClass {
    pub const ALL: [DefectClass; 3] = [
        DefectClass::Corrosion,
        DefectClass::Fouling,
        DefectClass::Delamination,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            DefectClass::Corrosion => "corrosion",
            DefectClass::Fouling => "fouling",
            DefectClass::Delamination => "delamination",
        }
    }

    /// Overlay colour.
    pub fn color(self) -> [u8; 3] {
        match self {
            DefectClass::Corrosion => [230, 30, 30],
            DefectClass::Fouling => [40, 200, 60],
            DefectClass::Delamination => [245, 220, 40],
        }
    }
}

/// One binary mask per defect class, all the same size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    masks: [Mask; 3],
}

impl MaskSet {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            masks: [
                Mask::new(width, height),
                Mask::new(width, height),
                Mask::new(width, height),
            ],
        }
    }

    /// Masks in [`DefectClass::ALL`] order.
    pub fn new(masks: [Mask; 3]) -> Result<Self> {
        let d = masks[0].dims();
        if masks.iter().any(|m| m.dims() != d) {
            return Err(Error::Shape("defect masks differ in size".into()));
        }
        Ok(Self { masks })
    }

    pub fn dims(&self) -> (u32, u32) {
        self.masks[0].dims()
    }

    pub fn get(&self, c: DefectClass) -> &Mask {
        &self.masks[c.index()]
    }

    pub fn get_mut(&mut self, c: DefectClass) -> &mut Mask {
        &mut self.masks[c.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (DefectClass, &Mask)> {
        DefectClass::ALL.into_iter().zip(self.masks.iter())
    }

    /// Union of all classes.
    pub fn any(&self) -> Mask {
        let u = self.masks[0].union(&self.masks[1]).expect("same dims");
        u.union(&self.masks[2]).expect("same dims")
    }

    pub fn try_map(
        &self,
        mut f: impl FnMut(DefectClass, &Mask) -> Result<Mask>,
    ) -> Result<MaskSet> {
        let [a, b, c] = DefectClass::ALL;
        MaskSet::new([f(a, self.get(a))?, f(b, self.get(b))?, f(c, self.get(c))?])
    }

    pub fn zip_with(
        &self,
        other: &MaskSet,
        f: impl Fn(&Mask, &Mask) -> Result<Mask>,
    ) -> Result<MaskSet> {
        self.try_map(|c, m| f(m, other.get(c)))
    }

    pub fn is_empty(&self) -> bool {
        self.masks.iter().all(Mask::is_empty)
    }
}

/// Where a record's defect labels came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    #[default]
    Human,
    Pseudo,
    Fused,
}

/// Free-form provenance stored alongside each record on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RecordMeta {
    pub label_source: LabelSource,
    pub scene_seed: Option<u64>,
    /// Per-section coverage of the rendered defects, estimated with
    /// supersampling. Rows follow TS, BT, VS; columns follow
    /// [`DefectClass::ALL`].
    pub analytic_coverage: Option<[[Option<f64>; 3]; 3]>,
    /// Annotation files expected next to the image.
    pub annotations: Vec<String>,
}

/// An image with whatever annotations it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub pixels: RgbImage,
    pub ship_mask: Option<Mask>,
    pub boundaries: Option<BoundaryPair>,
    pub defect_masks: Option<MaskSet>,
    pub split: Split,
    pub meta: RecordMeta,
}

impl ImageRecord {
    pub fn dims(&self) -> (u32, u32) {
        self.pixels.dimensions()
    }

    /// Checks raster sizes and that every defect pixel lies on the ship.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        if let Some(s) = &self.ship_mask {
            if s.dims() != d {
                return Err(Error::Shape(format!(
                    "{}: ship mask {:?} vs image {d:?}",
                    self.id,
                    s.dims()
                )));
            }
        }
        if let Some(b) = &self.boundaries {
            if b.width() != d.0 as usize {
                return Err(Error::Shape(format!(
                    "{}: boundaries width {}",
                    self.id,
                    b.width()
                )));
            }
            b.validate()?;
        }
        if let Some(m) = &self.defect_masks {
            if m.dims() != d {
                return Err(Error::Shape(format!(
                    "{}: defect masks {:?} vs image {d:?}",
                    self.id,
                    m.dims()
                )));
            }
            if let Some(s) = &self.ship_mask {
                for (c, mask) in m.iter() {
                    if !mask.is_subset_of(s) {
                        return Err(Error::validation(
                            "defect_masks",
                            format!("{}: {} pixels outside the ship", self.id, c.name()),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Multi-label ground truth for a patch, in [`DefectClass::ALL`] order.
pub type Labels = [bool; 3];

/// A square crop with labels and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub pixels: RgbImage,
    pub labels: Labels,
    pub roi_ratio: f64,
    /// `(row, col)` of the top-left corner in the source image.
    pub origin: (u32, u32),
    pub source_id: String,
    /// Cropped per-class masks, for segmentation patches.
    pub masks: Option<MaskSet>,
    /// RoI pixels of the patch that lie inside the source image.
    pub roi: Option<Mask>,
}

impl Patch {
    pub fn size(&self) -> u32 {
        self.pixels.width()
    }
}
