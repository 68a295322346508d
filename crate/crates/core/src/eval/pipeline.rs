use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::report::write_json;
use crate::data::{DefectClass, ImageRecord, MaskSet, Split};
use crate::error::{Error, Result};
use crate::raster::{
    coverage, crop_resize_ship, suppress_ts_fouling, DefectReport, Mask, Section, SectionMap,
    SECTION_PALETTE,
};
use crate::stages::{
    assemble_defect_map, source_section_map, DefectClassifier, DefectSegmenter, PatchPrediction,
    SectionModel, ShipSegmenter,
};

/// Inference-time switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub suppress_ts_fouling: bool,
    /// Refine the segmenter's masks with patch classification.
    pub use_classifier: bool,
    pub cls_threshold: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            suppress_ts_fouling: true,
            use_classifier: true,
            cls_threshold: 0.5,
        }
    }
}

/// Checkpoint locations plus options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub ship: PathBuf,
    pub sections: PathBuf,
    pub defects: PathBuf,
    pub classifier: PathBuf,
    #[serde(default)]
    pub options: PipelineOptions,
}

impl PipelineConfig {
    /// Standard checkpoint names under `models`.
    pub fn in_dir(models: &Path) -> Self {
        Self {
            ship: models.join("ship.ckpt"),
            sections: models.join("sections.ckpt"),
            defects: models.join("student.ckpt"),
            classifier: models.join("classifier.ckpt"),
            options: PipelineOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub ship: ShipSegmenter,
    pub sections: SectionModel,
    pub defects: DefectSegmenter,
    pub classifier: DefectClassifier,
    pub options: PipelineOptions,
}

/// Everything one image produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: DefectReport,
    pub ship: Option<Mask>,
    pub sections: Option<SectionMap>,
    /// Segmenter masks restricted to the ship.
    pub segmented: Option<MaskSet>,
    /// Final per-pixel maps after classification and suppression.
    pub defects: Option<MaskSet>,
    pub patches: Vec<PatchPrediction>,
}

fn load_stage<T>(
    stage: &'static str,
    path: &Path,
    load: impl FnOnce(&Path) -> Result<T>,
) -> Result<T> {
    if !path.is_file() {
        return Err(Error::validation(
            stage,
            format!("checkpoint {} does not exist", path.display()),
        ));
    }
    load(path).map_err(|e| match e {
        Error::Io(_) | Error::Checkpoint(_) | Error::Json(_) => {
            Error::validation(stage, format!("checkpoint {}: {e}", path.display()))
        }
        e => e,
    })
}

impl Pipeline {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        Ok(Self {
            ship: load_stage("ship", &cfg.ship, ShipSegmenter::load)?,
            sections: load_stage("sections", &cfg.sections, SectionModel::load)?,
            defects: load_stage("defects", &cfg.defects, DefectSegmenter::load)?,
            classifier: load_stage("classifier", &cfg.classifier, DefectClassifier::load)?,
            options: cfg.options,
        })
    }

    /// Runs all stages on one image. A missing ship yields an empty report
    /// with a diagnostic; other failures name the stage.
    pub fn run(&self, id: &str, img: &RgbImage) -> Result<PipelineOutput> {
        let ship = match self.ship.segment_ship(img) {
            Ok(m) => m,
            Err(Error::NoShip(msg)) => {
                let mut report = DefectReport::empty(id);
                report.diagnostics.push(format!("no ship: {msg}"));
                return Ok(PipelineOutput {
                    report,
                    ship: None,
                    sections: None,
                    segmented: None,
                    defects: None,
                    patches: Vec::new(),
                });
            }
            Err(e) => return Err(e.in_stage("ship")),
        };
        let sections = self
            .section_map(img, &ship)
            .map_err(|e| e.in_stage("sections"))?;
        let segmented = self
            .defects
            .segment_defects(img)
            .and_then(|s| s.masks.try_map(|_, m| m.intersection(&ship)))
            .map_err(|e| e.in_stage("defects"))?;
        let (mut defects, patches) = if self.options.use_classifier {
            self.classify(id, img, &segmented)
                .map_err(|e| e.in_stage("classifier"))?
        } else {
            (segmented.clone(), Vec::new())
        };
        if self.options.suppress_ts_fouling {
            defects = suppress_ts_fouling(&sections, &defects).map_err(|e| e.in_stage("report"))?;
        }
        let report = coverage(id, &sections, &defects).map_err(|e| e.in_stage("report"))?;
        Ok(PipelineOutput {
            report,
            ship: Some(ship),
            sections: Some(sections),
            segmented: Some(segmented),
            defects: Some(defects),
            patches,
        })
    }

    pub fn section_map(&self, img: &RgbImage, ship: &Mask) -> Result<SectionMap> {
        let (crop, t) = crop_resize_ship(img, ship)?;
        let b = self
            .sections
            .predict_boundaries(&crop, &t.crop_mask(ship))?;
        source_section_map(ship, &t, &b)
    }

    fn classify(
        &self,
        id: &str,
        img: &RgbImage,
        segmented: &MaskSet,
    ) -> Result<(MaskSet, Vec<PatchPrediction>)> {
        let record = ImageRecord {
            id: id.to_string(),
            pixels: img.clone(),
            ship_mask: None,
            boundaries: None,
            defect_masks: None,
            split: Split::Test,
            meta: Default::default(),
        };
        let (patches, preds) = self.classifier.classify_record(&record, &segmented.any())?;
        let out = assemble_defect_map(segmented, &patches, &preds, self.options.cls_threshold)?;
        Ok((out, preds))
    }
}

fn blend(px: &mut Rgb<u8>, color: [u8; 3], alpha: f64) {
    for c in 0..3 {
        px[c] = (px[c] as f64 * (1.0 - alpha) + color[c] as f64 * alpha).round() as u8;
    }
}

/// Sections tinted over the input.
pub fn section_overlay(img: &RgbImage, sections: &SectionMap) -> RgbImage {
    let mut out = img.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        let s = sections.get(x, y);
        if s != Section::Background {
            blend(px, SECTION_PALETTE[s as usize], 0.4);
        }
    }
    out
}

/// Defect classes painted over the input; later classes in
/// [`DefectClass::ALL`] order draw on top.
pub fn defect_overlay(img: &RgbImage, defects: &MaskSet) -> RgbImage {
    let mut out = img.clone();
    for c in DefectClass::ALL {
        let m = defects.get(c);
        for (x, y, px) in out.enumerate_pixels_mut() {
            if m.get(x, y) {
                blend(px, c.color(), 0.6);
            }
        }
    }
    out
}

/// Writes `<id>.json`, the patch dump and overlay PNGs into `dir`.
pub fn write_output(dir: &Path, img: &RgbImage, out: &PipelineOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let id = &out.report.image_id;
    write_json(&dir.join(format!("{id}.json")), &out.report)?;
    write_json(&dir.join(format!("{id}.patches.json")), &out.patches)?;
    if let Some(s) = &out.sections {
        section_overlay(img, s).save(dir.join(format!("{id}.sections.png")))?;
    }
    if let Some(d) = &out.defects {
        defect_overlay(img, d).save(dir.join(format!("{id}.defects.png")))?;
    }
    Ok(())
}
