use std::path::Path;

use hullscan_tensor::{Ctx, Var};
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::common::{
    fit, images_to_tensor, load_model, logits_to_mask, masks_to_tensor, save_model, Schedule,
    StepOutput, TrainLog,
};
use crate::data::{
    crop_reflect_image, stitch_mask, tile_origins, DefectClass, ImageRecord, LabelSource, MaskSet,
    Patch,
};
use crate::error::{Error, Result};
use crate::nn::{bce_with_logits, seg_channel, Unet, UnetConfig, SEG_CHANNELS};
use crate::raster::Mask;

pub const DEFECT_ARCH: &str = "defect-unet";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[default]
    Teacher,
    Student,
}

/// How teacher predictions are merged into the human labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    #[default]
    Union,
    /// Fouling-dominated tiles keep only pixels both sources agree on;
    /// other tiles keep the human labels.
    Intersection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefectTrainConfig {
    pub net: UnetConfig,
    pub teacher: Schedule,
    pub student: Schedule,
    pub patch: u32,
    pub min_defect_frac: f64,
    pub pos_weight: f64,
    pub threshold: f64,
    pub fusion: FusionMode,
}

impl Default for DefectTrainConfig {
    fn default() -> Self {
        Self {
            net: UnetConfig::desk(3),
            teacher: Schedule {
                epochs: 3,
                batch: 4,
                lr: 3e-3,
                clip_norm: 5.0,
                epoch_samples: 320,
            },
            student: Schedule {
                epochs: 6,
                batch: 4,
                lr: 3e-3,
                clip_norm: 5.0,
                epoch_samples: 320,
            },
            patch: 224,
            min_defect_frac: 0.01,
            pos_weight: 5.0,
            threshold: 0.5,
            fusion: FusionMode::Union,
        }
    }
}

impl DefectTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.teacher.validate("defects.teacher")?;
        self.student.validate("defects.student")?;
        if self.patch == 0 || !self.patch.is_multiple_of(32) {
            return Err(Error::validation(
                "defects.patch",
                "must be a positive multiple of 32",
            ));
        }
        if !(0.0..=1.0).contains(&self.min_defect_frac) {
            return Err(Error::validation(
                "defects.min_defect_frac",
                "must lie in [0, 1]",
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::validation("defects.threshold", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Three-channel defect segmenter; teacher and student share the layout.
#[derive(Debug, Clone)]
pub struct DefectSegmenter {
    pub net: Unet<f32>,
    pub cfg: UnetConfig,
    pub role: Role,
    pub patch: u32,
    pub threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    net: UnetConfig,
    role: Role,
    patch: u32,
    threshold: f64,
}

/// Per-class masks and their union.
#[derive(Debug, Clone)]
pub struct DefectSegmentation {
    pub masks: MaskSet,
    pub roi: Mask,
}

fn flip_mask(m: &Mask) -> Mask {
    let w = m.width();
    Mask::from_fn(w, m.height(), |x, y| m.get(w - 1 - x, y))
}

/// Trains on segmentation patches; each sample is mirrored left-right with
/// probability one half.
pub fn train_defect_segmenter(
    patches: &[Patch],
    cfg: &DefectTrainConfig,
    role: Role,
    seed: u64,
) -> Result<(DefectSegmenter, TrainLog)> {
    cfg.validate()?;
    if patches.is_empty() {
        return Err(Error::Empty("no segmentation patches".into()));
    }
    if patches
        .iter()
        .any(|p| p.masks.is_none() || p.size() != cfg.patch)
    {
        return Err(Error::validation(
            "patches",
            "segmentation patches need masks and the configured size",
        ));
    }
    let sched = match role {
        Role::Teacher => cfg.teacher,
        Role::Student => cfg.student,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Unet::new(&cfg.net, &mut rng);
    let label = match role {
        Role::Teacher => "teacher",
        Role::Student => "student",
    };
    let log = fit(
        &mut net,
        patches.len(),
        &sched,
        seed,
        label,
        |net, ctx, batch| {
            let mut imgs = Vec::with_capacity(batch.len());
            let mut masks = Vec::with_capacity(batch.len());
            for &i in batch {
                let p = &patches[i];
                let set = p.masks.as_ref().expect("checked above");
                let chans: Vec<Mask> = SEG_CHANNELS.iter().map(|&c| set.get(c).clone()).collect();
                if ctx.rng().gen_bool(0.5) {
                    imgs.push(image::imageops::flip_horizontal(&p.pixels));
                    masks.push(chans.iter().map(flip_mask).collect::<Vec<_>>());
                } else {
                    imgs.push(p.pixels.clone());
                    masks.push(chans);
                }
            }
            let img_refs: Vec<&RgbImage> = imgs.iter().collect();
            let mask_refs: Vec<Vec<&Mask>> = masks.iter().map(|m| m.iter().collect()).collect();
            let logits = net.forward(ctx, &Var::constant(images_to_tensor(&img_refs)))?;
            Ok(StepOutput {
                loss: bce_with_logits(&logits, &masks_to_tensor(&mask_refs), cfg.pos_weight),
                cos: None,
            })
        },
    )?;
    Ok((
        DefectSegmenter {
            net,
            cfg: cfg.net.clone(),
            role,
            patch: cfg.patch,
            threshold: cfg.threshold,
        },
        log,
    ))
}

impl DefectSegmenter {
    /// Tiles the image, thresholds each class channel and stitches the
    /// tiles back at full resolution.
    pub fn segment_defects(&self, img: &RgbImage) -> Result<DefectSegmentation> {
        let (w, h) = img.dimensions();
        let mut masks = MaskSet::empty(w, h);
        let origins = tile_origins(w, h, self.patch);
        for chunk in origins.chunks(4) {
            let tiles: Vec<RgbImage> = chunk
                .iter()
                .map(|&(r, c)| crop_reflect_image(img, r, c, self.patch))
                .collect();
            let refs: Vec<&RgbImage> = tiles.iter().collect();
            let logits = self
                .net
                .forward(&mut Ctx::eval(), &Var::constant(images_to_tensor(&refs)))?;
            for (b, &(row, col)) in chunk.iter().enumerate() {
                for class in DefectClass::ALL {
                    let tile =
                        logits_to_mask(logits.value(), b, seg_channel(class), self.threshold);
                    stitch_mask(masks.get_mut(class), &tile, row, col);
                }
            }
        }
        let roi = masks.any();
        Ok(DefectSegmentation { masks, roi })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let stored = Stored {
            net: self.cfg.clone(),
            role: self.role,
            patch: self.patch,
            threshold: self.threshold,
        };
        save_model(path, &self.net, DEFECT_ARCH, &stored)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (net, s): (Unet<f32>, Stored) = load_model(path, DEFECT_ARCH, |s: &Stored| {
            if s.net.classes != 3 {
                return Err(Error::Shape(format!(
                    "defect segmenter needs 3 classes, got {}",
                    s.net.classes
                )));
            }
            Ok(Unet::new(&s.net, &mut ChaCha8Rng::seed_from_u64(0)))
        })?;
        Ok(Self {
            net,
            cfg: s.net,
            role: s.role,
            patch: s.patch,
            threshold: s.threshold,
        })
    }
}

/// Teacher predictions for each record, restricted to the record's ship
/// mask when it has one.
pub fn pseudo_label(teacher: &DefectSegmenter, records: &[ImageRecord]) -> Result<Vec<MaskSet>> {
    records
        .iter()
        .map(|r| {
            let seg = teacher.segment_defects(&r.pixels)?;
            match &r.ship_mask {
                Some(ship) => seg.masks.try_map(|_, m| m.intersection(ship)),
                None => Ok(seg.masks),
            }
        })
        .collect()
}

/// Per-class union of human and pseudo labels.
pub fn fuse_labels(human: &MaskSet, pseudo: &MaskSet) -> Result<MaskSet> {
    human.zip_with(pseudo, |a, b| a.union(b))
}

/// Intersection fusion over `tile`-sized blocks: where fouling makes up
/// more than half of the human-labelled defect pixels, keep only pixels
/// both sources mark; elsewhere keep the human labels.
pub fn fuse_intersection(human: &MaskSet, pseudo: &MaskSet, tile: u32) -> Result<MaskSet> {
    if human.dims() != pseudo.dims() {
        return Err(Error::Shape(format!(
            "label sets {:?} vs {:?}",
            human.dims(),
            pseudo.dims()
        )));
    }
    let (w, h) = human.dims();
    let mut out = human.clone();
    let any = human.any();
    let fouling = human.get(DefectClass::Fouling);
    for (row, col) in tile_origins(w, h, tile) {
        let (x1, y1) = ((col + tile).min(w), (row + tile).min(h));
        let (mut total, mut foul) = (0usize, 0usize);
        for y in row..y1 {
            for x in col..x1 {
                total += any.get(x, y) as usize;
                foul += fouling.get(x, y) as usize;
            }
        }
        if total == 0 || foul * 2 <= total {
            continue;
        }
        for class in DefectClass::ALL {
            let p = pseudo.get(class).clone();
            let m = out.get_mut(class);
            for y in row..y1 {
                for x in col..x1 {
                    if m.get(x, y) && !p.get(x, y) {
                        m.set(x, y, false);
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn fuse(human: &MaskSet, pseudo: &MaskSet, mode: FusionMode, tile: u32) -> Result<MaskSet> {
    match mode {
        FusionMode::Union => fuse_labels(human, pseudo),
        FusionMode::Intersection => fuse_intersection(human, pseudo, tile),
    }
}

/// Copies of `records` whose defect masks are the fused labels.
pub fn fused_records(
    records: &[ImageRecord],
    pseudo: &[MaskSet],
    mode: FusionMode,
    tile: u32,
) -> Result<Vec<ImageRecord>> {
    if records.len() != pseudo.len() {
        return Err(Error::Shape(format!(
            "{} records vs {} pseudo label sets",
            records.len(),
            pseudo.len()
        )));
    }
    records
        .iter()
        .zip(pseudo)
        .map(|(r, p)| {
            let human = r.defect_masks.as_ref().ok_or_else(|| {
                Error::validation("defect_masks", format!("{} has no human labels", r.id))
            })?;
            let mut out = r.clone();
            out.defect_masks = Some(fuse(human, p, mode, tile)?);
            out.meta.label_source = LabelSource::Fused;
            Ok(out)
        })
        .collect()
}
