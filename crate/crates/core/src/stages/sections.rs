use std::path::Path;

use hullscan_tensor::{Ctx, Tensor, Var};
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::common::{
    fit, images_to_tensor, load_model, save_model, Schedule, StepOutput, TrainLog,
};
use crate::data::ImageRecord;
use crate::error::{Error, Result};
use crate::nn::{range_aware_loss_var, SectionNet, SectionNetConfig};
use crate::raster::{
    augment, boundaries_to_section_map, crop_resize_ship, AugmentParams, AugmentRanges,
    BoundaryPair, CropTransform, Mask, SectionFallback, SectionMap, FRAME_HEIGHT, FRAME_WIDTH,
};

pub const SECTION_ARCH: &str = "section-net";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SectionTrainConfig {
    pub net: SectionNetConfig,
    pub schedule: Schedule,
    /// Augmented copies per record, on top of the original and its
    /// channel-flipped copy.
    pub multiplier: usize,
    pub augment: AugmentRanges,
}

impl Default for SectionTrainConfig {
    fn default() -> Self {
        Self {
            net: SectionNetConfig::desk(),
            schedule: Schedule {
                epochs: 4,
                batch: 4,
                lr: 2e-3,
                clip_norm: 5.0,
                epoch_samples: 0,
            },
            multiplier: 1,
            augment: AugmentRanges::default(),
        }
    }
}

/// A ship crop in the model frame with boundary targets.
#[derive(Debug, Clone)]
pub struct SectionSample {
    pub image: RgbImage,
    pub target: BoundaryPair,
}

/// Crops a labelled record to its ground-truth ship.
pub fn prepare_section_sample(record: &ImageRecord) -> Result<(SectionSample, CropTransform)> {
    let ship = record.ship_mask.as_ref().ok_or_else(|| {
        Error::validation(
            "ship_mask",
            format!("record {} has no ship mask", record.id),
        )
    })?;
    let b = record.boundaries.as_ref().ok_or_else(|| {
        Error::validation(
            "boundaries",
            format!("record {} has no boundaries", record.id),
        )
    })?;
    let (image, t) = crop_resize_ship(&record.pixels, ship)?;
    Ok((
        SectionSample {
            image,
            target: t.boundaries_to_output(b),
        },
        t,
    ))
}

/// Originals, `multiplier` rotated and shifted copies of each, and one
/// channel-flipped copy of each.
pub fn augment_section_dataset<R: Rng + ?Sized>(
    samples: &[SectionSample],
    multiplier: usize,
    ranges: &AugmentRanges,
    rng: &mut R,
) -> Result<Vec<SectionSample>> {
    let mut out = Vec::with_capacity(samples.len() * (multiplier + 2));
    for s in samples {
        out.push(s.clone());
        let (w, h) = s.image.dimensions();
        for _ in 0..multiplier {
            let p = ranges.sample(rng, w, h);
            let (image, target) = augment(&s.image, &s.target, &p, ranges)?;
            out.push(SectionSample { image, target });
        }
        if multiplier > 0 {
            let (image, target) =
                augment(&s.image, &s.target, &AugmentParams::channel_flip(), ranges)?;
            out.push(SectionSample { image, target });
        }
    }
    Ok(out)
}

/// Curves and masks as `[n, 2, w]` tensors.
fn target_tensors(targets: &[&BoundaryPair]) -> (Tensor<f32>, Tensor<f32>) {
    let w = targets[0].width();
    let mut y = Vec::with_capacity(targets.len() * 2 * w);
    let mut m = Vec::with_capacity(targets.len() * 2 * w);
    for t in targets {
        for i in 0..2 {
            for j in 0..w {
                let valid = t.valid[i][j] && t.y[i][j].is_finite();
                y.push(if valid { t.y[i][j] as f32 } else { 0.0 });
                m.push(valid as u8 as f32);
            }
        }
    }
    (
        Tensor::from_vec(&[targets.len(), 2, w], y),
        Tensor::from_vec(&[targets.len(), 2, w], m),
    )
}

#[derive(Debug, Clone)]
pub struct SectionModel {
    pub net: SectionNet<f32>,
    pub cfg: SectionNetConfig,
}

pub fn train_section_model(
    samples: &[SectionSample],
    cfg: &SectionTrainConfig,
    seed: u64,
) -> Result<(SectionModel, TrainLog)> {
    cfg.schedule.validate("sections.schedule")?;
    if samples.is_empty() {
        return Err(Error::Empty("no section samples".into()));
    }
    for s in samples {
        if s.image.dimensions() != (cfg.net.input.0 as u32, cfg.net.input.1 as u32) {
            return Err(Error::Shape(format!(
                "section sample is {:?}",
                s.image.dimensions()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = SectionNet::new(&cfg.net, &mut rng)?;
    let log = fit(
        &mut net,
        samples.len(),
        &cfg.schedule,
        seed,
        "sections",
        |net, ctx, batch| {
            let imgs: Vec<&RgbImage> = batch.iter().map(|&i| &samples[i].image).collect();
            let targets: Vec<&BoundaryPair> = batch.iter().map(|&i| &samples[i].target).collect();
            let (y, m) = target_tensors(&targets);
            let pred = net.forward(ctx, &Var::constant(images_to_tensor(&imgs)))?;
            let scale = 1.0 / (batch.len() * y.dim(2)) as f32;
            Ok(StepOutput {
                loss: range_aware_loss_var(&pred, &y, &m)?.mul_scalar(scale),
                cos: None,
            })
        },
    )?;
    Ok((
        SectionModel {
            net,
            cfg: cfg.net.clone(),
        },
        log,
    ))
}

impl SectionModel {
    /// Raw `[2][w]` curves for a frame-sized crop.
    pub fn predict_curves(&self, crop: &RgbImage) -> Result<[Vec<f64>; 2]> {
        if crop.dimensions() != (FRAME_WIDTH, FRAME_HEIGHT) {
            return Err(Error::Shape(format!(
                "section input must be {FRAME_WIDTH}x{FRAME_HEIGHT}"
            )));
        }
        let out = self
            .net
            .forward(&mut Ctx::eval(), &Var::constant(images_to_tensor(&[crop])))?;
        let v = out.value().to_f64_vec();
        let w = out.dim(2);
        Ok([v[..w].to_vec(), v[w..2 * w].to_vec()])
    }

    /// Curves valid wherever the crop's ship mask occupies the column.
    pub fn predict_boundaries(&self, crop: &RgbImage, ship_crop: &Mask) -> Result<BoundaryPair> {
        let mut y = self.predict_curves(crop)?;
        let [upper, lower] = &mut y;
        for (u, l) in upper.iter_mut().zip(lower.iter_mut()) {
            *u = u.clamp(0.0, 1.0);
            *l = l.clamp(0.0, 1.0);
            // Crossed curves collapse the middle band to nothing.
            if *l < *u {
                let mid = 0.5 * (*u + *l);
                *u = mid;
                *l = mid;
            }
        }
        let (w, h) = ship_crop.dims();
        let occupied: Vec<bool> = (0..w)
            .map(|x| (0..h).any(|yy| ship_crop.get(x, yy)))
            .collect();
        BoundaryPair::new(y, [occupied.clone(), occupied])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_model(path, &self.net, SECTION_ARCH, &self.cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (net, cfg) = load_model(path, SECTION_ARCH, |c: &SectionNetConfig| {
            SectionNet::new(c, &mut ChaCha8Rng::seed_from_u64(0))
        })?;
        Ok(Self { net, cfg })
    }
}

/// Crop-frame section map for predicted curves over a ship mask.
pub fn crop_section_map(ship_crop: &Mask, b: &BoundaryPair) -> Result<SectionMap> {
    boundaries_to_section_map(ship_crop, b, SectionFallback::default())
}

/// Source-frame section map from crop-frame curves.
pub fn source_section_map(
    ship: &Mask,
    t: &CropTransform,
    crop_curves: &BoundaryPair,
) -> Result<SectionMap> {
    boundaries_to_section_map(
        ship,
        &t.boundaries_to_source(crop_curves),
        SectionFallback::default(),
    )
}
