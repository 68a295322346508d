use std::path::Path;

use hullscan_tensor::{Ctx, Var};
use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::common::{
    fit, images_to_tensor, load_model, logits_to_mask, masks_to_tensor, save_model, Schedule,
    StepOutput, TrainLog,
};
use crate::data::ImageRecord;
use crate::error::{Error, Result};
use crate::nn::{bce_with_logits, Unet, UnetConfig};
use crate::raster::{resize_image, resize_mask, Mask};

pub const SHIP_ARCH: &str = "ship-unet";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShipTrainConfig {
    pub net: UnetConfig,
    /// Network input size; images are resized to it.
    pub input: (u32, u32),
    pub schedule: Schedule,
    pub threshold: f64,
}

impl Default for ShipTrainConfig {
    fn default() -> Self {
        Self {
            net: UnetConfig::desk(1),
            input: (320, 256),
            schedule: Schedule {
                epochs: 3,
                batch: 2,
                lr: 3e-3,
                clip_norm: 5.0,
                epoch_samples: 100,
            },
            threshold: 0.5,
        }
    }
}

/// Single-class segmenter isolating the most prominent ship.
#[derive(Debug, Clone)]
pub struct ShipSegmenter {
    pub net: Unet<f32>,
    pub cfg: UnetConfig,
    pub input: (u32, u32),
    pub threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    net: UnetConfig,
    input: (u32, u32),
    threshold: f64,
}

fn to_input(img: &RgbImage, (w, h): (u32, u32)) -> RgbImage {
    if img.dimensions() == (w, h) {
        img.clone()
    } else {
        resize_image(img, w, h)
    }
}

impl ShipTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate("ship.schedule")?;
        if self.input.0 == 0
            || self.input.1 == 0
            || !self.input.0.is_multiple_of(32)
            || !self.input.1.is_multiple_of(32)
        {
            return Err(Error::validation(
                "ship.input",
                "sides must be positive multiples of 32",
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::validation("ship.threshold", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Trains on the records' ship masks, resized to the network input.
pub fn train_ship_segmenter(
    records: &[ImageRecord],
    cfg: &ShipTrainConfig,
    seed: u64,
) -> Result<(ShipSegmenter, TrainLog)> {
    cfg.validate()?;
    let (w, h) = cfg.input;
    let mut pairs = Vec::new();
    for r in records {
        if let Some(ship) = &r.ship_mask {
            let m = if ship.dims() == (w, h) {
                ship.clone()
            } else {
                resize_mask(ship, w, h)
            };
            pairs.push((to_input(&r.pixels, cfg.input), m));
        }
    }
    if pairs.is_empty() {
        return Err(Error::Empty("no training records with ship masks".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Unet::new(&cfg.net, &mut rng);
    let log = fit(
        &mut net,
        pairs.len(),
        &cfg.schedule,
        seed,
        "ship",
        |net, ctx, batch| {
            let imgs: Vec<&RgbImage> = batch.iter().map(|&i| &pairs[i].0).collect();
            let masks: Vec<Vec<&Mask>> = batch.iter().map(|&i| vec![&pairs[i].1]).collect();
            let x = Var::constant(images_to_tensor(&imgs));
            let logits = net.forward(ctx, &x)?;
            Ok(StepOutput {
                loss: bce_with_logits(&logits, &masks_to_tensor(&masks), 1.0),
                cos: None,
            })
        },
    )?;
    Ok((
        ShipSegmenter {
            net,
            cfg: cfg.net.clone(),
            input: cfg.input,
            threshold: cfg.threshold,
        },
        log,
    ))
}

impl ShipSegmenter {
    /// Thresholded prediction at the network input size, before component
    /// filtering.
    pub fn raw_mask(&self, img: &RgbImage) -> Result<Mask> {
        let x = Var::constant(images_to_tensor(&[&to_input(img, self.input)]));
        let logits = self.net.forward(&mut Ctx::eval(), &x)?;
        Ok(logits_to_mask(logits.value(), 0, 0, self.threshold))
    }

    /// Ship mask at the image's own resolution, reduced to its largest
    /// 4-connected component.
    pub fn segment_ship(&self, img: &RgbImage) -> Result<Mask> {
        let raw = self.raw_mask(img)?;
        keep_prominent(&raw, img.width(), img.height())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let stored = Stored {
            net: self.cfg.clone(),
            input: self.input,
            threshold: self.threshold,
        };
        save_model(path, &self.net, SHIP_ARCH, &stored)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (net, stored): (Unet<f32>, Stored) = load_model(path, SHIP_ARCH, |s: &Stored| {
            Ok(Unet::new(&s.net, &mut ChaCha8Rng::seed_from_u64(0)))
        })?;
        Ok(Self {
            net,
            cfg: stored.net,
            input: stored.input,
            threshold: stored.threshold,
        })
    }
}

/// Largest component of a network-sized prediction, resized to `w x h`.
pub fn keep_prominent(frame_mask: &Mask, w: u32, h: u32) -> Result<Mask> {
    if frame_mask.is_empty() {
        return Err(Error::NoShip("no pixel above the ship threshold".into()));
    }
    let main = frame_mask.largest_component();
    let out = if main.dims() == (w, h) {
        main
    } else {
        resize_mask(&main, w, h).largest_component()
    };
    if out.is_empty() {
        return Err(Error::NoShip("ship vanished after resizing".into()));
    }
    Ok(out)
}
